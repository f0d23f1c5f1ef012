"""Exception hierarchy shared by every stage of the pipeline."""


class FarfieldError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(FarfieldError, ValueError):
    pass


class PlacementError(FarfieldError, ValueError):
    pass


class SamplingExhaustedError(FarfieldError, RuntimeError):
    pass


class ConfigurationError(FarfieldError, ValueError):
    pass


class FormatError(FarfieldError, ValueError):
    pass


class DegenerateSignalError(FarfieldError, ValueError):
    pass


class ManifestError(FarfieldError):
    """Raised when manifest rows reference assets that do not exist.

    ``missing`` holds every missing id so callers can report them at once.
    """

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class StorageError(FarfieldError, OSError):
    pass


class InputError(FarfieldError, ValueError):
    pass


class ShapeError(FarfieldError, ValueError):
    pass


class ChannelError(FarfieldError, IndexError):
    pass


class ValidationError(FarfieldError, ValueError):
    pass


class TrainingError(FarfieldError, RuntimeError):
    pass
