"""Network input features: reference-channel spectrum plus cosIPD of four pairs.

The tensor stacks, along frequency, ``Re(X0)``, ``Im(X0)`` and the cosine
of the inter-channel phase difference for each selected microphone pair,
giving ``6F`` rows per frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ChannelError, ConfigurationError, FormatError, ShapeError
from .geometry import Topology
from .spectral import Spectrogram, StftConfig, stft


@dataclass(frozen=True)
class PairSelection:
    """Eight channels to analyse and four IPD pairs.

    ``channel_subset`` holds original 0-based channel indices; ``pairs`` index
    into ``channel_subset``. Position 0 of the subset is the reference mic.
    """

    channel_subset: tuple
    pairs: tuple

    def __post_init__(self):
        if len(set(self.channel_subset)) != len(self.channel_subset):
            raise ConfigurationError("channel_subset has repeated channels")
        if len(self.pairs) != 4:
            raise ConfigurationError("exactly four pairs are required")
        for i, j in self.pairs:
            if i == j or not (0 <= i < len(self.channel_subset) and 0 <= j < len(self.channel_subset)):
                raise ConfigurationError(f"invalid pair ({i}, {j})")

    @property
    def reference(self) -> int:
        return self.channel_subset[0]

    def original_pairs(self) -> list[tuple[int, int]]:
        """Pairs as 0-based original channel indices."""
        return [(self.channel_subset[i], self.channel_subset[j]) for i, j in self.pairs]

    def describe(self) -> dict:
        """1-based numbering, as used in reports."""
        return {
            "channels": [c + 1 for c in self.channel_subset],
            "pairs": [[i + 1, j + 1] for i, j in self.original_pairs()],
        }


def default_pairs(topology) -> PairSelection:
    """Channel subset and pairs used by the baseline for each array type.

    Linear arrays use their first eight channels with pairs (1,5), (2,6),
    (3,7), (4,8). The circular array keeps every other channel (1, 3, ..., 15),
    so the same subset positions map to original pairs (1,9), (3,11), (5,13),
    (7,15).
    """
    topology = Topology.parse(topology)
    pairs = ((0, 4), (1, 5), (2, 6), (3, 7))
    if topology is Topology.CIRCULAR16:
        return PairSelection(tuple(range(0, 16, 2)), pairs)
    if topology in (Topology.LINEAR_UNIFORM8, Topology.LINEAR_NONUNIFORM8, Topology.DUAL_LINEAR16):
        return PairSelection(tuple(range(8)), pairs)
    raise ConfigurationError(f"no default pairs for {topology}")


def _bins(x):
    return x.bins if isinstance(x, Spectrogram) else np.asarray(x)


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - phase, 2 * np.pi)


def ipd(spec_i, spec_j) -> np.ndarray:
    """Wrapped phase difference ``angle(O_i) - angle(O_j)`` per bin."""
    a, b = _bins(spec_i), _bins(spec_j)
    if a.shape != b.shape:
        raise ShapeError(f"spectrogram shapes differ: {a.shape} vs {b.shape}")
    return wrap_phase(np.angle(a) - np.angle(b))


@dataclass
class FeatureTensor:
    values: np.ndarray  # (6F, T)
    n_bins: int
    config: StftConfig | None = None

    @property
    def n_frames(self) -> int:
        return self.values.shape[-1]

    def block(self, k: int) -> np.ndarray:
        f = self.n_bins
        return self.values[k * f:(k + 1) * f]


def stack_features(spectra: np.ndarray, pairs) -> np.ndarray:
    """Feature rows from subset spectra.

    ``spectra`` is ``(8, F, ...)`` complex, ordered like the channel subset;
    the trailing axes (frames, or nothing for a single frame) carry through.
    Returns ``(6F, ...)``.
    """
    ref = spectra[0]
    blocks = [ref.real, ref.imag]
    blocks += [np.cos(ipd(spectra[i], spectra[j])) for i, j in pairs]
    return np.concatenate(blocks, axis=0)


def select_channels(samples: np.ndarray, selection: PairSelection) -> np.ndarray:
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise ShapeError("expected (channels, samples)")
    missing = [c for c in selection.channel_subset if c >= samples.shape[0]]
    if missing:
        raise ChannelError(f"clip has {samples.shape[0]} channels; missing {[c + 1 for c in missing]}")
    return samples[list(selection.channel_subset)]


def assemble_features(clip, selection: PairSelection, stft_config: StftConfig | None = None,
                      normalize: bool = False) -> FeatureTensor:
    """Build the ``6F x T`` input tensor for a multichannel clip.

    ``clip`` is a ``MultichannelClip`` or a ``(channels, samples)`` array.
    ``normalize`` applies per-utterance mean/variance normalization per row.
    """
    stft_config = stft_config or StftConfig()
    samples = getattr(clip, "samples", clip)
    spec = stft(select_channels(samples, selection), stft_config).bins
    values = stack_features(spec, selection.pairs)
    if normalize:
        values = (values - values.mean(axis=1, keepdims=True)) / (values.std(axis=1, keepdims=True) + 1e-8)
    return FeatureTensor(values, stft_config.n_bins, stft_config)


_FEAT_MAGIC = b"FFFT"


def dump_features(path, features: FeatureTensor) -> None:
    """Header (magic, F, T, block_count=6) then row-major float32 (6F x T)."""
    f, t = features.n_bins, features.n_frames
    with open(path, "wb") as fh:
        fh.write(_FEAT_MAGIC + struct.pack("<III", f, t, 6))
        fh.write(np.ascontiguousarray(features.values, dtype="<f4").tobytes())


def load_features(path) -> FeatureTensor:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != _FEAT_MAGIC:
            raise FormatError(f"{path}: not a feature dump")
        f, t, blocks = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != blocks * f * t:
        raise FormatError(f"{path}: payload size mismatch")
    return FeatureTensor(data.reshape(blocks * f, t).astype(np.float64), f)
