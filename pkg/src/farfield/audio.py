"""WAV input/output.

Audio is handled as float64 arrays shaped ``(channels, samples)``; mono
helpers squeeze the channel axis.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import FormatError, StorageError

DEFAULT_SAMPLE_RATE = 16000


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read PCM16/PCM32/float WAV into a ``(channels, samples)`` float array."""
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except (ValueError, OSError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return np.ascontiguousarray(data), int(rate)


def read_mono(path, expected_rate: int | None = None) -> np.ndarray:
    data, rate = read_wav(path)
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.shape[0] != 1:
        raise FormatError(f"{path}: expected mono audio, found {data.shape[0]} channels")
    return data[0]


def write_wav(path, data: np.ndarray, sample_rate: int = DEFAULT_SAMPLE_RATE) -> None:
    """Write float32 WAV. ``data`` is mono ``(samples,)`` or ``(channels, samples)``."""
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.T
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(str(path), int(sample_rate), np.ascontiguousarray(data, dtype=np.float32))
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
