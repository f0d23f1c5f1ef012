"""STFT analysis and overlap-add synthesis.

Frames of ``frame_length`` samples are windowed and zero-padded to
``fft_size`` before the real FFT. Synthesis uses the same window and
divides by the summed squared window, so any configuration whose squared
window overlap-adds to a constant reconstructs its input exactly.

Two padding policies are supported. ``center`` reflect-pads half a frame on
both sides (frame ``t`` is centred on sample ``t * hop``). ``causal`` pads
``frame - hop`` zeros on the left only, so frame ``t`` ends at input sample
``t * hop + hop - 1`` and never looks ahead; :class:`StreamingStft` and
:class:`StreamingIstft` reproduce that policy chunk by chunk.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .audio import DEFAULT_SAMPLE_RATE
from .errors import ConfigurationError, FormatError, InputError

MAX_FRAME_MS = 40.0
_WINDOWS = ("hann", "sqrt_hann")
_PADDINGS = ("center", "causal")


@dataclass(frozen=True)
class StftConfig:
    frame_ms: float = 20.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window: str = "sqrt_hann"
    sample_rate: int = DEFAULT_SAMPLE_RATE
    padding: str = "center"

    def __post_init__(self):
        if self.window not in _WINDOWS:
            raise ConfigurationError(f"window must be one of {_WINDOWS}")
        if self.padding not in _PADDINGS:
            raise ConfigurationError(f"padding must be one of {_PADDINGS}")
        if self.hop_length <= 0 or self.frame_length <= 0:
            raise ConfigurationError("frame and hop must be positive")
        if self.hop_length > self.frame_length:
            raise ConfigurationError("hop must not exceed the frame length")
        if self.frame_length > self.fft_size:
            raise ConfigurationError(f"frame of {self.frame_length} samples exceeds fft_size {self.fft_size}")
        if self.frame_ms > MAX_FRAME_MS:
            raise ConfigurationError(f"frame_ms {self.frame_ms} exceeds the {MAX_FRAME_MS} ms limit")

    @property
    def frame_length(self) -> int:
        return int(round(self.frame_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def with_padding(self, padding: str) -> "StftConfig":
        return replace(self, padding=padding)


@dataclass
class Spectrogram:
    bins: np.ndarray  # complex, (..., F, T)
    config: StftConfig
    length: int
    channel_id: int = 0

    @property
    def shape(self):
        return self.bins.shape


def window(config: StftConfig) -> np.ndarray:
    n = config.frame_length
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)  # periodic
    return np.sqrt(hann) if config.window == "sqrt_hann" else hann


def ola_envelope(config: StftConfig, n_frames: int) -> np.ndarray:
    w2 = window(config) ** 2
    hop, frame = config.hop_length, config.frame_length
    env = np.zeros((n_frames - 1) * hop + frame)
    for t in range(n_frames):
        env[t * hop:t * hop + frame] += w2
    return env


def is_cola(config: StftConfig, rtol: float = 1e-10) -> bool:
    """True if the squared window overlap-adds to a constant."""
    hop, frame = config.hop_length, config.frame_length
    w2 = window(config) ** 2
    total = np.zeros(hop)
    for start in range(0, frame, hop):
        seg = w2[start:start + hop]
        total[:seg.size] += seg
    return bool(np.ptp(total) <= rtol * np.max(total))


def num_frames(length: int, config: StftConfig) -> int:
    hop, frame = config.hop_length, config.frame_length
    if config.padding == "center":
        padded = length + 2 * (frame // 2)
    else:
        padded = length + 2 * (frame - hop)
    return 1 + max(0, math.ceil((padded - frame) / hop))


def _pad(signal: np.ndarray, config: StftConfig, n_frames: int) -> tuple[np.ndarray, int]:
    hop, frame = config.hop_length, config.frame_length
    n = signal.shape[-1]
    total = (n_frames - 1) * hop + frame
    width = [(0, 0)] * (signal.ndim - 1)
    if config.padding == "center":
        left = frame // 2
        right = min(left, total - n - left)
        mode = "reflect" if n > max(left, right) else "constant"
        padded = np.pad(signal, width + [(left, right)], mode=mode)
    else:
        left = frame - hop
        padded = np.pad(signal, width + [(left, 0)])
    extra = total - padded.shape[-1]
    if extra > 0:
        padded = np.pad(padded, width + [(0, extra)])
    return padded, left


def frame_spectra(frames: np.ndarray, config: StftConfig) -> np.ndarray:
    """FFT of already-segmented frames ``(..., T, frame)`` -> ``(..., T, F)``."""
    return np.fft.rfft(frames * window(config), n=config.fft_size, axis=-1)


def stft(signal: np.ndarray, config: StftConfig | None = None) -> Spectrogram:
    """Complex STFT. ``signal`` is ``(samples,)`` or ``(channels, samples)``."""
    config = config or StftConfig()
    signal = np.asarray(signal, dtype=float)
    if signal.shape[-1] == 0:
        raise InputError("empty signal")
    n = signal.shape[-1]
    t = num_frames(n, config)
    padded, _ = _pad(signal, config, t)
    frames = np.lib.stride_tricks.sliding_window_view(padded, config.frame_length, axis=-1)[..., ::config.hop_length, :]
    frames = frames[..., :t, :]
    bins = np.swapaxes(frame_spectra(frames, config), -1, -2)
    return Spectrogram(np.ascontiguousarray(bins), config, n)


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Overlap-add ``(..., T, frame)`` time frames."""
    t, frame = frames.shape[-2:]
    out = np.zeros(frames.shape[:-2] + ((t - 1) * hop + frame,))
    for i in range(t):
        out[..., i * hop:i * hop + frame] += frames[..., i, :]
    return out


def istft(spec: Spectrogram, length: int | None = None) -> np.ndarray:
    """Inverse of :func:`stft` by windowed overlap-add."""
    config = spec.config
    if not is_cola(config):
        raise ConfigurationError(f"{config.window} window with hop {config.hop_length} is not COLA")
    length = spec.length if length is None else length
    bins = np.swapaxes(spec.bins, -1, -2)
    t = bins.shape[-2]
    frames = np.fft.irfft(bins, n=config.fft_size, axis=-1)[..., :config.frame_length] * window(config)
    out = overlap_add(frames, config.hop_length)
    env = ola_envelope(config, t)
    nz = env > 1e-10
    out[..., nz] /= env[nz]
    if config.padding == "center":
        left = config.frame_length // 2
    else:
        left = config.frame_length - config.hop_length
    out = out[..., left:left + length]
    if out.shape[-1] < length:
        out = np.pad(out, [(0, 0)] * (out.ndim - 1) + [(0, length - out.shape[-1])])
    return out


class StreamingStft:
    """Causal STFT fed in arbitrary chunks.

    Emits exactly the frames ``stft(x, config.with_padding("causal"))``
    would produce, each as soon as its last input sample has arrived.
    """

    def __init__(self, config: StftConfig, channels: int | None = None):
        self.config = config.with_padding("causal")
        self._lead = () if channels is None else (channels,)
        self._buf = np.zeros(self._lead + (self.config.frame_length - self.config.hop_length,))
        self._consumed = 0
        self._emitted = 0

    def process(self, chunk: np.ndarray) -> np.ndarray:
        """Returns ``(..., k, F)`` spectra for the ``k`` frames completed by ``chunk``."""
        chunk = np.asarray(chunk, dtype=float)
        self._consumed += chunk.shape[-1]
        self._buf = np.concatenate([self._buf, chunk], axis=-1)
        return self._drain()

    def flush(self) -> np.ndarray:
        target = num_frames(self._consumed, self.config)
        hop, frame = self.config.hop_length, self.config.frame_length
        needed = (target - self._emitted - 1) * hop + frame - self._buf.shape[-1]
        if needed > 0:
            self._buf = np.concatenate([self._buf, np.zeros(self._lead + (needed,))], axis=-1)
        return self._drain(limit=target - self._emitted)

    def _drain(self, limit: int | None = None) -> np.ndarray:
        hop, frame = self.config.hop_length, self.config.frame_length
        k = max(0, (self._buf.shape[-1] - frame) // hop + 1)
        if limit is not None:
            k = min(k, limit)
        if k == 0:
            return np.zeros(self._lead + (0, self.config.n_bins), dtype=complex)
        frames = np.stack([self._buf[..., i * hop:i * hop + frame] for i in range(k)], axis=-2)
        self._buf = self._buf[..., k * hop:]
        self._emitted += k
        return frame_spectra(frames, self.config)


class StreamingIstft:
    """Overlap-add synthesis matching :class:`StreamingStft`.

    Each frame pushed releases ``hop`` finished samples. The first
    ``frame - hop`` released samples belong to the causal left padding;
    :meth:`process` drops them so output sample ``n`` lines up with input
    sample ``n``.
    """

    def __init__(self, config: StftConfig):
        self.config = config.with_padding("causal")
        if not is_cola(self.config):
            raise ConfigurationError("streaming synthesis needs a COLA window/hop")
        self._w = window(self.config)
        hop, frame = self.config.hop_length, self.config.frame_length
        self._acc = np.zeros(frame)
        self._norm = ola_envelope(self.config, frame // hop + 2)[frame:frame + hop].copy()
        self._skip = frame - hop

    def process(self, spectra: np.ndarray) -> np.ndarray:
        """``spectra`` is ``(k, F)``; returns the samples finalized by those frames."""
        hop, frame = self.config.hop_length, self.config.frame_length
        out = []
        for spectrum in np.atleast_2d(spectra):
            seg = np.fft.irfft(spectrum, n=self.config.fft_size)[:frame] * self._w
            self._acc += seg
            out.append(self._acc[:hop] / self._norm)
            self._acc = np.concatenate([self._acc[hop:], np.zeros(hop)])
        if not out:
            return np.zeros(0)
        done = np.concatenate(out)
        if self._skip:
            cut = min(self._skip, done.size)
            done = done[cut:]
            self._skip -= cut
        return done


# --------------------------------------------------------------- debug dump

_SPEC_MAGIC = b"FFSP"


def dump_spectrogram(path, spec: Spectrogram) -> None:
    """Header (magic, version, F, T) then interleaved complex64, row-major F x T."""
    bins = np.asarray(spec.bins)
    if bins.ndim != 2:
        raise InputError("dump expects a single-channel F x T spectrogram")
    f, t = bins.shape
    with open(path, "wb") as fh:
        fh.write(_SPEC_MAGIC + struct.pack("<III", 1, f, t))
        fh.write(np.ascontiguousarray(bins, dtype="<c8").tobytes())


def load_spectrogram(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != _SPEC_MAGIC:
            raise FormatError(f"{path}: not a spectrogram dump")
        _, f, t = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<c8")
    if data.size != f * t:
        raise FormatError(f"{path}: payload size mismatch")
    return data.reshape(f, t)
