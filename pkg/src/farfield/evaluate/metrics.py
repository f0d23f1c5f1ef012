"""Objective metrics: Si-SNR, STOI and E-STOI."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import resample_poly

from ..errors import InputError

SISNR_CAP_DB = 60.0

_EPS = np.finfo(float).eps
_FS = 10000
_FRAME = 256
_NFFT = 512
_BANDS = 15
_MIN_FREQ = 150.0
_SEGMENT = 30
_BETA_DB = -15.0
_DYN_RANGE_DB = 40.0


def sisnr(estimate, reference, cap_db: float = SISNR_CAP_DB) -> float:
    """Scale-invariant SNR in dB, clipped to ``[-cap_db, cap_db]``."""
    e = np.asarray(estimate, dtype=float)
    s = np.asarray(reference, dtype=float)
    if e.shape != s.shape or e.ndim != 1:
        raise InputError(f"need equal-length mono signals, got {e.shape} and {s.shape}")
    e = e - e.mean()
    s = s - s.mean()
    ss = float(s @ s)
    if ss == 0.0:
        raise InputError("reference is zero")
    target = (float(e @ s) / ss) * s
    residual = e - target
    tt, rr = float(target @ target), float(residual @ residual)
    if rr <= tt * 10 ** (-cap_db / 10):
        return cap_db
    if tt <= rr * 10 ** (-cap_db / 10):
        return -cap_db
    return float(10 * np.log10(tt / rr))


@lru_cache(maxsize=None)
def _third_octave_matrix() -> np.ndarray:
    f = np.linspace(0, _FS, _NFFT + 1)[: _NFFT // 2 + 1]
    k = np.arange(_BANDS, dtype=float)
    lo = _MIN_FREQ * 2.0 ** ((2 * k - 1) / 6)
    hi = _MIN_FREQ * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((_BANDS, f.size))
    for i in range(_BANDS):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    obm.setflags(write=False)
    return obm


def _hann() -> np.ndarray:
    return np.hanning(_FRAME + 2)[1:-1]


def _frames(x: np.ndarray, hop: int) -> np.ndarray:
    starts = np.arange(0, x.size - _FRAME, hop)
    idx = starts[:, None] + np.arange(_FRAME)
    return x[idx] * _hann()


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    if frames.shape[0] == 0:
        return np.zeros(0)
    out = np.zeros((frames.shape[0] - 1) * hop + _FRAME)
    for i, frame in enumerate(frames):
        out[i * hop:i * hop + _FRAME] += frame
    return out


def _drop_silence(x: np.ndarray, y: np.ndarray):
    hop = _FRAME // 2
    xf, yf = _frames(x, hop), _frames(y, hop)
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energy > energy.max() - _DYN_RANGE_DB
    return _overlap_add(xf[keep], hop), _overlap_add(yf[keep], hop)


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(_frames(x, _FRAME // 2), n=_NFFT, axis=1).T
    return np.sqrt(_third_octave_matrix() @ (np.abs(spec) ** 2))


def _segments(tob: np.ndarray) -> np.ndarray:
    # (J bands, M frames) -> (M - N + 1, J, N)
    return np.lib.stride_tricks.sliding_window_view(tob, _SEGMENT, axis=1).transpose(1, 0, 2)


def _unit(v: np.ndarray, axis: int) -> np.ndarray:
    v = v - v.mean(axis=axis, keepdims=True)
    return v / (np.linalg.norm(v, axis=axis, keepdims=True) + _EPS)


def stoi(estimate, reference, sample_rate: int = 16000, extended: bool = False) -> float:
    """Short-time objective intelligibility (or E-STOI with ``extended``).

    Works internally at 10 kHz with 15 one-third-octave bands from 150 Hz,
    256-sample Hann frames at 50% overlap, 384 ms analysis segments and a
    40 dB silent-frame threshold on the reference.
    """
    y = np.asarray(estimate, dtype=float)
    x = np.asarray(reference, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"need equal-length mono signals, got {y.shape} and {x.shape}")
    if sample_rate != _FS:
        g = np.gcd(_FS, int(sample_rate))
        x = resample_poly(x, _FS // g, int(sample_rate) // g)
        y = resample_poly(y, _FS // g, int(sample_rate) // g)
    if x.size <= _FRAME:
        raise InputError("signal too short for STOI")
    x, y = _drop_silence(x, y)
    if x.size <= _FRAME:
        raise InputError("signal has too little active speech for STOI")
    xt, yt = _band_envelopes(x), _band_envelopes(y)
    if xt.shape[1] < _SEGMENT:
        raise InputError(f"need at least {_SEGMENT} active frames, got {xt.shape[1]}")
    xs, ys = _segments(xt), _segments(yt)
    if extended:
        xn = _unit(_unit(xs, 2), 1)
        yn = _unit(_unit(ys, 2), 1)
        return float(np.sum(xn * yn) / (_SEGMENT * xn.shape[0]))
    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 10 ** (-_BETA_DB / 20)
    yp = np.minimum(ys * scale, xs * (1 + clip))
    corr = _unit(yp, 2) * _unit(xs, 2)
    return float(np.sum(corr) / (xs.shape[0] * xs.shape[1]))


def estoi(estimate, reference, sample_rate: int = 16000) -> float:
    return stoi(estimate, reference, sample_rate, extended=True)
