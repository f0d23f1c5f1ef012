"""Complex ratio masks: application and the oracle (ideal) mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..spectral import Spectrogram

MASK_BOUND = 10.0


@dataclass
class ComplexMask:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if np.shape(self.real) != np.shape(self.imag):
            raise ShapeError("mask parts differ in shape")

    @property
    def shape(self):
        return np.shape(self.real)

    def as_complex(self) -> np.ndarray:
        return np.asarray(self.real) + 1j * np.asarray(self.imag)

    @classmethod
    def constant(cls, shape, value: complex) -> "ComplexMask":
        return cls(np.full(shape, float(np.real(value))), np.full(shape, float(np.imag(value))))


def apply_mask(mask: ComplexMask, x0):
    """Complex-multiply the reference spectrum by the mask.

    ``Y_r = M_r X_r - M_i X_i`` and ``Y_i = M_r X_i + M_i X_r``. Returns a
    :class:`Spectrogram` when given one, else a complex array.
    """
    bins = x0.bins if isinstance(x0, Spectrogram) else np.asarray(x0)
    if bins.shape != mask.shape:
        raise ShapeError(f"mask {mask.shape} does not match spectrum {bins.shape}")
    xr, xi = bins.real, bins.imag
    y = (mask.real * xr - mask.imag * xi) + 1j * (mask.real * xi + mask.imag * xr)
    if isinstance(x0, Spectrogram):
        return Spectrogram(y, x0.config, x0.length, x0.channel_id)
    return y


def ideal_crm(clean, noisy, clamp: float = MASK_BOUND, eps: float = 1e-8, return_flags: bool = False):
    """Oracle mask ``S / X`` with both parts clipped to ``[-clamp, clamp]``.

    Bins where ``|X| < eps`` get a zero mask. With ``return_flags`` the
    boolean map of clipped or degenerate bins is returned as well.
    """
    s = clean.bins if isinstance(clean, Spectrogram) else np.asarray(clean)
    x = noisy.bins if isinstance(noisy, Spectrogram) else np.asarray(noisy)
    if s.shape != x.shape:
        raise ShapeError(f"clean {s.shape} and noisy {x.shape} differ")
    power = x.real**2 + x.imag**2
    degenerate = np.sqrt(power) < eps
    safe = np.where(degenerate, 1.0, power)
    mr = (s.real * x.real + s.imag * x.imag) / safe
    mi = (s.imag * x.real - s.real * x.imag) / safe
    mr[degenerate] = 0.0
    mi[degenerate] = 0.0
    clipped = (np.abs(mr) > clamp) | (np.abs(mi) > clamp)
    mask = ComplexMask(np.clip(mr, -clamp, clamp), np.clip(mi, -clamp, clamp))
    if return_flags:
        return mask, clipped | degenerate
    return mask
