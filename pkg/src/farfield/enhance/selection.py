"""Multi-array output selection by estimated SNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputError


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return math.sqrt(float(np.mean(x * x)))


def estimated_snr(noisy: np.ndarray, enhanced: np.ndarray) -> float:
    """``10 log10(RMS(y) / RMS(y - x))`` for noisy ``x`` and enhanced ``y``.

    The ratio of RMS amplitudes is used as-is (not squared). An enhanced
    signal identical to its input scores ``+inf``.
    """
    x = np.asarray(noisy, dtype=float)
    y = np.asarray(enhanced, dtype=float)
    if x.size == 0 or y.size == 0:
        raise InputError("empty signal")
    if x.shape != y.shape:
        raise InputError(f"length mismatch {x.shape} vs {y.shape}")
    residual = rms(y - x)
    if residual == 0.0:
        return math.inf
    num = rms(y)
    if num == 0.0:
        return -math.inf
    return 10.0 * math.log10(num / residual)


@dataclass
class Candidate:
    array_id: int
    noisy: np.ndarray
    enhanced: np.ndarray
    sample_rate: int = 16000


def select_array(candidates) -> tuple[Candidate, list[float]]:
    """Pick the candidate with the highest estimated SNR.

    Ties go to the lowest ``array_id``. Returns the winner and every score
    in input order.
    """
    candidates = list(candidates)
    if not candidates:
        raise InputError("no candidates to select from")
    rates = {c.sample_rate for c in candidates}
    if len(rates) > 1:
        raise InputError(f"candidates have different sample rates: {sorted(rates)}")
    scores = [estimated_snr(c.noisy, c.enhanced) for c in candidates]
    best = max(range(len(candidates)), key=lambda i: (scores[i], -candidates[i].array_id))
    return candidates[best], scores
