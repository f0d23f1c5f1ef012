"""Aggregation of subjective ratings (MOS, S-MOS, N-MOS)."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import InputError, ValidationError

SCALES = ("mos", "smos", "nmos")


@dataclass(frozen=True)
class RatingRecord:
    clip_id: str
    rater_id: str
    mos: int
    smos: int
    nmos: int

    def validate(self) -> None:
        for name in SCALES:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or not 1 <= value <= 5:
                raise ValidationError(
                    f"rating clip={self.clip_id} rater={self.rater_id}: {name}={value!r} is not an integer in 1..5")


def _parse_score(text: str, row: int, name: str) -> int:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"row {row}: {name}={text!r} is not a number") from None
    if not value.is_integer():
        raise ValidationError(f"row {row}: {name}={text!r} is not an integer in 1..5")
    return int(value)


def read_ratings(path) -> list[RatingRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"clip_id", "rater_id", *SCALES}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValidationError(f"{path}: header must contain clip_id,rater_id,mos,smos,nmos")
        records = []
        for i, row in enumerate(reader, start=2):
            rec = RatingRecord(row["clip_id"], row["rater_id"],
                               *(_parse_score(row[name], i, name) for name in SCALES))
            rec.validate()
            records.append(rec)
    return records


def t_half_width(values, confidence: float = 0.95) -> float:
    """Two-sided Student-t interval half-width for the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return math.nan
    s = float(np.std(values, ddof=1))
    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * s / math.sqrt(n))


def aggregate_mos(ratings, noisy_baseline: dict | None = None, confidence: float = 0.95) -> dict:
    """Corpus scores from individual ratings.

    Each scale is averaged per clip first and then over clips. The
    confidence interval is the t-interval half-width over all individual
    MOS ratings (``nan`` with fewer than two). ``noisy_baseline`` maps
    clip ids to a dict of baseline scores (or a single MOS number); the
    deltas use its corpus mean over the same clips.
    """
    ratings = list(ratings)
    if not ratings:
        raise InputError("no ratings")
    per_clip: dict[str, dict[str, list]] = defaultdict(lambda: {s: [] for s in SCALES})
    for rec in ratings:
        rec.validate()
        for s in SCALES:
            per_clip[rec.clip_id][s].append(getattr(rec, s))
    clips = sorted(per_clip)
    out: dict = {"num_clips": len(clips), "num_ratings": len(ratings)}
    for s in SCALES:
        key = {"mos": "MOS", "smos": "S-MOS", "nmos": "N-MOS"}[s]
        out[key] = float(np.mean([np.mean(per_clip[c][s]) for c in clips]))
    out["CI"] = t_half_width(sorted(r.mos for r in ratings), confidence)
    if noisy_baseline is not None:
        missing = [c for c in clips if c not in noisy_baseline]
        if missing:
            raise InputError(f"baseline lacks clips: {missing}")
        for s in SCALES:
            key = {"mos": "MOS", "smos": "S-MOS", "nmos": "N-MOS"}[s]
            base = []
            for c in clips:
                entry = noisy_baseline[c]
                if isinstance(entry, dict):
                    if s not in entry:
                        continue
                    base.append(float(entry[s]))
                elif s == "mos":
                    base.append(float(entry))
            if base:
                out["d" + key] = out[key] - float(np.mean(base))
    return out
