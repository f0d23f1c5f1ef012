"""Dataset-level evaluation of enhanced outputs."""

from __future__ import annotations

import csv
import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audio import read_wav, write_wav
from ..errors import InputError
from ..jsonl import read_jsonl, resolve, write_jsonl
from .metrics import sisnr, estoi, stoi
from .pesq import external_pesq

METRICS = ("pesq", "stoi", "estoi", "sisnr_db")


def clip_metrics(estimate: np.ndarray, reference: np.ndarray, sample_rate: int = 16000) -> dict:
    return {
        "stoi": stoi(estimate, reference, sample_rate),
        "estoi": estoi(estimate, reference, sample_rate),
        "sisnr_db": sisnr(estimate, reference),
    }


def _mean(rows, key):
    values = [r[key] for r in rows if r.get(key) is not None]
    return float(np.mean(values)) if values else None


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    def aggregate(self) -> dict:
        table = {}
        for condition in ("noisy", "enhanced"):
            subset = [r for r in self.rows if r["condition"] == condition]
            table[condition] = {m: _mean(subset, m) for m in METRICS}
            table[condition]["num_clips"] = len(subset)
        table["delta"] = {
            m: (table["enhanced"][m] - table["noisy"][m])
            if table["enhanced"][m] is not None and table["noisy"][m] is not None else None
            for m in METRICS
        }
        return table

    @property
    def ok(self) -> bool:
        return not self.missing

    def summary(self) -> dict:
        return {"aggregate": self.aggregate(), "missing": self.missing, "num_rows": len(self.rows)}

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(out / "metrics.jsonl", self.rows)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        self.write_csv(out / "metrics.csv")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["clip_id", "condition", *METRICS])
            for r in self.rows:
                writer.writerow([r["clip_id"], r["condition"],
                                 *("" if r.get(m) is None else repr(float(r[m])) for m in METRICS)])


def evaluate_dataset(manifest, enhanced_dir, pesq_executable=None) -> MetricsReport:
    """Score the noisy reference channel and the enhanced file of every clip.

    Enhanced files are looked up as ``<enhanced_dir>/<clip_id>.wav``. Clips
    with a missing file are listed in ``report.missing`` and left out of
    the aggregates.
    """
    manifest = Path(manifest)
    rows = read_jsonl(manifest)
    if not rows:
        raise InputError(f"{manifest}: no clips")
    enhanced_dir = Path(enhanced_dir)
    report = MetricsReport()
    for row in rows:
        cid = row["clip_id"]
        mix_path = resolve(manifest, row["mixture"])
        ref_path = resolve(manifest, row["reference"])
        enh_path = enhanced_dir / f"{cid}.wav"
        absent = [str(p) for p in (mix_path, ref_path, enh_path) if not Path(p).exists()]
        if absent:
            report.missing.append({"clip_id": cid, "files": absent})
            continue
        mix, rate = read_wav(mix_path)
        ref, _ = read_wav(ref_path)
        enh, enh_rate = read_wav(enh_path)
        if enh_rate != rate:
            report.missing.append({"clip_id": cid, "files": [str(enh_path)], "reason": f"sample rate {enh_rate}"})
            continue
        reference = ref[0]
        noisy = mix[int(row.get("ref_channel", 0))]
        enhanced = enh[0]
        if enhanced.size != reference.size:
            report.missing.append({"clip_id": cid, "files": [str(enh_path)],
                                   "reason": f"length {enhanced.size} != {reference.size}"})
            continue
        for condition, signal, path in (("noisy", noisy, None), ("enhanced", enhanced, enh_path)):
            metrics = clip_metrics(signal, reference, rate)
            pesq = None
            if pesq_executable:
                if path is None:
                    with tempfile.TemporaryDirectory() as tmp:
                        noisy_path = Path(tmp) / f"{cid}.wav"
                        write_wav(noisy_path, noisy, rate)
                        pesq = external_pesq(ref_path, noisy_path, pesq_executable)
                else:
                    pesq = external_pesq(ref_path, path, pesq_executable)
            report.rows.append({"clip_id": cid, "condition": condition, "pesq": pesq,
                                **{k: float(v) for k, v in metrics.items()}})
    for r in report.rows:
        if not math.isfinite(r["stoi"]) or not math.isfinite(r["estoi"]):
            raise InputError(f"non-finite STOI for clip {r['clip_id']}")
    return report
