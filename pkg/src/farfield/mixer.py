"""Multichannel noisy-mixture synthesis.

Speech and noise are convolved with impulse responses from the same room,
then the noise is scaled by a single scalar so the reference channel hits
the requested SNR. The clean target written next to each mixture is the
reverberant speech at the reference channel.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio import DEFAULT_SAMPLE_RATE, read_mono, read_wav, write_wav
from .errors import DegenerateSignalError, FormatError, InputError, ManifestError
from .jsonl import read_jsonl, resolve, write_jsonl
from .roomsim import Rir

SNR_RANGE = (0.0, 30.0)


@dataclass
class MultichannelClip:
    samples: np.ndarray  # (channels, length)
    sample_rate: int = DEFAULT_SAMPLE_RATE
    channel_map: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate


@dataclass(frozen=True)
class MixtureSpec:
    speech_path: str
    noise_path: str
    speech_rir_id: str
    noise_rir_id: str
    snr_db: float
    clip_seconds: float = 6.0
    seed: int = 0
    clip_id: str | None = None

    def validate(self, snr_range=SNR_RANGE) -> None:
        if not math.isfinite(self.snr_db):
            raise InputError(f"snr_db must be finite, got {self.snr_db}")
        if not snr_range[0] <= self.snr_db <= snr_range[1]:
            raise InputError(f"snr_db {self.snr_db} outside {snr_range}")
        if self.clip_seconds <= 0:
            raise InputError("clip_seconds must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureSpec":
        known = {k: doc[k] for k in cls.__dataclass_fields__ if k in doc}
        absent = [k for k in ("speech_path", "noise_path", "speech_rir_id", "noise_rir_id", "snr_db") if k not in known]
        if absent:
            raise InputError(f"mixture spec lacks {', '.join(absent)}")
        return cls(**known)


def energy(x: np.ndarray) -> float:
    return float(np.sum(np.asarray(x, dtype=float) ** 2))


def convolve_multichannel(dry: np.ndarray, rir: Rir, sample_rate: int = DEFAULT_SAMPLE_RATE,
                          length: int | None = None) -> MultichannelClip:
    """Full linear convolution of a mono signal with each RIR channel.

    Output length is ``len(dry) + rir.length - 1`` unless ``length`` truncates
    (or zero-extends) it.
    """
    if rir.sample_rate != sample_rate:
        raise FormatError(f"RIR at {rir.sample_rate} Hz, signal at {sample_rate} Hz")
    dry = np.asarray(dry, dtype=float)
    if dry.ndim != 1:
        raise FormatError("dry signal must be mono")
    wet = sps.fftconvolve(dry[None, :], rir.samples, axes=1)
    if length is not None:
        if wet.shape[1] >= length:
            wet = wet[:, :length]
        else:
            wet = np.pad(wet, ((0, 0), (0, length - wet.shape[1])))
    return MultichannelClip(wet, sample_rate)


def noise_gain(speech_ref: np.ndarray, noise_ref: np.ndarray, snr_db: float) -> float:
    """Scalar ``a`` with ``10 log10(E[s] / E[a n]) == snr_db``."""
    if not math.isfinite(snr_db):
        raise InputError(f"snr_db must be finite, got {snr_db}")
    es, en = energy(speech_ref), energy(noise_ref)
    if es <= 0.0:
        raise DegenerateSignalError("speech reference channel has zero energy")
    if en <= 0.0:
        raise DegenerateSignalError("noise reference channel has zero energy")
    return math.sqrt(es / (en * 10.0 ** (snr_db / 10.0)))


def mix_at_snr(speech: MultichannelClip, noise: MultichannelClip, snr_db: float, ref_channel: int = 0) -> MultichannelClip:
    """Add ``noise`` scaled to ``snr_db`` (measured on ``ref_channel``).

    The applied scalar is stored in ``provenance["noise_scale"]``.
    """
    if speech.samples.shape != noise.samples.shape:
        raise FormatError(f"shape mismatch {speech.samples.shape} vs {noise.samples.shape}")
    if speech.sample_rate != noise.sample_rate:
        raise FormatError("sample rates differ")
    a = noise_gain(speech.samples[ref_channel], noise.samples[ref_channel], snr_db)
    prov = dict(speech.provenance, noise_scale=a, snr_db=float(snr_db), ref_channel=ref_channel)
    return MultichannelClip(speech.samples + a * noise.samples, speech.sample_rate, dict(speech.channel_map), prov)


def measured_snr(speech: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * math.log10(energy(speech) / energy(noise))


# ------------------------------------------------------------ source prep

def fit_length(x: np.ndarray, n: int, rng: np.random.Generator, loop: bool = False) -> np.ndarray:
    """Random crop to ``n`` samples, or pad (zeros, or tiling when ``loop``)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise DegenerateSignalError("empty source signal")
    if x.size > n:
        start = int(rng.integers(0, x.size - n + 1))
        return x[start:start + n]
    if loop:
        reps = int(math.ceil(n / x.size))
        return np.tile(x, reps)[:n]
    out = np.zeros(n)
    start = int(rng.integers(0, n - x.size + 1))
    out[start:start + x.size] = x
    return out


def estimate_source_snr(x: np.ndarray, sample_rate: int = DEFAULT_SAMPLE_RATE, frame_ms: float = 20.0) -> float:
    """Rough SNR of a speech recording from frame energies.

    Frames above the median energy are treated as active speech, the
    quietest tenth as the noise floor.
    """
    n = int(sample_rate * frame_ms / 1000)
    frames = np.asarray(x, dtype=float)[: (len(x) // n) * n].reshape(-1, n)
    if frames.shape[0] < 10:
        raise InputError("recording too short to estimate its SNR")
    e = np.sort(np.mean(frames**2, axis=1))
    floor = np.mean(e[: max(1, e.size // 10)])
    active = np.mean(e[e.size // 2:])
    if floor <= 0:
        return math.inf
    return 10.0 * math.log10(max(active - floor, 1e-30) / floor)


def passes_speech_gate(x: np.ndarray, threshold_db: float = 15.0, sample_rate: int = DEFAULT_SAMPLE_RATE) -> bool:
    return estimate_source_snr(x, sample_rate) > threshold_db


def direct_path_rir(rir: Rir, half_width: int = 40) -> Rir:
    """Keep only a window around each channel's strongest arrival."""
    out = np.zeros_like(rir.samples)
    for c, h in enumerate(rir.samples):
        k = int(np.argmax(np.abs(h)))
        lo, hi = max(0, k - half_width), min(h.size, k + half_width + 1)
        out[c, lo:hi] = h[lo:hi]
    return Rir(out, rir.sample_rate)


# ------------------------------------------------------------- datasets

def load_rir_manifest(path) -> dict:
    rows = read_jsonl(path)
    return {row["id"]: dict(row, path=str(resolve(path, row["file"]))) for row in rows}


def load_rir(row: dict) -> Rir:
    samples, rate = read_wav(row["path"])
    return Rir(samples, rate)


def render_mixture(speech_dry, noise_dry, speech_rir: Rir, noise_rir: Rir, snr_db: float, n: int,
                   ref_channel: int = 0, target: str = "reverberant"):
    """Mixture, clean reference and noise scalar for one clip of ``n`` samples.

    The mixture and reference are rescaled together when the mixture would clip.
    """
    speech = convolve_multichannel(speech_dry, speech_rir, speech_rir.sample_rate, n)
    noise = convolve_multichannel(noise_dry, noise_rir, noise_rir.sample_rate, n)
    if speech.num_channels != noise.num_channels:
        raise FormatError("speech and noise RIRs have different channel counts")
    mix = mix_at_snr(speech, noise, snr_db, ref_channel)
    if target == "reverberant":
        ref = speech.samples[ref_channel].copy()
    elif target == "direct":
        ref = convolve_multichannel(speech_dry, direct_path_rir(speech_rir), speech_rir.sample_rate, n).samples[ref_channel]
    else:
        raise InputError(f"unknown target {target!r}")
    peak = float(np.max(np.abs(mix.samples)))
    scale = 1.0 / peak if peak > 1.0 else 1.0
    return mix.samples * scale, ref * scale, mix.provenance["noise_scale"] * scale, scale


def render_multi_array(speech_dry, noise_dry, speech_rirs, noise_rirs, snr_db: float, n: int,
                       ref_channel: int = 0, anchor: int = 0):
    """Mixtures at several arrays sharing one room, speech and noise.

    One noise gain is used for every array, chosen so the ``anchor``
    array's reference channel sits at ``snr_db``; the other arrays get the
    SNR their placement gives them. A single peak scale keeps the relative
    levels. Returns ``(mixtures, references, noise_scale)``.
    """
    if len(speech_rirs) != len(noise_rirs) or not speech_rirs:
        raise InputError("need one speech and one noise RIR per array")
    wet_s = [convolve_multichannel(speech_dry, r, r.sample_rate, n).samples for r in speech_rirs]
    wet_n = [convolve_multichannel(noise_dry, r, r.sample_rate, n).samples for r in noise_rirs]
    alpha = noise_gain(wet_s[anchor][ref_channel], wet_n[anchor][ref_channel], snr_db)
    mixes = [s + alpha * v for s, v in zip(wet_s, wet_n)]
    peak = max(float(np.max(np.abs(m))) for m in mixes)
    scale = 1.0 / peak if peak > 1.0 else 1.0
    return [m * scale for m in mixes], [s[ref_channel] * scale for s in wet_s], alpha * scale


def _synth_one(args):
    spec, rirs, out_dir, sample_rate, ref_channel, target = args
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.clip_seconds * sample_rate))
    speech = fit_length(read_mono(spec.speech_path, sample_rate), n, rng)
    noise = fit_length(read_mono(spec.noise_path, sample_rate), n, rng, loop=True)
    srir, nrir = load_rir(rirs[spec.speech_rir_id]), load_rir(rirs[spec.noise_rir_id])
    mix, ref, alpha, scale = render_mixture(speech, noise, srir, nrir, spec.snr_db, n, ref_channel, target)
    cid = spec.clip_id
    write_wav(Path(out_dir) / "mix" / f"{cid}.wav", mix, sample_rate)
    write_wav(Path(out_dir) / "ref" / f"{cid}.wav", ref, sample_rate)
    row = {
        "clip_id": cid,
        "mixture": f"mix/{cid}.wav",
        "reference": f"ref/{cid}.wav",
        "speech_path": str(spec.speech_path),
        "noise_path": str(spec.noise_path),
        "speech_rir_id": spec.speech_rir_id,
        "noise_rir_id": spec.noise_rir_id,
        "topology": rirs[spec.speech_rir_id].get("topology"),
        "snr_db": float(spec.snr_db),
        "noise_scale": alpha,
        "peak_scale": scale,
        "ref_channel": ref_channel,
        "num_channels": int(mix.shape[0]),
        "sample_rate": sample_rate,
        "seed": int(spec.seed),
        "target": target,
    }
    return row


def synthesize_dataset(specs, rir_manifest, out_dir, sample_rate: int = DEFAULT_SAMPLE_RATE, ref_channel: int = 0,
                       target: str = "reverberant", snr_range=SNR_RANGE, jobs: int = 1,
                       extra: dict | None = None) -> list[dict]:
    """Render every spec to ``out_dir/mix``, ``out_dir/ref`` and ``dataset.jsonl``."""
    specs = [s if isinstance(s, MixtureSpec) else MixtureSpec.from_dict(s) for s in specs]
    if not specs:
        raise InputError("no mixture specs given")
    rirs = load_rir_manifest(rir_manifest)
    missing = []
    for i, spec in enumerate(specs):
        spec.validate(snr_range)
        for p in (spec.speech_path, spec.noise_path):
            if not Path(p).exists():
                missing.append(str(p))
        for rid in (spec.speech_rir_id, spec.noise_rir_id):
            if rid not in rirs or not Path(rirs[rid]["path"]).exists():
                missing.append(rid)
    if missing:
        raise ManifestError(f"missing assets: {', '.join(sorted(set(missing)))}", sorted(set(missing)))
    named = []
    for i, spec in enumerate(specs):
        cid = spec.clip_id or f"clip{i:05d}"
        named.append(MixtureSpec(**dict(spec.to_dict(), clip_id=cid)))
    tasks = [(spec, rirs, str(out_dir), sample_rate, ref_channel, target) for spec in named]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_synth_one, tasks))
    else:
        rows = [_synth_one(t) for t in tasks]
    if extra:
        rows = [dict(r, **extra) for r in rows]
    write_jsonl(Path(out_dir) / "dataset.jsonl", rows)
    return rows


def load_clip(row: dict, manifest_path) -> tuple[MultichannelClip, np.ndarray]:
    """Mixture clip and clean reference for one dataset row."""
    mix, rate = read_wav(resolve(manifest_path, row["mixture"]))
    ref, _ = read_wav(resolve(manifest_path, row["reference"]))
    clip = MultichannelClip(mix, rate, {"topology": row.get("topology")}, {"clip_id": row["clip_id"]})
    return clip, ref[0]
