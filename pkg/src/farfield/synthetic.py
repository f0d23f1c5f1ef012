"""Synthetic speech-like and noise sources for self-contained experiments.

No speech corpus ships with the package, so tests, acceptance runs and the
``make-corpus`` command draw sources from here: voiced syllables from a
harmonic source through three formant resonators, fricative bursts and
pauses, plus a few stationary and babble noise types.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import signal as sps

from .audio import DEFAULT_SAMPLE_RATE, write_wav
from .mixer import SNR_RANGE, MixtureSpec

NOISE_KINDS = ("white", "pink", "brown", "babble", "hum")


def _resonator(freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    return [1.0 - r], [1.0, -2 * r * np.cos(theta), r * r]


def _rms_normalize(x, level_db):
    rms = np.sqrt(np.mean(x**2))
    return x if rms == 0 else x * (10 ** (level_db / 20) / rms)


def speech_like(seconds: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE, level_db: float = -25.0) -> np.ndarray:
    """Speech-like signal with syllabic structure, pitch glides and formants."""
    rng = np.random.default_rng(seed)
    fs = sample_rate
    n = int(round(seconds * fs))
    out = np.zeros(n)
    base_f0 = rng.uniform(90.0, 240.0)
    pos = int(rng.uniform(0.0, 0.2) * fs)
    while pos < n:
        kind = rng.choice(["voiced", "fricative", "pause"], p=[0.65, 0.15, 0.2])
        if kind == "pause":
            pos += int(rng.uniform(0.04, 0.3) * fs)
            continue
        dur = int(rng.uniform(0.08, 0.28 if kind == "voiced" else 0.12) * fs)
        dur = min(dur, n - pos)
        if dur <= 8:
            break
        t = np.arange(dur) / fs
        if kind == "voiced":
            f0 = base_f0 * (1 + rng.uniform(-0.15, 0.15) + rng.uniform(-0.2, 0.2) * t / max(t[-1], 1e-3))
            phase = 2 * np.pi * np.cumsum(f0) / fs
            src = np.zeros(dur)
            for k in range(1, int(4000 / base_f0)):
                src += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k
            seg = src
            for freq, bw in ((rng.uniform(300, 900), 80), (rng.uniform(900, 2500), 120), (rng.uniform(2400, 3400), 200)):
                b, a = _resonator(freq, bw, fs)
                seg = seg + 0.7 * sps.lfilter(b, a, src)
        else:
            b, a = sps.butter(4, rng.uniform(2500, 5000), btype="highpass", fs=fs)
            seg = 0.3 * sps.lfilter(b, a, rng.standard_normal(dur))
        env = np.sin(np.pi * np.arange(dur) / dur) ** 0.6
        out[pos:pos + dur] += seg * env * rng.uniform(0.4, 1.0)
        pos += dur
    return _rms_normalize(out, level_db)


def noise(kind: str, seconds: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE, level_db: float = -25.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind in ("pink", "brown"):
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.fft.rfftfreq(n, 1 / sample_rate)
        f[0] = f[1]
        spec /= np.sqrt(f) if kind == "pink" else f
        x = np.fft.irfft(spec, n)
    elif kind == "babble":
        x = sum(speech_like(seconds, int(rng.integers(1 << 31)), sample_rate) for _ in range(6))
    elif kind == "hum":
        t = np.arange(n) / sample_rate
        f0 = rng.uniform(45, 120)
        x = sum(np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 6.3)) / k for k in range(1, 8))
        x = x + 0.5 * noise("pink", seconds, int(rng.integers(1 << 31)), sample_rate, -20.0) / 10 ** (-20 / 20)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return _rms_normalize(np.asarray(x, dtype=float), level_db)


def make_corpus(out_dir, n_speech: int, n_noise: int, seconds: float = 8.0, seed: int = 0,
                sample_rate: int = DEFAULT_SAMPLE_RATE) -> tuple[list[str], list[str]]:
    """Write mono speech and noise WAVs under ``out_dir/{speech,noise}``."""
    out_dir = Path(out_dir)
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(n_speech + n_noise)
    speech_files, noise_files = [], []
    for i in range(n_speech):
        p = out_dir / "speech" / f"speech{i:05d}.wav"
        write_wav(p, speech_like(seconds, int(seeds[i]), sample_rate), sample_rate)
        speech_files.append(str(p))
    for i in range(n_noise):
        kind = NOISE_KINDS[i % len(NOISE_KINDS)]
        p = out_dir / "noise" / f"noise{i:05d}_{kind}.wav"
        write_wav(p, noise(kind, seconds, int(seeds[n_speech + i]), sample_rate), sample_rate)
        noise_files.append(str(p))
    return speech_files, noise_files


def make_specs(speech_files, noise_files, rir_rows, count: int, seed: int = 0, snr_range=SNR_RANGE,
               clip_seconds: float = 6.0, prefix: str = "clip") -> list[MixtureSpec]:
    """Random mixture specs; speech and noise RIRs come from the same room.

    ``rir_rows`` is an RIR manifest (list of dicts with ``id``,
    ``scenario_id`` and ``source_index``); rooms with fewer than two sources
    are skipped.
    """
    rooms: dict = {}
    for row in rir_rows:
        rooms.setdefault(row["scenario_id"], {})[row["source_index"]] = row["id"]
    pairs = [(v[0], v[1]) for _, v in sorted(rooms.items()) if 0 in v and 1 in v]
    if not pairs:
        raise ValueError("no room provides both a speech (0) and a noise (1) source")
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(count):
        s_rir, n_rir = pairs[int(rng.integers(len(pairs)))]
        specs.append(MixtureSpec(
            speech_path=str(speech_files[int(rng.integers(len(speech_files)))]),
            noise_path=str(noise_files[int(rng.integers(len(noise_files)))]),
            speech_rir_id=s_rir,
            noise_rir_id=n_rir,
            snr_db=float(np.round(rng.uniform(*snr_range), 3)),
            clip_seconds=clip_seconds,
            seed=int(rng.integers(1 << 31)),
            clip_id=f"{prefix}{i:05d}",
        ))
    return specs
