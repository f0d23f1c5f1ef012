"""Desk-scale scenes and the result recorder used by the acceptance suite."""

from dataclasses import replace

import numpy as np

from farfield import synthetic
from farfield.geometry import build_array
from farfield.mixer import fit_length, render_mixture, render_multi_array
from farfield.roomsim import SamplerBounds, sample_extra_poses, sample_scenario, simulate_rir

# one line per criterion, printed in the terminal summary
RESULTS = {}


def record(number, title, ok, detail):
    RESULTS[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}"
    print(RESULTS[number])
    return ok


def dry_pair(rng, seconds):
    n = int(seconds * 16000)
    speech = synthetic.speech_like(seconds + 1.0, int(rng.integers(1 << 31)))
    kind = synthetic.NOISE_KINDS[int(rng.integers(len(synthetic.NOISE_KINDS)))]
    noise = synthetic.noise(kind, seconds + 1.0, int(rng.integers(1 << 31)))
    return fit_length(speech, n, rng), fit_length(noise, n, rng, loop=True)


def single_array_mixtures(rooms, per_room, seed, topology="linear_uniform8", seconds=6.0):
    """``rooms * per_room`` clips ``(mixture, reverberant reference, snr_db)``."""
    geometry = build_array(topology)
    rng = np.random.default_rng(seed)
    out = []
    for k in range(rooms):
        scenario = sample_scenario(seed * 1000 + k, geometry=geometry)
        srir, nrir = simulate_rir(scenario, geometry, 0), simulate_rir(scenario, geometry, 1)
        for _ in range(per_room):
            speech, noise = dry_pair(rng, seconds)
            snr = float(rng.uniform(0.0, 30.0))
            mix, ref, _, _ = render_mixture(speech, noise, srir, nrir, snr, speech.size)
            out.append((mix, ref, snr))
    return out


MULTI_TOPOLOGIES = ("circular16", "linear_uniform8", "linear_nonuniform8")


def multi_array_mixtures(rooms, per_room, seed, seconds=6.0):
    """Clips as lists over the three arrays of one room: ``[(mixture, reference), ...]``."""
    geometries = [build_array(t) for t in MULTI_TOPOLOGIES]
    bounds = SamplerBounds()
    rng = np.random.default_rng(seed)
    out = []
    for k in range(rooms):
        base = sample_scenario(seed * 1000 + k, bounds, geometries[0])
        poses = [base.array_pose] + sample_extra_poses(base, 2, seed * 1000 + k, bounds, geometries[1:])
        scenes = [replace(base, array_pose=p) for p in poses]
        srirs = [simulate_rir(s, g, 0) for s, g in zip(scenes, geometries)]
        nrirs = [simulate_rir(s, g, 1) for s, g in zip(scenes, geometries)]
        for _ in range(per_room):
            speech, noise = dry_pair(rng, seconds)
            snr = float(rng.uniform(0.0, 30.0))
            mixes, refs, _ = render_multi_array(speech, noise, srirs, nrirs, snr, speech.size)
            out.append(list(zip(mixes, refs)))
    return out
