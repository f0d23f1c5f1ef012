"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary. The full-data training run of criterion 4 takes hours and only
runs with ``FARFIELD_FULL_TRAINING=1``.
"""

import filecmp
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from desk import MULTI_TOPOLOGIES, multi_array_mixtures, record, single_array_mixtures
from farfield.cli import main as cli_main
from farfield.enhance import (
    Candidate,
    ComplexMask,
    MaskEstimator,
    StreamingEnhancer,
    apply_mask,
    enhance_ideal,
    enhance_with_mask,
    ideal_crm,
    select_array,
)
from farfield.evaluate import aggregate_mos, measure_rtf, real_time_factor, sisnr, RatingRecord
from farfield.features import default_pairs
from farfield.geometry import ArrayGeometry, Topology, build_array
from farfield.roomsim import RirConfig, eyring_t60, sample_scenario, schroeder_t60, simulate_rir
from farfield.spectral import StftConfig, istft, stft
from oracles import direct_onset, t_interval_half_width_by_hand
from test_training import TOY_STFT, finite_difference_check, toy_batch


def test_criterion_1_stft_round_trip():
    rng = np.random.default_rng(1)
    config = StftConfig()
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(6 * 16000)
        y = istft(stft(x, config))
        worst = max(worst, np.linalg.norm(y - x) / np.linalg.norm(x))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 10
    record(1, "STFT round trip", ok, f"max rel L2 {worst:.2e} over 100 x 6 s, {elapsed:.1f} s")
    assert ok


def test_criterion_2_mask_algebra():
    rng = np.random.default_rng(2)
    shape = (1000, 1000)
    start = time.perf_counter()
    mr, mi = rng.standard_normal(shape), rng.standard_normal(shape)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y = apply_mask(ComplexMask(mr, mi), x)
    expected = np.multiply(mr + 1j * mi, x)
    err = float(np.max(np.abs(y - expected)))
    elapsed = time.perf_counter() - start
    ok = err <= 1e-12 and elapsed < 5
    record(2, "mask algebra", ok, f"max abs error {err:.1e} on 1e6 elements, {elapsed:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def desk_clips():
    return single_array_mixtures(rooms=10, per_room=2, seed=3)


def test_criterion_3_ideal_crm_bound(desk_clips):
    selection = default_pairs("linear_uniform8")
    config = StftConfig()
    start = time.perf_counter()
    scores, clamped = [], []
    for mix, ref, _ in desk_clips:
        x0 = stft(mix[selection.reference], config)
        _, flags = ideal_crm(stft(ref, config), x0, return_flags=True)
        clamped.append(flags.mean())
        scores.append(sisnr(enhance_ideal(mix, ref, selection, config), ref))
    elapsed = time.perf_counter() - start
    frac = float(np.mean(np.asarray(scores) >= 40))
    ok = frac >= 0.95 and elapsed < 60
    record(3, "ideal-CRM bound", ok,
           f"{frac:.0%} of {len(scores)} clips >= 40 dB (min {min(scores):.1f} dB), "
           f"clamped bins {np.mean(clamped):.2%}, {elapsed:.1f} s")
    assert ok


def test_criterion_4_learned_model(tmp_path):
    rng = np.random.default_rng(4)
    model = MaskEstimator(n_bins=5, hidden=8, layers=3, seed=1).double()
    from farfield.enhance.training import TorchIstft, batch_loss

    batch = toy_batch(rng, frames=2)
    op = TorchIstft(TOY_STFT, 2, torch.float64)
    grad_err = finite_difference_check(model, lambda: batch_loss(model, batch, "mask_mse", op))
    ok = grad_err < 1e-4
    detail = f"gradient check max rel error {grad_err:.1e} (F=5, hidden 8, 2 frames)"
    if os.environ.get("FARFIELD_FULL_TRAINING") == "1":
        import full_training

        root = os.environ.get("FARFIELD_ACCEPTANCE_DIR", "/tmp/farfield-acceptance")
        epochs = int(os.environ.get("FARFIELD_TRAIN_EPOCHS", 18))
        res = full_training.run(root, epochs)
        trained = res["train_hours"] >= 2 and res["sisnr_gain"] >= 3.0 and res["stoi_gain"] >= 0.03
        ok = ok and trained
        detail += (f"; {res['train_hours']:.2f} h, {epochs} epochs: Si-SNR {res['noisy_sisnr']:.2f} -> "
                   f"{res['enhanced_sisnr']:.2f} dB ({res['sisnr_gain']:+.2f}), STOI {res['noisy_stoi']:.3f} -> "
                   f"{res['enhanced_stoi']:.3f} ({res['stoi_gain']:+.3f}) on {res['test_clips']} clips")
    else:
        detail += "; full-data training not run (set FARFIELD_FULL_TRAINING=1)"
    record(4, "learned model", ok, detail)
    assert ok


def ratio_mask_enhancer(mix, ref, topology):
    """Oracle magnitude ratio mask with the noisy phase."""
    selection = default_pairs(topology)
    config = StftConfig()
    s = stft(ref, config).bins
    n = stft(mix[selection.reference] - ref, config).bins
    gain = np.sqrt(np.abs(s) ** 2 / np.maximum(np.abs(s) ** 2 + np.abs(n) ** 2, 1e-20))
    return enhance_with_mask(mix, lambda x0: ComplexMask(gain, np.zeros_like(gain)), selection, config)


def test_criterion_5_snr_selection():
    clips = multi_array_mixtures(rooms=10, per_room=5, seed=5)
    fixed = np.zeros((len(clips), len(MULTI_TOPOLOGIES)))
    chosen = np.zeros(len(clips))
    for i, arrays in enumerate(clips):
        candidates = []
        for a, (topology, (mix, ref)) in enumerate(zip(MULTI_TOPOLOGIES, arrays)):
            y = ratio_mask_enhancer(mix, ref, topology)
            fixed[i, a] = sisnr(y, ref)
            candidates.append(Candidate(a, mix[default_pairs(topology).reference], y))
        winner, _ = select_array(candidates)
        chosen[i] = fixed[i, winner.array_id]
    means = fixed.mean(axis=0)
    ok = chosen.mean() >= means.max() - 0.1
    per_array = ", ".join(f"{t} {m:.2f}" for t, m in zip(MULTI_TOPOLOGIES, means))
    record(5, "SNR selection", ok, f"selected {chosen.mean():.2f} dB vs fixed {per_array} dB on {len(clips)} clips")
    assert ok


def test_criterion_6_rir_physics():
    start = time.perf_counter()
    geometry = build_array("linear_uniform8")
    fs, c = 16000, 340.0
    worst = 0.0
    for seed in range(100):
        scenario = sample_scenario(6000 + seed, geometry=geometry)
        rir = simulate_rir(scenario, geometry, 0, RirConfig(max_seconds=0.1))
        for m in range(rir.num_mics):
            d = rir.direct_delays[m] * c / fs
            worst = max(worst, abs(direct_onset(rir.samples[m], d) - fs * d / c))
    one_mic = ArrayGeometry(Topology.LINEAR_UNIFORM8, {}, np.zeros((1, 3)))
    ratios = []
    for seed in range(10):
        scenario = sample_scenario(1000 + seed)
        rir = simulate_rir(scenario, one_mic, 0, RirConfig(max_seconds=3.0, tail_seconds=0.3))
        ratios.append(schroeder_t60(rir.samples[0], fs) / eyring_t60(scenario.room_dims, scenario.absorption))
    elapsed = time.perf_counter() - start
    t60_ok = all(abs(r - 1) <= 0.25 for r in ratios)
    ok = worst <= 1 and t60_ok and elapsed < 120
    record(6, "RIR physics", ok,
           f"max delay error {worst:.2f} samples over 100 scenarios; Schroeder/Eyring T60 ratios "
           f"{min(ratios):.2f}..{max(ratios):.2f} ({sum(abs(r - 1) <= 0.25 for r in ratios)}/10 within 25%); "
           f"{elapsed:.0f} s")
    assert ok


def test_criterion_7_rtf():
    exact = [(6.0, 6.0, 1.0), (0.255, 6.0, 0.0425), (3.0, 6.0, 0.5), (12.0, 6.0, 2.0), (0.0, 1.0, 0.0)]
    arithmetic_ok = all(real_time_factor(tp, tt) == r for tp, tt, r in exact)
    model = MaskEstimator(seed=0).eval()
    selection = default_pairs("linear_uniform8")
    clip = np.random.default_rng(7).standard_normal((8, 6 * 16000)) * 0.05
    report = measure_rtf(lambda x: StreamingEnhancer(model, selection).run(x), clip, repetitions=3)
    ok = arithmetic_ok and report.rtf <= 1.0
    record(7, "RTF harness", ok,
           f"streaming 3x512 model rtf {report.rtf:.3f} on a 6 s clip, one thread; Tp/Tt arithmetic exact: {arithmetic_ok}")
    assert ok


def test_criterion_8_mos():
    checks = []
    one = aggregate_mos([RatingRecord("a", f"r{i}", m, m, m) for i, m in enumerate([5, 4, 4, 3])])
    checks.append(abs(one["MOS"] - 4.0) <= 1e-9)
    base = aggregate_mos([RatingRecord("a", f"r{i}", m, 3, 3) for i, m in enumerate([4, 4, 4, 3, 4])], {"a": 3.2})
    checks.append(abs(base["dMOS"] - 0.6) <= 1e-9)
    scores = [4] * 10 + [3] * 10
    out = aggregate_mos([RatingRecord("a", f"r{i}", m, m, m) for i, m in enumerate(scores)])
    checks.append(abs(out["MOS"] - 3.5) <= 1e-9)
    checks.append(abs(out["CI"] - t_interval_half_width_by_hand(scores)) <= 1e-9)
    ok = all(checks)
    record(8, "MOS aggregation", ok, f"MOS 4.0, dMOS 0.6, MOS 3.5 with CI {out['CI']:.10f}: {sum(checks)}/4 exact to 1e-9")
    assert ok


def test_criterion_9_determinism(tmp_path):
    (tmp_path / "c.toml").write_text("[roomsim]\nmax_seconds = 0.5\n[mixer]\nclip_seconds = 3.0\n")
    cfg = ["--config", str(tmp_path / "c.toml")]
    assert cli_main(cfg + ["make-corpus", "--out", str(tmp_path / "corpus"), "--speech", "3", "--noise", "2",
                           "--seconds", "4", "--seed", "1"]) == 0
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main(cfg + ["gen-rirs", "--topology", "circular16", "--count", "4", "--seed", "9",
                               "--out", str(out / "rirs")]) == 0
        assert cli_main(cfg + ["make-specs", "--corpus", str(tmp_path / "corpus"), "--rirs",
                               str(out / "rirs" / "rirs.jsonl"), "--count", "4", "--seed", "2",
                               "--out", str(out / "specs.jsonl")]) == 0
        assert cli_main(cfg + ["synth", "--specs", str(out / "specs.jsonl"), "--rirs", str(out / "rirs" / "rirs.jsonl"),
                               "--out", str(out / "data")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    different = [str(f) for f in files if not filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)]
    ok = len(files) > 10 and not different
    record(9, "determinism", ok, f"{len(files)} artifacts compared byte by byte, {len(different)} differ")
    assert ok
