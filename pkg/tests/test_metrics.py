import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from farfield import synthetic
from farfield.errors import InputError
from farfield.evaluate import SISNR_CAP_DB, estoi, sisnr, stoi
from oracles import sisnr_direct

GOLDEN = json.loads((Path(__file__).parent / "data" / "stoi_golden.json").read_text())


def test_sisnr_identity_and_scale(rng):
    s = rng.standard_normal(4000)
    assert sisnr(s, s) == SISNR_CAP_DB
    assert sisnr(3.7 * s, s) == SISNR_CAP_DB
    assert sisnr(-s, s) == SISNR_CAP_DB


def test_sisnr_orthogonal_equal_power():
    t = np.arange(16000)
    tone = np.sqrt(2) * np.sin(2 * np.pi * 440 * t / 16000)
    other = np.sqrt(2) * np.cos(2 * np.pi * 440 * t / 16000)
    assert sisnr(tone + other, tone) == pytest.approx(0.0, abs=0.1)


@given(seed=st.integers(0, 10_000), alpha=st.floats(1e-3, 1e3))
def test_sisnr_matches_definition_and_is_scale_invariant(seed, alpha):
    r = np.random.default_rng(seed)
    s, e = r.standard_normal(1000), r.standard_normal(1000)
    value = sisnr(e, s)
    assert value == pytest.approx(np.clip(sisnr_direct(e, s), -SISNR_CAP_DB, SISNR_CAP_DB), abs=1e-9)
    assert sisnr(alpha * e, s) == pytest.approx(value, abs=1e-9)


def test_sisnr_errors():
    with pytest.raises(InputError):
        sisnr(np.ones(10), np.zeros(10))
    with pytest.raises(InputError):
        sisnr(np.ones(10), np.ones(11))


def golden_signals(case):
    clean = synthetic.speech_like(3.0, case["speech_seed"], sample_rate=case["sample_rate"])
    rng = np.random.default_rng(case["noise_seed"])
    for snr in (-5, 5):
        n = rng.standard_normal(clean.size)
        n *= np.sqrt(np.mean(clean**2) / np.mean(n**2)) * 10 ** (-snr / 20)
        if snr == case["snr_db"]:
            return clean, clean + n


@pytest.mark.parametrize("case", GOLDEN, ids=lambda c: f"{c['sample_rate']}-{c['speech_seed']}-{c['snr_db']}")
def test_stoi_golden(case):
    clean, noisy = golden_signals(case)
    tol = 1e-9 if case["sample_rate"] == 10000 else 2e-3
    assert stoi(noisy, clean, case["sample_rate"]) == pytest.approx(case["stoi"], abs=tol)
    assert estoi(noisy, clean, case["sample_rate"]) == pytest.approx(case["estoi"], abs=tol)


def test_stoi_matches_reference_implementation(rng):
    pystoi = pytest.importorskip("pystoi")
    clean = synthetic.speech_like(2.5, 9)
    noisy = clean + 0.05 * rng.standard_normal(clean.size)
    assert stoi(noisy, clean) == pytest.approx(pystoi.stoi(clean, noisy, 16000), abs=2e-3)
    assert estoi(noisy, clean) == pytest.approx(pystoi.stoi(clean, noisy, 16000, extended=True), abs=2e-3)


def test_self_comparison():
    clean = synthetic.speech_like(3.0, 1)
    assert stoi(clean, clean) >= 0.99
    assert estoi(clean, clean) >= 0.99


def test_unrelated_noise_scores_low():
    scores, extended = [], []
    for seed in range(10):
        clean = synthetic.speech_like(4.0, seed)
        noise = np.random.default_rng(seed + 50).standard_normal(clean.size)
        scores.append(stoi(noise, clean))
        extended.append(estoi(noise, clean))
    assert np.mean(scores) < 0.3
    assert max(abs(e) for e in extended) < 0.1


def test_monotone_in_snr(rng):
    clean = synthetic.speech_like(4.0, 3)
    noise = rng.standard_normal(clean.size)
    noise *= np.sqrt(np.mean(clean**2) / np.mean(noise**2))
    mixes = [clean + noise * 10 ** (-snr / 20) for snr in (-5, 5, 15)]
    for fn in (stoi, estoi):
        values = [fn(m, clean) for m in mixes]
        assert values[0] < values[1] < values[2]


def test_stoi_bounded_and_deterministic(rng):
    clean = synthetic.speech_like(2.0, 4)
    x = clean + rng.standard_normal(clean.size) * 0.02
    a, b = stoi(x, clean), stoi(x, clean)
    assert a == b and -1 <= a <= 1 and math.isfinite(estoi(x, clean))


def test_stoi_too_short():
    with pytest.raises(InputError):
        stoi(np.ones(2000), np.ones(2000))
    with pytest.raises(InputError):
        stoi(np.ones(20000), np.ones(20001))
