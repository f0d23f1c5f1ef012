import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from farfield.audio import read_mono, read_wav, write_wav
from farfield.errors import DegenerateSignalError, FormatError, InputError, ManifestError
from farfield.jsonl import read_jsonl
from farfield.mixer import (
    MixtureSpec,
    MultichannelClip,
    convolve_multichannel,
    estimate_source_snr,
    fit_length,
    load_clip,
    measured_snr,
    mix_at_snr,
    passes_speech_gate,
    render_mixture,
    synthesize_dataset,
)
from farfield.roomsim import Rir


def naive_convolve(x, h):
    out = np.zeros(x.size + h.size - 1)
    for i, xi in enumerate(x):
        out[i:i + h.size] += xi * h
    return out


def test_impulse_dry_returns_rir(rng):
    rir = Rir(rng.standard_normal((4, 50)))
    dry = np.zeros(10)
    dry[0] = 1
    out = convolve_multichannel(dry, rir).samples
    np.testing.assert_allclose(out[:, :50], rir.samples, atol=1e-12)


def test_impulse_rir_returns_dry(rng):
    dry = rng.standard_normal(300)
    out = convolve_multichannel(dry, Rir(np.eye(1, 20).repeat(3, 0))).samples
    for c in range(3):
        np.testing.assert_allclose(out[c, :300], dry, atol=1e-12)


def test_convolution_matches_naive_oracle(rng):
    dry = rng.standard_normal(16000)
    rir = Rir(rng.standard_normal((2, 1600)))
    out = convolve_multichannel(dry, rir).samples
    for c in range(2):
        ref = naive_convolve(dry, rir.samples[c])
        assert np.linalg.norm(out[c] - ref) / np.linalg.norm(ref) < 1e-9


def test_convolution_length_and_rate():
    rir = Rir(np.ones((2, 10)), 16000)
    assert convolve_multichannel(np.ones(100), rir, length=50).samples.shape == (2, 50)
    assert convolve_multichannel(np.ones(100), rir, length=500).samples.shape == (2, 500)
    with pytest.raises(FormatError):
        convolve_multichannel(np.ones(100), Rir(np.ones((2, 10)), 8000))


def clip(x):
    return MultichannelClip(np.asarray(x, float))


def test_zero_db_equal_rms(rng):
    s, n = rng.standard_normal((3, 8000)), 5 * rng.standard_normal((3, 8000))
    mixed = mix_at_snr(clip(s), clip(n), 0.0)
    scaled = mixed.samples - s
    assert np.sqrt(np.mean(s[0] ** 2)) == pytest.approx(np.sqrt(np.mean(scaled[0] ** 2)), rel=1e-12)


def test_ten_db_on_white(rng):
    s, n = rng.standard_normal((2, 160000)), rng.standard_normal((2, 160000))
    mixed = mix_at_snr(clip(s), clip(n), 10.0)
    a = mixed.provenance["noise_scale"]
    assert a == pytest.approx(10 ** (-10 / 20), rel=0.01)
    assert measured_snr(s[0], mixed.samples[0] - s[0]) == pytest.approx(10.0, abs=1e-9)
    np.testing.assert_allclose(mixed.samples - s, a * n, atol=1e-12)


@given(snr=st.floats(0, 30), ref=st.integers(0, 2), seed=st.integers(0, 1000))
def test_mix_hits_requested_snr(snr, ref, seed):
    r = np.random.default_rng(seed)
    s, n = r.standard_normal((3, 2000)), r.standard_normal((3, 2000)) * r.uniform(0.1, 10)
    mixed = mix_at_snr(clip(s), clip(n), snr, ref)
    assert measured_snr(s[ref], mixed.samples[ref] - s[ref]) == pytest.approx(snr, abs=1e-9)


def test_non_finite_snr_and_zero_energy(rng):
    s = rng.standard_normal((2, 100))
    with pytest.raises(InputError):
        mix_at_snr(clip(s), clip(s), math.inf)
    with pytest.raises(DegenerateSignalError):
        mix_at_snr(clip(np.zeros((2, 100))), clip(s), 5)
    with pytest.raises(DegenerateSignalError):
        mix_at_snr(clip(s), clip(np.zeros((2, 100))), 5)


def test_spec_validation():
    spec = MixtureSpec("s.wav", "n.wav", "a", "b", 40.0)
    with pytest.raises(InputError):
        spec.validate()
    with pytest.raises(InputError):
        MixtureSpec("s.wav", "n.wav", "a", "b", float("nan")).validate()
    MixtureSpec("s.wav", "n.wav", "a", "b", 30.0).validate()
    assert MixtureSpec.from_dict(spec.to_dict()) == spec


def test_render_mixture_is_linear_and_aligned(rng):
    srir, nrir = Rir(rng.standard_normal((4, 200)) * 0.05), Rir(rng.standard_normal((4, 200)) * 0.05)
    speech, noise = rng.standard_normal(4000) * 0.1, rng.standard_normal(4000) * 0.1
    mix, ref, alpha, scale = render_mixture(speech, noise, srir, nrir, 5.0, 4000)
    wet_s = convolve_multichannel(speech, srir, length=4000).samples
    wet_n = convolve_multichannel(noise, nrir, length=4000).samples
    np.testing.assert_allclose(mix - alpha * wet_n, scale * wet_s, atol=1e-12)
    np.testing.assert_allclose(ref, scale * wet_s[0], atol=1e-12)


def test_peak_normalization_keeps_snr(rng):
    srir = Rir(np.eye(1, 10).repeat(2, 0))
    speech, noise = rng.standard_normal(2000) * 3, rng.standard_normal(2000)
    mix, ref, alpha, scale = render_mixture(speech, noise, srir, srir, 10.0, 2000)
    assert scale < 1 and np.max(np.abs(mix)) == pytest.approx(1.0)
    assert measured_snr(ref, mix[0] - ref) == pytest.approx(10.0, abs=1e-9)


def test_fit_length(rng):
    x = np.arange(10.0)
    assert fit_length(x, 4, rng).size == 4
    padded = fit_length(x, 20, rng)
    assert padded.size == 20 and padded.sum() == x.sum()
    np.testing.assert_array_equal(fit_length(x, 25, rng, loop=True)[:20], np.tile(x, 2))


def test_speech_gate(rng):
    fs = 16000
    quiet = rng.standard_normal(fs * 2) * 1e-4
    active = quiet.copy()
    active[fs // 2:fs] += np.sin(2 * np.pi * 200 * np.arange(fs // 2) / fs)
    assert passes_speech_gate(active)
    assert not passes_speech_gate(rng.standard_normal(fs * 2))
    assert estimate_source_snr(active) > 15


def test_dataset_cardinality_and_snr(small_dataset):
    manifest, specs = small_dataset
    rows = read_jsonl(manifest)
    assert len(rows) == len(specs) == 3
    base = manifest.parent
    assert len(list((base / "mix").glob("*.wav"))) == 3
    assert len(list((base / "ref").glob("*.wav"))) == 3
    for row, spec in zip(rows, specs):
        clip_, ref = load_clip(row, manifest)
        assert clip_.samples.shape == (8, 32000) and ref.shape == (32000,)
        assert np.max(np.abs(clip_.samples)) <= 1.0
        residual = clip_.samples[row["ref_channel"]] - ref
        assert measured_snr(ref, residual) == pytest.approx(spec.snr_db, abs=0.01)
        assert row["speech_rir_id"] == spec.speech_rir_id and "noise_scale" in row


def test_dataset_rerun_is_byte_identical(tmp_path, small_rirs, small_corpus):
    from farfield import synthetic

    manifest, rows = small_rirs
    specs = synthetic.make_specs(*small_corpus, rows, 2, seed=8, clip_seconds=1.0)
    synthesize_dataset(specs, manifest, tmp_path / "a")
    synthesize_dataset(specs, manifest, tmp_path / "b", jobs=2)
    for rel in ("dataset.jsonl", "mix/clip00000.wav", "ref/clip00001.wav"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_missing_assets_listed(tmp_path, small_rirs):
    manifest, _ = small_rirs
    specs = [MixtureSpec("nope.wav", "gone.wav", "rir00000", "rir99999", 5.0)]
    with pytest.raises(ManifestError) as info:
        synthesize_dataset(specs, manifest, tmp_path)
    assert set(info.value.missing) == {"nope.wav", "gone.wav", "rir99999"}


def test_wav_io(tmp_path, rng):
    x = rng.uniform(-1, 1, (3, 100))
    write_wav(tmp_path / "x.wav", x, 16000)
    back, rate = read_wav(tmp_path / "x.wav")
    assert rate == 16000
    np.testing.assert_allclose(back, x, atol=1e-7)
    from scipy.io import wavfile

    wavfile.write(tmp_path / "p.wav", 16000, (x[0] * 32767).astype(np.int16))
    np.testing.assert_allclose(read_mono(tmp_path / "p.wav", 16000), x[0], atol=1e-4)
    with pytest.raises(FormatError):
        read_mono(tmp_path / "p.wav", 8000)
    with pytest.raises(FormatError):
        read_mono(tmp_path / "x.wav")


def test_multi_array_single_noise_gain(rng):
    from farfield.mixer import render_multi_array

    srirs = [Rir(rng.standard_normal((k, 100)) * 0.05) for k in (8, 16)]
    nrirs = [Rir(rng.standard_normal((k, 100)) * s) for k, s in ((8, 0.05), (16, 0.2))]
    speech, noise = rng.standard_normal(3000) * 0.1, rng.standard_normal(3000) * 0.1
    mixes, refs, alpha = render_multi_array(speech, noise, srirs, nrirs, 12.0, 3000)
    assert [m.shape for m in mixes] == [(8, 3000), (16, 3000)]
    snrs = [measured_snr(r, m[0] - r) for m, r in zip(mixes, refs)]
    assert snrs[0] == pytest.approx(12.0, abs=1e-9)
    assert snrs[1] < snrs[0] - 6
    for m, r, nr in zip(mixes, refs, nrirs):
        wet = convolve_multichannel(noise, nr, length=3000).samples[0]
        np.testing.assert_allclose(m[0] - r, alpha * wet, atol=1e-12)
