import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from bandsplit.bands import (BandKind, BandSpec, BandSpecError, band_table_csv, build_band_spec,
                             custom_band_spec, from_dict, load_band_spec, save_band_spec, split,
                             to_dict)

BUILTIN = [k for k in BandKind if k is not BandKind.CUSTOM]


def check_invariants(spec: BandSpec):
    w = spec.weights
    assert w.min() >= 0 and w.max() <= 1
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-6)
    covered = np.zeros(spec.n_bins, bool)
    for idx in spec.bins:
        assert len(idx) > 0
        assert np.all(np.diff(idx) == 1), "band is not contiguous"
        covered[idx] = True
    assert covered.all()
    for b, idx in enumerate(spec.bins):
        np.testing.assert_array_equal(idx, np.flatnonzero(w[b] > 0))


@pytest.mark.parametrize("kind", BUILTIN)
@pytest.mark.parametrize("n_bands", [8, 48, 64])
def test_builtin_invariants(kind, n_bands):
    spec = build_band_spec(kind, 44100, 2048, n_bands)
    check_invariants(spec)
    for a, b in zip(spec.bins[:-1], spec.bins[1:]):
        assert np.intersect1d(a, b).size > 0, "adjacent bands do not overlap"


@pytest.mark.parametrize("kind", BUILTIN)
def test_desk_invariants(kind):
    check_invariants(build_band_spec(kind, 8000, 512, 8))


@pytest.mark.parametrize("kind", BUILTIN)
def test_two_bands(kind):
    spec = build_band_spec(kind, 44100, 2048, 2)
    check_invariants(spec)
    assert spec.n_bands == 2


@pytest.mark.parametrize("kind", ["mel", "tribark", "erb"])
def test_triangular_unimodal(kind):
    spec = build_band_spec(kind, 44100, 2048, 64)
    for b, idx in enumerate(spec.bins):
        raw = spec.weights[b, idx]
        peak = int(np.argmax(raw))
        # normalised weights can plateau where only one band is active
        assert np.all(np.diff(raw[:peak + 1]) >= -1e-12)
        assert np.all(np.diff(raw[peak:]) <= 1e-12)


def test_mel_widths_increase():
    spec = build_band_spec("mel", 44100, 2048, 64)
    rho = spearmanr(np.arange(64), spec.band_widths).correlation
    assert rho > 0.9


def test_bark_bands_are_wider_than_tribark():
    bark = build_band_spec("bark", 44100, 2048, 64)
    tri = build_band_spec("tribark", 44100, 2048, 64)
    assert bark.band_widths.sum() > 2 * tri.band_widths.sum()


def test_musical_constant_cents():
    fs, n_fft, n_bands = 44100, 2048, 64
    spec = build_band_spec("musical", fs, n_fft, n_bands)
    df = fs / n_fft
    # independent geometric grid: equal steps in semitones from the first bin up to Nyquist
    semis = 12 * math.log2((fs / 2) / df)
    edges = df * 2.0 ** (semis * np.arange(n_bands + 2) / (n_bands + 2) / 12)
    ratios = edges[2:] / edges[:-2]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    for b in range(1, n_bands - 1):
        idx = spec.bins[b]
        assert abs(idx[0] * df - edges[b]) <= df
        assert abs(idx[-1] * df - edges[b + 2]) <= df


def test_musical_overcomplete():
    spec = build_band_spec("musical", 44100, 2048, 64)
    X = np.random.default_rng(0).standard_normal((1, spec.n_bins, 5))
    subs = split(spec, X)
    assert sum(s.shape[-2] for s in subs) >= spec.n_bins


def test_too_many_bands_names_band():
    with pytest.raises(BandSpecError, match=r"band \d+ contains no FFT bins"):
        build_band_spec("mel", 44100, 2048, 2000)


def test_bad_arguments():
    with pytest.raises(BandSpecError):
        build_band_spec("mel", 44100, 2048, 1)
    with pytest.raises(BandSpecError):
        build_band_spec("mel", 44100, 2047, 8)
    with pytest.raises(BandSpecError):
        build_band_spec("custom", 44100, 2048, 8)


def test_split_disjoint_and_overlapping():
    X = np.arange(6 * 3).reshape(1, 6, 3) + 1j
    disjoint = custom_band_spec([range(0, 3), range(3, 6)], fs=1000, n_fft=10)
    subs = split(disjoint, X)
    np.testing.assert_array_equal(np.concatenate(subs, axis=-2), X)
    overlap = custom_band_spec([range(0, 4), range(2, 6)], fs=1000, n_fft=10)
    a, b = split(overlap, X)
    np.testing.assert_array_equal(a[..., 2:4, :], b[..., 0:2, :])
    np.testing.assert_allclose(overlap.weights[:, 2:4], 0.5)
    with pytest.raises(ValueError):
        split(overlap, X[..., :5, :])


@pytest.mark.parametrize("kind", BUILTIN)
def test_json_round_trip(kind, tmp_path):
    spec = build_band_spec(kind, 44100, 2048, 48)
    save_band_spec(spec, tmp_path / "b.json")
    back = load_band_spec(tmp_path / "b.json")
    assert back.kind == spec.kind and back.n_fft == spec.n_fft and back.fs == spec.fs
    assert np.array_equal(back.weights, spec.weights)
    assert back.weights.tobytes() == spec.weights.tobytes()


def test_custom_disjoint_accepted():
    w = np.zeros((2, 6))
    w[0, :3] = 1
    w[1, 3:] = 1
    spec = from_dict({"kind": "custom", "fs": 1000, "n_fft": 10, "B": 2, "weights": w.ravel().tolist()})
    assert np.all(spec.weights[spec.weights > 0] == 1)


def test_loader_rejects_uncovered_bin():
    doc = to_dict(build_band_spec("mel", 8000, 512, 8))
    w = np.array(doc["weights"])
    w[:, 10] = 0
    doc["weights"] = w.tolist()
    with pytest.raises(BandSpecError, match="uncovered bin 10"):
        from_dict(doc)


def test_loader_rejects_column_sum():
    doc = to_dict(build_band_spec("mel", 8000, 512, 8))
    w = np.array(doc["weights"])
    w[:, 20] *= 0.9
    doc["weights"] = w.tolist()
    with pytest.raises(BandSpecError, match="column sum"):
        from_dict(doc)


def test_band_table_csv():
    spec = build_band_spec("musical", 44100, 2048, 64)
    lines = band_table_csv(spec).strip().splitlines()
    assert lines[0] == "band,f_lo_hz,f_hi_hz,width_bins"
    assert len(lines) == 65
    first = lines[1].split(",")
    assert float(first[1]) == 0.0
    assert float(lines[-1].split(",")[2]) == pytest.approx(22050.0)
