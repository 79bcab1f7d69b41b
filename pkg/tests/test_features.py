import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from acontrario_tamper.core import geometry_for
from acontrario_tamper.exceptions import ConfigError, ImageTooSmall, ShapeError
from acontrario_tamper.features import (DEFAULT_ANGLES, PATCH_BINS, BlockinessClassifier, HeatmapTransformer,
                                        PeriodicityClassifier, Sinogram, baseline_jpeg_score,
                                        baseline_periodicity_score, blockiness_statistic, build_heatmap,
                                        laplacian_residual, make_classifier, n_freqs, patch_features,
                                        periodicity_statistic, radon_transform, spectral_features)
from acontrario_tamper.synth import smooth_noise, upsample_patch

N_FREQ = n_freqs(64)
unit_patches = arrays(np.float64, (64, 64), elements=st.floats(0, 1))


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_feature_dimensions():
    assert PATCH_BINS == 95 and N_FREQ == 48
    assert patch_features(np.zeros((64, 64))).shape == (len(DEFAULT_ANGLES) * 48,)


# --- laplacian -------------------------------------------------------------

def test_laplacian_constant_patch():
    assert not laplacian_residual(np.full((64, 64), 0.5)).any()


def test_laplacian_impulse_by_hand():
    patch = np.zeros((64, 64))
    patch[32, 32] = 1.0
    res = laplacian_residual(patch)
    expected = np.zeros((64, 64))
    expected[32, 32] = 4.0
    expected[31, 32] = expected[33, 32] = expected[32, 31] = expected[32, 33] = 1.0
    np.testing.assert_array_equal(res, expected)


def test_laplacian_border_point_reflection():
    # the pad value is 2 * edge - inner neighbour
    patch = np.zeros((64, 64))
    patch[0, 10] = 1.0
    res = laplacian_residual(patch)
    assert res[0, 10] == 2.0 and res[1, 10] == 1.0
    patch = np.zeros((64, 64))
    patch[1, 10] = 1.0
    assert laplacian_residual(patch)[0, 10] == 0.0


def test_laplacian_ramp_zero_at_border():
    y, x = np.indices((64, 64))
    res = laplacian_residual(0.2 + 0.01 * x - 0.003 * y)
    assert res.max() <= 1e-9


@given(unit_patches, st.floats(-1, 1), st.floats(-0.01, 0.01), st.floats(-0.01, 0.01))
@settings(max_examples=50, deadline=None)
def test_laplacian_ignores_added_affine(patch, a, b, c):
    y, x = np.indices(patch.shape)
    diff = laplacian_residual(patch + a + b * x + c * y) - laplacian_residual(patch)
    assert np.abs(diff).max() <= 1e-9


def test_laplacian_batched_matches_single(rng):
    batch = rng.random((3, 64, 64))
    np.testing.assert_array_equal(laplacian_residual(batch)[1], laplacian_residual(batch[1]))


# --- radon -----------------------------------------------------------------

def test_radon_zero_grid():
    assert not radon_transform(np.zeros((64, 64)), (0, 30, 45, 90, 135)).values.any()


def test_radon_ones_at_zero_degrees():
    proj = radon_transform(np.ones((64, 64)), (0,)).values[0]
    assert proj.shape == (95,)
    np.testing.assert_allclose(proj[15:79], 64.0, rtol=0, atol=1e-12)
    assert not proj[:15].any() and not proj[79:].any()


def test_radon_zero_degrees_is_column_sum(rng):
    grid = rng.random((64, 64))
    np.testing.assert_allclose(radon_transform(grid, (0,)).values[0, 15:79], grid.sum(axis=0), atol=1e-12)


@given(arrays(np.float64, (64, 64), elements=st.floats(-10, 10)),
       st.lists(st.floats(0, 179.99), min_size=1, max_size=4))
@settings(max_examples=30, deadline=None)
def test_radon_mass_conservation(grid, angles):
    sino = radon_transform(grid, angles)
    total = grid.sum()
    scale = max(abs(total), np.abs(grid).sum(), 1e-300)
    assert np.all(np.abs(sino.values.sum(axis=1) - total) <= 1e-6 * scale)


def test_radon_errors():
    with pytest.raises(ShapeError):
        radon_transform(np.zeros((64, 32)))
    with pytest.raises(ConfigError):
        radon_transform(np.zeros((64, 64)), ())
    with pytest.raises(ConfigError):
        radon_transform(np.zeros((64, 64)), (180.0,))


# --- spectra ---------------------------------------------------------------

def test_spectral_zero_sinogram():
    assert not spectral_features(Sinogram((0.0, 90.0), np.zeros((2, 95)))).any()


def test_spectral_pure_cosine_peak():
    k = np.arange(95)
    proj = np.cos(2 * np.pi * 8 * k / 95)
    feats = spectral_features(Sinogram((0.0,), proj[None, :]))
    assert feats.shape == (48,) and int(np.argmax(feats)) == 8


def test_spectral_noise_spectra_sum_to_one(rng):
    feats = spectral_features(Sinogram(DEFAULT_ANGLES, rng.standard_normal((4, 95))))
    np.testing.assert_allclose(feats.reshape(4, 48).sum(axis=1), 1.0, rtol=0, atol=1e-9)
    assert np.all(feats >= 0)


@given(arrays(np.float64, (4, 95), elements=st.floats(-5, 5)),
       arrays(np.float64, (4, 1), elements=st.floats(-100, 100)))
@settings(max_examples=50, deadline=None)
def test_spectral_constant_shift_invariance(proj, shift):
    # projections with no variation have no spectrum to compare; normalising
    # rounding residue there is meaningless
    assume(np.all(proj.std(axis=1) > 1e-3))
    a = spectral_features(Sinogram(DEFAULT_ANGLES, proj))
    b = spectral_features(Sinogram(DEFAULT_ANGLES, proj + shift))
    assert np.abs(a - b).max() <= 1e-9


# --- baseline scores -------------------------------------------------------

def test_periodicity_zero_features():
    assert baseline_periodicity_score(np.zeros(4 * 48)) == pytest.approx(sigmoid(-4.0), abs=1e-12)
    assert baseline_periodicity_score(np.zeros(4 * 48)) == pytest.approx(0.018, abs=5e-4)


def test_periodicity_dominant_peak():
    spectra = np.ones((4, 48))
    spectra[0, 12] = 10.0
    score = baseline_periodicity_score(spectra.ravel())
    assert score > 0.99
    assert score == pytest.approx(sigmoid(6.0), abs=1e-7)
    assert sigmoid(6.0) == pytest.approx(0.9975, abs=1e-4)


def test_periodicity_flat_spectrum():
    flat = np.full(4 * 48, 1.0 / 48)
    assert periodicity_statistic(flat) == pytest.approx(1.0, abs=1e-6)
    assert baseline_periodicity_score(flat) == pytest.approx(sigmoid(-3.0), abs=1e-6)
    assert sigmoid(-3.0) == pytest.approx(0.047, abs=5e-4)


def test_periodicity_band_is_configurable():
    spectra = np.ones((4, 48))
    spectra[0, 40] = 10.0
    assert periodicity_statistic(spectra.ravel(), band=(4, 23)) == pytest.approx(1.0, abs=1e-6)
    assert periodicity_statistic(spectra.ravel()) == pytest.approx(10.0, abs=1e-6)


def test_jpeg_constant_patch():
    assert blockiness_statistic(np.full((64, 64), 0.3)) == 1.0
    assert baseline_jpeg_score(np.full((64, 64), 0.3)) == pytest.approx(sigmoid(-2.0), abs=1e-12)
    assert sigmoid(-2.0) == pytest.approx(0.119, abs=5e-4)


def test_jpeg_block_pattern(rng):
    blocks = rng.random((8, 8))
    patch = np.kron(blocks, np.ones((8, 8)))
    assert baseline_jpeg_score(patch) > 0.95


def test_jpeg_noise_mean_score(rng):
    scores = baseline_jpeg_score(rng.random((100, 64, 64)))
    assert scores.shape == (100,)
    assert scores.mean() < 0.3


@given(unit_patches)
@settings(max_examples=25, deadline=None)
def test_scores_in_unit_interval(patch):
    assert 0.0 <= baseline_jpeg_score(patch) <= 1.0
    assert 0.0 <= baseline_periodicity_score(patch_features(patch)) <= 1.0


def test_upsampling_raises_periodicity(rng):
    orig = np.stack([smooth_noise(64, 2.0, rng=rng) for _ in range(40)])
    up = np.stack([upsample_patch(p, 1.5) for p in orig])
    clf = PeriodicityClassifier()
    s_orig = clf.predict_confidence(np.stack([patch_features(p) for p in orig]))
    s_up = clf.predict_confidence(np.stack([patch_features(p) for p in up]))
    assert np.median(s_up) > np.median(s_orig)


# --- heatmaps --------------------------------------------------------------

def test_heatmap_constant_image():
    hm = build_heatmap(np.full((64, 64), 0.4), "rescale_up", "periodicity")
    assert hm.values.shape == (1, 1)
    assert hm.values[0, 0] == pytest.approx(sigmoid(-4.0), abs=1e-7)


def test_heatmap_dims_640x480(rng):
    hm = build_heatmap(rng.random((480, 640)), "jpeg_q85")
    assert hm.geometry == geometry_for(640, 480)
    assert (hm.geometry.hm_width, hm.geometry.hm_height) == (65, 47)
    assert hm.values.shape == (47, 65)


def test_heatmap_matches_per_patch_classifier(rng):
    img = rng.random((100, 82))
    hm = build_heatmap(img, "shear", "periodicity")
    g = hm.geometry
    for u, v in [(0, 0), (g.hm_width - 1, g.hm_height - 1), (1, 2)]:
        patch = img[9 * v:9 * v + 64, 9 * u:9 * u + 64]
        expected = baseline_periodicity_score(patch_features(patch))
        assert hm.values[v, u] == np.float32(expected)


def test_heatmap_deterministic_across_runs_and_threads(rng):
    img = rng.random((300, 200))
    a = build_heatmap(img, "rotate_cw")
    b = build_heatmap(img, "rotate_cw")
    c = build_heatmap(img, "rotate_cw", n_jobs=3)
    assert a.values.tobytes() == b.values.tobytes() == c.values.tobytes()


def test_heatmap_too_small():
    with pytest.raises(ImageTooSmall):
        build_heatmap(np.zeros((63, 100)), "shear")


def test_transformer_channels_and_classifiers(rng):
    img = rng.random((80, 80))
    tr = HeatmapTransformer(classifiers={"rotate_cw": "blockiness"}).fit()
    hms = tr.transform(img)
    assert [h.channel for h in hms] == ["rescale_up", "rescale_down", "rotate_cw", "rotate_ccw", "shear",
                                        "jpeg_q85"]
    assert isinstance(tr.classifiers_["rotate_cw"], BlockinessClassifier)
    assert isinstance(tr.classifiers_["shear"], PeriodicityClassifier)
    np.testing.assert_array_equal(hms[2].values, hms[5].values)


def test_make_classifier_rejects_unknown():
    with pytest.raises(ConfigError):
        make_classifier("cnn", "shear")
