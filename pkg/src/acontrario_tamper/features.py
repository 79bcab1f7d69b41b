"""Per-patch resampling features and the patch classifiers that turn them into heatmaps.

Feature chain for one 64x64 patch::

    |4-neighbour Laplacian|  ->  Radon projections  ->  per-angle |DFT| spectra

Classifiers are small estimator objects scoring either the feature vector or
the raw patch.  The two analytic baselines stand in for trained networks;
anything implementing :class:`PatchClassifier` can be plugged in instead.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin

from .core import CHANNELS, PATCH_SIZE, RESAMPLING_CHANNELS, STRIDE, Heatmap, channel_index, geometry_for
from .exceptions import ConfigError, ShapeError
from .validation import check_image, check_patch

DEFAULT_ANGLES = (0.0, 45.0, 90.0, 135.0)
EPS = 1e-9
_CHUNK = 256


PATCH_BINS = 95  # projection length for 64-pixel patches
# lower edge clears the sidelobes of the zero-padded projection support;
# upper edge None means Nyquist (x1.5 upsampling peaks near B/3)
DEFAULT_BAND = (8, None)


def n_bins(size):
    """Projection length for a ``size x size`` grid.

    95 for the standard 64-pixel patch; other sizes use
    ``ceil(size * sqrt(2)) + 1``, enough to cover the diagonal.
    """
    if size == PATCH_SIZE:
        return PATCH_BINS
    return math.ceil(size * math.sqrt(2)) + 1


def n_freqs(size):
    return n_bins(size) // 2 + 1


def laplacian_residual(patch):
    """Magnitude of the 3x3 4-neighbour Laplacian (linear-prediction error).

    Borders are padded by point reflection through the edge pixel
    (reflect-101 geometry, odd symmetry: ``p[-1] = 2 p[0] - p[1]``), which
    continues any affine ramp, so affine patches give an all-zero residual
    everywhere.  Leading batch axes are allowed.
    """
    patch = np.asarray(patch, dtype=np.float64)
    pad = [(0, 0)] * (patch.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(patch, pad, mode="reflect", reflect_type="odd")
    lap = (
        p[..., :-2, 1:-1] + p[..., 2:, 1:-1] + p[..., 1:-1, :-2] + p[..., 1:-1, 2:]
        - 4.0 * p[..., 1:-1, 1:-1]
    )
    return np.abs(lap)


@dataclass(frozen=True, eq=False)
class Sinogram:
    angles: tuple
    values: np.ndarray  # (n_angles, n_bins)

    @property
    def n_bins(self):
        return self.values.shape[1]


def _check_angles(angles):
    angles = tuple(float(a) for a in angles)
    if not angles:
        raise ConfigError("at least one projection angle is required")
    for a in angles:
        if not 0.0 <= a < 180.0:
            raise ConfigError(f"projection angle {a} outside [0, 180)")
    return angles


@lru_cache(maxsize=16)
def _radon_operator(size, angles):
    """Sparse (n_angles * B, size * size) projection matrix.

    Each pixel's value is split between the two nearest bins along the
    rotated axis with linear weights, so every projection conserves mass.
    Axis-aligned angles land exactly on bins ``pad .. pad + size - 1``.
    """
    B = n_bins(size)
    pad = (B - size) // 2
    c = (size - 1) / 2.0
    y, x = np.indices((size, size))
    x = x.ravel() - c
    y = y.ravel() - c
    pix = np.arange(size * size)
    rows, cols, vals = [], [], []
    for k, theta in enumerate(angles):
        t = np.deg2rad(theta)
        pos = x * math.cos(t) + y * math.sin(t) + c + pad
        # snap away cos(90 deg) ~ 6e-17 style noise
        pos = np.round(pos, 9)
        b0 = np.floor(pos).astype(np.int64)
        w1 = pos - b0
        if b0.min() < 0 or b0.max() + 1 >= B:
            raise ShapeError("projection bins do not cover the rotated grid")
        rows += [k * B + b0, k * B + b0 + 1]
        cols += [pix, pix]
        vals += [1.0 - w1, w1]
    op = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(angles) * B, size * size),
    )
    op.sum_duplicates()
    return op


def radon_transform(grid, angles=DEFAULT_ANGLES):
    """Project a square grid along each angle (degrees, in [0, 180))."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ShapeError(f"radon_transform needs a square 2-D grid, got {grid.shape}")
    angles = _check_angles(angles)
    op = _radon_operator(grid.shape[0], angles)
    values = (op @ grid.ravel()).reshape(len(angles), -1)
    return Sinogram(angles, values)


def _batch_sinograms(grids, angles):
    n, size, _ = grids.shape
    op = _radon_operator(size, angles)
    # sparse product is sequential, so results do not depend on BLAS threading
    out = (op @ grids.reshape(n, -1).T).T
    return out.reshape(n, len(angles), -1)


def _normalized_spectra(proj):
    proj = proj - proj.mean(axis=-1, keepdims=True)
    mag = np.abs(np.fft.rfft(proj, axis=-1))
    total = mag.sum(axis=-1, keepdims=True)
    ok = total >= 1e-12
    return np.where(ok, mag / np.where(ok, total, 1.0), 0.0)


def spectral_features(sinogram):
    """Energy-normalised DFT magnitude of each mean-removed projection, concatenated.

    Each angle contributes ``B // 2 + 1`` values summing to one, or all zeros
    when the projection carries no energy.
    """
    values = sinogram.values if isinstance(sinogram, Sinogram) else np.asarray(sinogram, dtype=np.float64)
    return _normalized_spectra(values).ravel()


def patch_features(patch, angles=DEFAULT_ANGLES):
    patch = check_patch(patch, np.shape(patch)[-1])
    return spectral_features(radon_transform(laplacian_residual(patch), angles))


def _logistic(t, t0, scale):
    return expit((np.asarray(t, dtype=np.float64) - t0) / scale)


def periodicity_statistic(features, n_freq=None, band=DEFAULT_BAND):
    """Largest in-band peak-to-median ratio over all angles.

    ``features`` may be one vector or a ``(n, d)`` batch; ``n_freq`` defaults
    to the spectrum length of a 64-pixel patch.  ``band`` is an inclusive
    range of frequency indices; ``None`` as upper edge means ``B // 2``.
    """
    features = np.asarray(features, dtype=np.float64)
    n_freq = n_freq or n_freqs(PATCH_SIZE)
    lo, hi = band
    if hi is None:
        hi = n_freq - 1
    spectra = features.reshape(features.shape[:-1] + (-1, n_freq))[..., lo:hi + 1]
    ratio = spectra.max(axis=-1) / (np.median(spectra, axis=-1) + EPS)
    return ratio.max(axis=-1)


def baseline_periodicity_score(features, t0=4.0, scale=1.0, band=DEFAULT_BAND, n_freq=None):
    """Logistic-mapped periodicity statistic; a confidence in (0, 1)."""
    return _logistic(periodicity_statistic(features, n_freq, band), t0, scale)


def blockiness_statistic(patch, block=8):
    """Mean |second difference| on 8-aligned rows/columns over the mean elsewhere."""
    p = np.asarray(patch, dtype=np.float64)
    dh = np.abs(p[..., :, :-2] - 2 * p[..., :, 1:-1] + p[..., :, 2:])  # column index 1..W-2
    dv = np.abs(p[..., :-2, :] - 2 * p[..., 1:-1, :] + p[..., 2:, :])  # row index 1..H-2
    on_h = (np.arange(1, p.shape[-1] - 1) % block) == 0
    on_v = (np.arange(1, p.shape[-2] - 1) % block) == 0
    batch = p.shape[:-2]
    on = np.concatenate([dh[..., :, on_h].reshape(batch + (-1,)), dv[..., on_v, :].reshape(batch + (-1,))], axis=-1)
    off = np.concatenate([dh[..., :, ~on_h].reshape(batch + (-1,)), dv[..., ~on_v, :].reshape(batch + (-1,))], axis=-1)
    return (on.mean(axis=-1) + EPS) / (off.mean(axis=-1) + EPS)


def baseline_jpeg_score(patch, t0=1.5, scale=0.25, block=8):
    return _logistic(blockiness_statistic(patch, block), t0, scale)


class PatchClassifier(BaseEstimator):
    """Interface for per-patch scorers.

    Subclasses set ``input_kind`` to ``"features"`` (spectral feature vectors)
    or ``"patch"`` (raw luminance patches) and implement
    :meth:`predict_confidence` on a batch.  Scoring must be deterministic and
    reentrant; outputs are clipped into [0, 1].
    """

    input_kind = "features"

    def fit(self, X=None, y=None):
        return self

    def predict_confidence(self, X):
        raise NotImplementedError

    def confidence(self, x):
        """Score a single feature vector or patch."""
        return float(self.predict_confidence(np.asarray(x)[None])[0])


class PeriodicityClassifier(PatchClassifier):
    input_kind = "features"

    def __init__(self, t0=4.0, scale=1.0, band=DEFAULT_BAND):
        self.t0 = t0
        self.scale = scale
        self.band = band

    def predict_confidence(self, X):
        s = baseline_periodicity_score(X, self.t0, self.scale, tuple(self.band))
        return np.clip(s, 0.0, 1.0)


class BlockinessClassifier(PatchClassifier):
    input_kind = "patch"

    def __init__(self, t0=1.5, scale=0.25, block=8):
        self.t0 = t0
        self.scale = scale
        self.block = block

    def predict_confidence(self, X):
        return np.clip(baseline_jpeg_score(X, self.t0, self.scale, self.block), 0.0, 1.0)


CLASSIFIERS = {"periodicity": PeriodicityClassifier, "blockiness": BlockinessClassifier}


def default_classifier(channel):
    channel_index(channel)
    return PeriodicityClassifier() if channel in RESAMPLING_CHANNELS else BlockinessClassifier()


def make_classifier(spec, channel):
    """Resolve a classifier name, instance, or ``None`` (channel default)."""
    if spec is None or spec == "auto":
        return default_classifier(channel)
    if isinstance(spec, PatchClassifier):
        return spec
    try:
        return CLASSIFIERS[spec]()
    except (KeyError, TypeError):
        raise ConfigError(f"unknown classifier {spec!r}; expected one of {sorted(CLASSIFIERS)}") from None


class _PatchBank:
    """Lazily computed per-cell patches and features for one image."""

    def __init__(self, image, geom, angles, n_jobs=1):
        self.image = image
        self.geom = geom
        self.angles = _check_angles(angles)
        self.n_jobs = max(1, int(n_jobs or 1))
        view = np.lib.stride_tricks.sliding_window_view(image, (geom.patch_size, geom.patch_size))
        self._windows = view[::geom.stride, ::geom.stride][: geom.hm_height, : geom.hm_width]
        self._features = None

    def _chunks(self):
        n = self.geom.n_cells
        return [(i, min(i + _CHUNK, n)) for i in range(0, n, _CHUNK)]

    def patches(self, lo, hi):
        v, u = np.divmod(np.arange(lo, hi), self.geom.hm_width)
        return self._windows[v, u]

    def _map(self, fn):
        chunks = self._chunks()
        if self.n_jobs == 1 or len(chunks) == 1:
            return [fn(lo, hi) for lo, hi in chunks]
        with ThreadPoolExecutor(self.n_jobs) as pool:
            return list(pool.map(lambda c: fn(*c), chunks))

    def features(self):
        if self._features is None:
            def run(lo, hi):
                res = laplacian_residual(self.patches(lo, hi))
                return _normalized_spectra(_batch_sinograms(res, self.angles)).reshape(hi - lo, -1)
            self._features = np.concatenate(self._map(run))
        return self._features

    def score(self, classifier):
        if classifier.input_kind == "features":
            feats = self.features()
            parts = self._map(lambda lo, hi: classifier.predict_confidence(feats[lo:hi]))
        elif classifier.input_kind == "patch":
            parts = self._map(lambda lo, hi: classifier.predict_confidence(self.patches(lo, hi)))
        else:
            raise ConfigError(f"classifier input_kind {classifier.input_kind!r} not understood")
        conf = np.clip(np.concatenate(parts), 0.0, 1.0)
        return conf.reshape(self.geom.hm_shape)


def build_heatmap(image, channel, classifier=None, patch_size=PATCH_SIZE, stride=STRIDE,
                  angles=DEFAULT_ANGLES, n_jobs=1):
    """Slide the classifier over every patch of ``image`` and return the channel heatmap."""
    image = check_image(image, patch_size)
    geom = geometry_for(image.shape[1], image.shape[0], patch_size, stride)
    bank = _PatchBank(image, geom, angles, n_jobs)
    return Heatmap(channel, geom, bank.score(make_classifier(classifier, channel)))


class HeatmapTransformer(TransformerMixin, BaseEstimator):
    """Turn an image into one heatmap per channel.

    Parameters
    ----------
    channels : sequence of str, optional
        Channels to produce, default all six in canonical order.
    classifiers : str, PatchClassifier or dict, optional
        One classifier for every channel, or a ``{channel: classifier}``
        mapping.  Unlisted channels get their baseline detector.
    patch_size, stride : int
    angles : sequence of float
        Radon projection angles in degrees.
    n_jobs : int
        Worker threads for patch scoring; results do not depend on it.
    """

    def __init__(self, channels=None, classifiers=None, patch_size=PATCH_SIZE, stride=STRIDE,
                 angles=DEFAULT_ANGLES, n_jobs=1):
        self.channels = channels
        self.classifiers = classifiers
        self.patch_size = patch_size
        self.stride = stride
        self.angles = angles
        self.n_jobs = n_jobs

    def _resolved(self):
        channels = tuple(self.channels) if self.channels is not None else CHANNELS
        for ch in channels:
            channel_index(ch)
        spec = self.classifiers
        return [
            (ch, make_classifier(spec.get(ch) if isinstance(spec, dict) else spec, ch))
            for ch in channels
        ]

    def fit(self, X=None, y=None):
        _check_angles(self.angles)
        self.classifiers_ = dict(self._resolved())
        return self

    def transform(self, X):
        """Heatmaps for image ``X`` as a tuple in channel order."""
        image = check_image(X, self.patch_size)
        geom = geometry_for(image.shape[1], image.shape[0], self.patch_size, self.stride)
        self.geometry_ = geom
        bank = _PatchBank(image, geom, self.angles, self.n_jobs)
        classifiers = getattr(self, "classifiers_", None) or dict(self._resolved())
        return tuple(Heatmap(ch, geom, bank.score(clf)) for ch, clf in classifiers.items())
