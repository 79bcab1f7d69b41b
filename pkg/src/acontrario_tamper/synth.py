"""Seeded synthetic data: Bernoulli heatmaps, textures, and local resampling forgeries."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .core import PATCH_SIZE, STRIDE, Heatmap, HeatmapGeometry
from .exceptions import DomainError
from .validation import check_image, check_probability, check_rect

TAMPER_OPS = ("upsample", "rotate", "shear")


def synth_heatmap(width, height, p_bg, planted=None, seed=0, channel="rescale_up",
                  patch_size=PATCH_SIZE, stride=STRIDE):
    """Heatmap of i.i.d. 0/1 confidences.

    ``planted`` is ``((u, v, w, h), p_fg)``: cells inside the rectangle are
    set with probability ``p_fg`` instead of ``p_bg``.  The geometry is that
    of the smallest image producing a ``width x height`` heatmap.
    """
    p_bg = check_probability(p_bg, "p_bg")
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise DomainError("heatmap must have at least one cell")
    geom = HeatmapGeometry((width - 1) * stride + patch_size, (height - 1) * stride + patch_size,
                           patch_size, stride)
    prob = np.full((height, width), p_bg)
    if planted is not None:
        rect, p_fg = planted
        u, v, w, h = check_rect(rect, width, height)
        prob[v:v + h, u:u + w] = check_probability(p_fg, "p_fg")
    rng = np.random.default_rng(seed)
    values = (rng.random((height, width)) < prob).astype(np.float32)
    return Heatmap(channel, geom, values)


def smooth_noise(size, sigma=2.0, seed=None, rng=None):
    """Gaussian-filtered white noise (periodic boundary), rescaled to [0, 1]."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo) if hi > lo else np.zeros_like(field)


def upsample_patch(patch, factor=1.5, size=PATCH_SIZE):
    """Bilinear ``factor`` upsampling followed by a centred ``size`` crop."""
    big = ndimage.zoom(np.asarray(patch, dtype=np.float64), factor, order=1)
    if min(big.shape) < size:
        raise DomainError(f"upsampled patch {big.shape} smaller than crop size {size}")
    y0 = (big.shape[0] - size) // 2
    x0 = (big.shape[1] - size) // 2
    return np.clip(big[y0:y0 + size, x0:x0 + size], 0.0, 1.0)


def synth_texture(size=512, seed=0):
    """Multi-scale smooth-noise texture in [0.05, 0.95] for end-to-end runs."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    for sigma, weight in ((16.0, 1.0), (4.0, 0.5), (1.5, 0.25)):
        layer = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
        img += weight * layer / layer.std()
    img = (img - img.min()) / (img.max() - img.min())
    return 0.05 + 0.9 * img


def parse_op(op):
    """Accept ``("rotate", 5)`` or ``"rotate:5"``; return ``(kind, amount)``."""
    if isinstance(op, str):
        kind, _, amount = op.partition(":")
        if not amount:
            raise DomainError(f"operation {op!r} needs an amount, e.g. 'upsample:1.5'")
        op = (kind, amount)
    kind, amount = op
    try:
        amount = float(amount)
    except (TypeError, ValueError):
        raise DomainError(f"bad amount {amount!r} for {kind}") from None
    if kind == "upsample":
        if not 1 < amount <= 2:
            raise DomainError(f"upsample factor {amount} outside (1, 2]")
    elif kind == "rotate":
        if not 1 <= abs(amount) <= 10:
            raise DomainError(f"rotation {amount} deg outside [1, 10] in magnitude")
    elif kind == "shear":
        if not 0 < abs(amount) <= 0.5:
            raise DomainError(f"shear {amount} outside 0 < |k| <= 0.5")
    else:
        raise DomainError(f"unknown operation {kind!r}; expected one of {TAMPER_OPS}")
    return kind, amount


def _inverse_map(kind, amount):
    """Matrix taking output (row, col) offsets to input offsets, about the rect centre."""
    if kind == "upsample":
        return np.eye(2) / amount
    if kind == "rotate":
        t = math.radians(amount)
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -s], [s, c]])
    return np.array([[1.0, 0.0], [-amount, 1.0]])  # horizontal shear


def synth_tamper(image, op, rect):
    """Resample the ``(x, y, w, h)`` region of ``image`` and paste it back.

    The transform (bilinear) is taken about the rectangle centre so the
    pasted content stays in place; pixels outside ``rect`` are untouched.
    Returns ``(tampered, ground_truth_mask)``.
    """
    image = check_image(image)
    kind, amount = parse_op(op)
    x, y, w, h = check_rect(rect, image.shape[1], image.shape[0], min_size=1)
    if w < PATCH_SIZE or h < PATCH_SIZE:
        raise DomainError(f"tamper rectangle {w}x{h} smaller than {PATCH_SIZE}x{PATCH_SIZE}")
    matrix = _inverse_map(kind, amount)
    center = np.array([y + (h - 1) / 2.0, x + (w - 1) / 2.0])
    offset = center - matrix @ center
    warped = ndimage.affine_transform(image, matrix, offset=offset, order=1, mode="reflect")
    out = image.copy()
    out[y:y + h, x:x + w] = np.clip(warped[y:y + h, x:x + w], 0.0, 1.0)
    truth = np.zeros(image.shape, dtype=np.uint8)
    truth[y:y + h, x:x + w] = 1
    return out, truth
