"""Channel scores, six-channel fusion and the image-resolution union mask."""

import math

import numpy as np

from .core import CHANNELS, FusionResult, cell_to_patch
from .exceptions import DomainError, ShapeError


def score_from_log_nfa(log_nfa, score_decades=10.0):
    """``min(1, -log10(NFA) / score_decades)`` from the natural log of a meaningful NFA."""
    if log_nfa >= 0:
        raise DomainError(f"NFA={math.exp(log_nfa)} is not meaningful (must be < 1)")
    return min(1.0, -log_nfa / math.log(10.0) / score_decades)


def channel_score(min_nfa, score_decades=10.0):
    """Map the smallest kept NFA of a channel to [0, 1].

    ``None`` (no detection) gives 0.  An NFA that underflowed to 0 counts as
    infinitely significant and scores 1.
    """
    if min_nfa is None:
        return 0.0
    if not min_nfa < 1:
        raise DomainError(f"min_nfa={min_nfa} is not meaningful (must be < 1)")
    if min_nfa <= 0:
        return 1.0
    return score_from_log_nfa(math.log(min_nfa), score_decades)


def fuse_scores(channel_scores):
    """Mean of the strictly positive channel scores, or 0 if there are none."""
    scores = np.asarray(channel_scores, dtype=np.float64)
    if scores.shape != (len(CHANNELS),):
        raise ShapeError(f"expected {len(CHANNELS)} channel scores, got shape {scores.shape}")
    if not np.all((scores >= 0) & (scores <= 1)):
        raise DomainError("channel scores must lie in [0, 1]")
    positive = scores[scores > 0]
    return float(positive.mean()) if len(positive) else 0.0


def union_mask(results, geom):
    """Pixel mask covering every patch of every kept detection in a nonzero-score channel."""
    mask = np.zeros(geom.image_shape, dtype=np.uint8)
    for res in results:
        if res.geometry is not None and res.geometry != geom:
            raise ShapeError(f"channel {res.channel} was computed on a different heatmap geometry")
        if res.score <= 0:
            continue
        for region, _ in res.detections:
            region.check_bounds(geom)
            for u, v in region.cells:
                x, y, w, h = cell_to_patch((u, v), geom)
                mask[y:y + h, x:x + w] = 1
    return mask


def fuse(results, geom):
    """Combine the six per-channel results (canonical order) into a :class:`FusionResult`."""
    results = tuple(results)
    if [r.channel for r in results] != list(CHANNELS):
        raise ShapeError(f"expected one result per channel in order {CHANNELS}")
    scores = [r.score for r in results]
    return FusionResult(tuple(scores), fuse_scores(scores), union_mask(results, geom), results)
