"""A-contrario scoring of one heatmap.

Background model: after thresholding, heatmap cells are i.i.d. Bernoulli(p)
with ``p`` estimated from the whole mask.  A candidate region with ``n``
cells of which ``r`` are set has number of false alarms

    NFA = (#candidates) * P[Binomial(n, p) >= r]

and is reported when NFA < 1.  Overlapping detections are culled greedily
in order of increasing NFA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import bdtrc, gammaln, logsumexp
from sklearn.base import BaseEstimator

from .core import BinaryMask, ChannelResult, Heatmap, NfaRecord
from .exceptions import ConfigError, DomainError
from .fusion import channel_score

TAIL_MODES = ("exact", "hoeffding", "auto")
_TINY = 1e-280  # below this the direct tail is redone in log space


@dataclass(frozen=True)
class AcontrarioConfig:
    threshold_c: float = 0.75
    tail_mode: str = "auto"
    auto_cutoff_n: int = 10_000
    score_decades: float = 10.0

    def __post_init__(self):
        if not 0 < self.threshold_c < 1:
            raise ConfigError(f"threshold_c={self.threshold_c} must lie in (0, 1)")
        if self.tail_mode not in TAIL_MODES:
            raise ConfigError(f"tail_mode must be one of {TAIL_MODES}")
        if self.auto_cutoff_n < 0:
            raise ConfigError("auto_cutoff_n must be nonnegative")
        if not self.score_decades > 0:
            raise ConfigError("score_decades must be positive")


def threshold_heatmap(heatmap, c=0.75):
    """Binary mask of cells with confidence strictly above ``c``."""
    if not 0 < c < 1:
        raise ConfigError(f"threshold {c} must lie in (0, 1)")
    return BinaryMask(heatmap.geometry, (heatmap.values.astype(np.float64) > float(c)).astype(np.uint8))


def estimate_p(mask):
    """Laplace-smoothed fraction of set cells, ``(ones + 1) / (N + 2)``."""
    bits = mask.bits if isinstance(mask, BinaryMask) else np.asarray(mask)
    n = bits.size
    if n < 1:
        raise DomainError("cannot estimate p from an empty mask")
    return (int(bits.sum(dtype=np.int64)) + 1) / (n + 2)


def _check_tail_args(n, r, p):
    n, r = int(n), int(r)
    if n < 0 or r < 0:
        raise DomainError("n and r must be nonnegative")
    if r > n:
        raise DomainError(f"r={r} exceeds n={n}")
    if not 0 < p < 1:
        raise DomainError(f"p={p} must lie in (0, 1)")
    return n, r, float(p)


def log_binom_tail_exact(n, r, p):
    """Natural log of P[Binomial(n, p) >= r], summed in log space."""
    n, r, p = _check_tail_args(n, r, p)
    if r == 0:
        return 0.0
    if r == n:
        return n * math.log(p)  # single term; matches the bound's a = 1 limit bit for bit
    tail = float(bdtrc(r - 1, n, p))
    if tail > _TINY:
        return min(0.0, math.log(tail))
    k = np.arange(r, n + 1, dtype=np.float64)
    log_pmf = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
               + k * math.log(p) + (n - k) * math.log1p(-p))
    return min(0.0, float(logsumexp(log_pmf)))


def binom_tail_exact(n, r, p):
    """P[Binomial(n, p) >= r]."""
    return math.exp(log_binom_tail_exact(n, r, p))


def _kl_bernoulli(a, p):
    """KL(a || p) between Bernoulli laws, with the a = 1 limit."""
    if a >= 1.0:
        return -math.log(p)
    return a * math.log(a / p) + (1.0 - a) * math.log((1.0 - a) / (1.0 - p))


def log_binom_tail_hoeffding(n, r, p):
    """Log of the Chernoff-Hoeffding bound ``exp(-n KL(r/n || p))`` (0 when r/n <= p)."""
    n, r, p = _check_tail_args(n, r, p)
    if n == 0 or r / n <= p:
        return 0.0
    return -n * _kl_bernoulli(r / n, p)


def binom_tail_hoeffding(n, r, p):
    """Upper bound on P[Binomial(n, p) >= r]."""
    return math.exp(log_binom_tail_hoeffding(n, r, p))


def log_tail(n, r, p, mode="auto", auto_cutoff_n=10_000):
    if mode == "exact" or (mode == "auto" and n <= auto_cutoff_n):
        return log_binom_tail_exact(n, r, p)
    if mode in ("hoeffding", "auto"):
        return log_binom_tail_hoeffding(n, r, p)
    raise ConfigError(f"tail_mode must be one of {TAIL_MODES}")


def _record(region_id, n, r, p, candidate_count, cfg):
    lt = log_tail(n, r, p, cfg.tail_mode, cfg.auto_cutoff_n)
    tail = math.exp(lt)
    nfa = candidate_count * tail
    return NfaRecord(region_id=int(region_id), n=int(n), r=int(r), p=float(p), tail=tail,
                     nfa=nfa, meaningful=nfa < 1.0, log_nfa=math.log(candidate_count) + lt)


def nfa(region, mask, p, candidate_count, cfg=None):
    """Evaluate one region against a thresholded heatmap."""
    cfg = cfg or AcontrarioConfig()
    if candidate_count < 1:
        raise DomainError("candidate_count must be at least 1")
    flat = region.flat_indices(mask.geometry)
    r = int(mask.bits.ravel()[flat].sum(dtype=np.int64))
    return _record(region.id, len(flat), r, p, candidate_count, cfg)


def cull_disjoint(pairs, geom):
    """Greedy disjoint selection over ``(region, record)`` pairs.

    Order: smallest NFA first, then larger regions, then lower id.
    """
    ordered = sorted(pairs, key=lambda rr: (rr[1].log_nfa, -rr[0].n, rr[0].id))
    used = np.zeros(geom.n_cells, dtype=bool)
    kept = []
    for region, rec in ordered:
        flat = region.flat_indices(geom)
        if used[flat].any():
            continue
        used[flat] = True
        kept.append((region, rec))
    return kept


def detect_channel(heatmap, proposals, cfg=None):
    """Threshold, estimate ``p``, score every proposal, keep disjoint meaningful regions."""
    cfg = cfg or AcontrarioConfig()
    regions = list(proposals)
    if not regions:
        return ChannelResult(heatmap.channel, 0.0, (), (), None, None, heatmap.geometry)
    mask = threshold_heatmap(heatmap, cfg.threshold_c)
    p = estimate_p(mask)
    bits = mask.bits.ravel()
    count = len(regions)
    cache = {}
    records = []
    for region in regions:
        flat = region.flat_indices(heatmap.geometry)
        n, r = len(flat), int(bits[flat].sum(dtype=np.int64))
        if (n, r) not in cache:
            cache[(n, r)] = _record(0, n, r, p, count, cfg)
        records.append(replace(cache[(n, r)], region_id=int(region.id)))
    meaningful = [(reg, rec) for reg, rec in zip(regions, records) if rec.meaningful]
    kept = cull_disjoint(meaningful, heatmap.geometry)
    min_nfa = kept[0][1].nfa if kept else None
    score = channel_score(min_nfa, cfg.score_decades)
    return ChannelResult(heatmap.channel, score, tuple(kept), tuple(records), p, min_nfa, heatmap.geometry)


class AContrarioDetector(BaseEstimator):
    """Per-heatmap a-contrario detector.

    ``fit(heatmap, proposals)`` runs the test and stores ``result_``
    (:class:`ChannelResult`), ``p_`` and ``records_``.  ``decision_function``
    returns the channel score and ``predict_mask`` the heatmap-resolution
    mask of kept detections.
    """

    def __init__(self, threshold=0.75, tail_mode="auto", auto_cutoff_n=10_000, score_decades=10.0):
        self.threshold = threshold
        self.tail_mode = tail_mode
        self.auto_cutoff_n = auto_cutoff_n
        self.score_decades = score_decades

    def config(self):
        return AcontrarioConfig(self.threshold, self.tail_mode, self.auto_cutoff_n, self.score_decades)

    def fit(self, X, proposals):
        if not isinstance(X, Heatmap):
            raise TypeError("AContrarioDetector.fit expects a Heatmap")
        self.result_ = detect_channel(X, proposals, self.config())
        self.geometry_ = X.geometry
        self.p_ = self.result_.p
        self.records_ = self.result_.all_records
        return self

    def fit_predict(self, X, proposals):
        return self.fit(X, proposals).predict_mask()

    def decision_function(self, X=None):
        return self.result_.score

    def predict_mask(self):
        out = np.zeros(self.geometry_.hm_shape, dtype=np.uint8)
        for region, _ in self.result_.detections:
            out[region.cells[:, 1], region.cells[:, 0]] = 1
        return out
