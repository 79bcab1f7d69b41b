"""End-to-end analysis: heatmaps -> proposals -> a-contrario per channel -> fusion."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import __version__
from .acontrario import AcontrarioConfig, detect_channel
from .core import CHANNELS, ChannelResult, geometry_for
from .exceptions import ConfigError, FormatError, ShapeError
from .features import DEFAULT_ANGLES, HeatmapTransformer
from .fusion import fuse
from .io import atomic_write_text, read_heatmap, read_image, write_mask
from .proposals import (ProposalConfig, collect_proposals, grid_proposals, load_external_proposals,
                        merge_proposals)
from .validation import check_image

TOOL_NAME = "acontrario-tamper"


@dataclass
class AnalysisReport:
    image_id: str
    geometry: dict
    candidate_count: int
    channels: list
    channel_scores: list
    final_score: float
    mask_path: str
    config: dict = field(default_factory=dict)
    tool: str = TOOL_NAME
    tool_version: str = __version__

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            return cls(**json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise FormatError(f"not an analysis report: {exc}") from None


def _region_json(region, rec):
    return {
        "region_id": region.id,
        "source": region.source,
        "pixel_area": int(region.pixel_area),
        "cells": region.cells.tolist(),
        "n": rec.n,
        "r": rec.r,
        "p": rec.p,
        "tail": rec.tail,
        "nfa": rec.nfa,
        "log_nfa": rec.log_nfa,
        "meaningful": rec.meaningful,
    }


def _channel_json(res, status):
    return {
        "channel": res.channel,
        "status": status,
        "score": res.score,
        "min_nfa": res.min_nfa,
        "p": res.p,
        "n_meaningful": sum(rec.meaningful for rec in res.all_records),
        "detections": [_region_json(reg, rec) for reg, rec in res.detections],
    }


def analyze(image=None, heatmaps=None, classifier="auto", external=(), grid=None,
            proposal_config=None, acontrario_config=None, use_level_sets=True,
            angles=DEFAULT_ANGLES, n_jobs=1):
    """Run the full detector on one image.

    Parameters
    ----------
    image : array, optional
        Luminance (or RGB) grid in [0, 1].  Needed for computed heatmaps and
        level-set proposals.
    heatmaps : iterable of Heatmap, optional
        Precomputed heatmaps; each replaces that channel's computed one.
    classifier : {"auto", "periodicity", "blockiness", "external"} or PatchClassifier
        ``"external"`` uses only the supplied heatmaps; channels without one
        are reported with status ``"not_provided"`` and score 0.
    external : sequence of pixel sets
        External segmentation proposals.
    grid : tuple, optional
        ``(sizes, step)`` for data-independent window proposals.

    Returns
    -------
    (FusionResult, list of per-channel status strings, RegionProposalSet)
    """
    given = {}
    for hm in heatmaps or ():
        if hm.channel in given:
            raise ConfigError(f"two heatmaps supplied for channel {hm.channel}")
        given[hm.channel] = hm
    gray = check_image(image) if image is not None else None
    if gray is not None:
        geom = geometry_for(gray.shape[1], gray.shape[0])
    elif given:
        geom = next(iter(given.values())).geometry
    else:
        raise ConfigError("need an image, heatmaps, or both")
    for hm in given.values():
        if hm.geometry != geom:
            raise ShapeError(f"heatmap for {hm.channel} has geometry {hm.geometry}, expected {geom}")

    provided = set(given)
    if classifier != "external":
        if gray is None:
            raise ConfigError("computing heatmaps requires an image (or use classifier='external')")
        missing = [ch for ch in CHANNELS if ch not in given]
        if missing:
            clf = None if classifier == "auto" else classifier
            tr = HeatmapTransformer(channels=missing, classifiers=clf, angles=angles, n_jobs=n_jobs)
            for hm in tr.fit().transform(gray):
                given[hm.channel] = hm

    pcfg = proposal_config or ProposalConfig()
    sets = []
    if (gray is not None and use_level_sets) or len(external):
        sets.append(collect_proposals(gray if use_level_sets else None, geom, pcfg, external))
    if grid is not None:
        sizes, step = grid
        sets.append(grid_proposals(geom, sizes, step))
    proposals = merge_proposals(*sets)

    acfg = acontrario_config or AcontrarioConfig()

    def run(ch):
        if ch in given:
            return detect_channel(given[ch], proposals, acfg), "provided" if ch in provided else "computed"
        return ChannelResult(ch, 0.0, (), (), None, None, geom), "not_provided"

    workers = max(1, int(n_jobs or 1))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(run, CHANNELS))
    else:
        out = [run(ch) for ch in CHANNELS]
    fusion = fuse([res for res, _ in out], geom)
    return fusion, [status for _, status in out], proposals


def build_report(fusion, statuses, proposals, image_id, mask_path, config=None):
    geom = fusion.channel_results[0].geometry
    return AnalysisReport(
        image_id=str(image_id),
        geometry={
            "image_width": geom.image_width,
            "image_height": geom.image_height,
            "patch_size": geom.patch_size,
            "stride": geom.stride,
            "hm_width": geom.hm_width,
            "hm_height": geom.hm_height,
        },
        candidate_count=proposals.candidate_count,
        channels=[_channel_json(res, st) for res, st in zip(fusion.channel_results, statuses)],
        channel_scores=list(fusion.channel_scores),
        final_score=fusion.final_score,
        mask_path=str(mask_path),
        config=dict(config or {}),
    )


def run_analysis(image_path=None, out_dir=".", heatmap_paths=(), label_map_path=None,
                 image_id=None, **options):
    """File-level ``analyze``: read inputs, run, then write ``<id>.json`` and ``<id>_mask.png``.

    All inputs are read and the analysis completed before anything is
    written, so a failure leaves no partial output.  Returns the report.
    """
    image = read_image(image_path) if image_path is not None else None
    heatmaps = [read_heatmap(p) for p in heatmap_paths]
    external = ()
    if label_map_path is not None:
        shape = image.shape if image is not None else (heatmaps[0].geometry.image_shape if heatmaps else None)
        external = load_external_proposals(label_map_path, shape)
    if image_id is None:
        source = image_path if image_path is not None else (heatmap_paths[0] if heatmap_paths else "image")
        image_id = Path(source).stem
    fusion, statuses, proposals = analyze(image, heatmaps, external=external, **options)

    # thread count does not affect results, so it stays out of the report
    echo = {k: _jsonable(v) for k, v in sorted(options.items()) if k != "n_jobs"}
    echo["heatmaps"] = [Path(p).name for p in heatmap_paths]
    echo["label_map"] = Path(label_map_path).name if label_map_path is not None else None
    mask_name = f"{image_id}_mask.png"
    report = build_report(fusion, statuses, proposals, image_id, mask_name, echo)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_mask(out_dir / mask_name, fusion.union_mask)
    atomic_write_text(out_dir / f"{image_id}.json", report.to_json())
    return report


def _jsonable(value):
    if hasattr(value, "__dataclass_fields__"):
        return asdict(value)
    if isinstance(value, BaseEstimator):
        return {"class": type(value).__name__, **value.get_params()}
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


class TamperDetector(ClassifierMixin, BaseEstimator):
    """Image-level tamper detector with the scikit-learn estimator interface.

    Nothing is learned: ``fit`` only validates parameters.  ``X`` is a
    sequence of images (2-D luminance or RGB arrays in [0, 1]).

    ``decision_function`` gives the fused score per image, ``predict``
    flags images whose score is positive, and ``predict_mask`` returns the
    pixel-level union mask for a single image.
    """

    def __init__(self, classifier="auto", threshold=0.75, tail_mode="auto", auto_cutoff_n=10_000,
                 score_decades=10.0, n_levels=32, connectivity=8, min_cells=4, max_area_frac=0.9,
                 polarity="both", angles=DEFAULT_ANGLES, n_jobs=1):
        self.classifier = classifier
        self.threshold = threshold
        self.tail_mode = tail_mode
        self.auto_cutoff_n = auto_cutoff_n
        self.score_decades = score_decades
        self.n_levels = n_levels
        self.connectivity = connectivity
        self.min_cells = min_cells
        self.max_area_frac = max_area_frac
        self.polarity = polarity
        self.angles = angles
        self.n_jobs = n_jobs

    def _configs(self):
        return (
            ProposalConfig(self.n_levels, self.connectivity, self.min_cells, self.max_area_frac, self.polarity),
            AcontrarioConfig(self.threshold, self.tail_mode, self.auto_cutoff_n, self.score_decades),
        )

    def fit(self, X=None, y=None):
        self._configs()
        self.classes_ = np.array([0, 1])
        return self

    def analyze(self, image, heatmaps=None, external=()):
        """Full :class:`FusionResult` for one image."""
        pcfg, acfg = self._configs()
        fusion, _, _ = analyze(image, heatmaps, classifier=self.classifier, external=external,
                               proposal_config=pcfg, acontrario_config=acfg, angles=self.angles,
                               n_jobs=self.n_jobs)
        return fusion

    def decision_function(self, X):
        return np.array([self.analyze(img).final_score for img in X])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def predict_mask(self, image):
        return self.analyze(image).union_mask
