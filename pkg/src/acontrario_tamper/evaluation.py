"""ROC/AUC evaluation over (score, label) pairs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .exceptions import DegenerateEval, DomainError, FormatError

LABELS = ("pristine", "tampered")


@dataclass(frozen=True)
class EvalPair:
    score: float
    label: str
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise DomainError(f"label must be one of {LABELS}, got {self.label!r}")
        if not np.isfinite(self.score):
            raise DomainError("score must be finite")


def _as_arrays(pairs, labels=None):
    if labels is None:
        scores = np.array([p.score for p in pairs], dtype=np.float64)
        positive = np.array([p.label == "tampered" for p in pairs])
    else:
        scores = np.asarray(pairs, dtype=np.float64)
        positive = np.asarray([lab in (1, True, "tampered") for lab in labels])
    return scores, positive


def roc_auc(pairs, labels=None):
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties count 1/2).

    Accepts a list of :class:`EvalPair`, or ``(scores, labels)`` with labels
    given as 0/1 or ``"pristine"``/``"tampered"``.
    """
    scores, positive = _as_arrays(pairs, labels)
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateEval("AUC needs at least one pristine and one tampered example")
    ranks = rankdata(scores)  # average ranks give ties half credit
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def iou(pred, truth):
    pred = np.asarray(pred) > 0
    truth = np.asarray(truth) > 0
    union = np.logical_or(pred, truth).sum()
    return float(np.logical_and(pred, truth).sum() / union) if union else 1.0


def read_score_csv(path):
    """Rows of ``id,label[,score]``; a header row is optional."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() == "id":
                continue
            if len(row) < 2:
                raise FormatError(f"{path}: expected id,label[,score], got {row}")
            rec = {"id": row[0].strip(), "label": row[1].strip()}
            if len(row) > 2 and row[2].strip():
                try:
                    rec["score"] = float(row[2])
                except ValueError:
                    raise FormatError(f"{path}: bad score {row[2]!r}") from None
            rows.append(rec)
    return rows


def pairs_from_files(labels_csv, reports_dir=None):
    """Join a labels CSV with scores taken from the CSV or from ``<id>.json`` reports."""
    pairs = []
    for rec in read_score_csv(labels_csv):
        if reports_dir is not None:
            path = Path(reports_dir) / f"{rec['id']}.json"
            try:
                score = json.loads(path.read_text())["final_score"]
            except FileNotFoundError:
                raise FormatError(f"no report for id {rec['id']!r} in {reports_dir}") from None
            except (json.JSONDecodeError, KeyError) as exc:
                raise FormatError(f"bad report {path}: {exc}") from None
        elif "score" in rec:
            score = rec["score"]
        else:
            raise FormatError(f"id {rec['id']!r} has no score and no reports directory was given")
        pairs.append(EvalPair(float(score), rec["label"]))
    return pairs
