"""Moment retrieval (R1, mAP, mIoU) and highlight detection (mAP, HIT@1) metrics.

Predictions are mappings ``query_id -> ranked [(TimeSpan, score), ...]``;
``MomentPrediction`` objects are accepted too. All reported values are
percentages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import TimeSpan, temporal_iou
from .errors import LabelLengthMismatch, MissingPrediction
from .rewrite import QueryType

R1_THRESHOLDS = (0.3, 0.5, 0.7)
MAP_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
REPORT_CATEGORIES = ("Error", "Simple", "Detail", "Else")


@dataclass(frozen=True)
class GroundTruth:
    query_id: str
    windows: tuple[TimeSpan, ...]
    saliency_labels: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if self.saliency_labels is not None:
            object.__setattr__(self, "saliency_labels", tuple(int(x) for x in self.saliency_labels))


def _spans_of(pred) -> list[tuple[TimeSpan, float]]:
    if hasattr(pred, "spans"):
        return [(r.span, r.score) for r in pred.spans]
    return [(sp, float(sc)) for sp, sc in pred]


def _aligned(preds: Mapping, gts: Mapping[str, GroundTruth]):
    for qid, gt in gts.items():
        pred = preds.get(qid)
        spans = _spans_of(pred) if pred is not None else []
        if not spans:
            raise MissingPrediction(f"no prediction for query {qid!r}")
        yield spans, gt


def _hit(iou: float, threshold: float, strict: bool) -> bool:
    return iou > threshold if strict else iou >= threshold


def best_iou(span: TimeSpan, windows: Sequence[TimeSpan]) -> float:
    return max((temporal_iou(span, w) for w in windows), default=0.0)


def recall_at_1(preds: Mapping, gts: Mapping[str, GroundTruth], threshold: float, strict: bool = False) -> float:
    hits = [_hit(best_iou(spans[0][0], gt.windows), threshold, strict) for spans, gt in _aligned(preds, gts)]
    return 100.0 * float(np.mean(hits)) if hits else 0.0


def mean_iou(preds: Mapping, gts: Mapping[str, GroundTruth]) -> float:
    ious = [best_iou(spans[0][0], gt.windows) for spans, gt in _aligned(preds, gts)]
    return 100.0 * float(np.mean(ious)) if ious else 0.0


def average_precision(spans: Sequence[tuple[TimeSpan, float]], windows: Sequence[TimeSpan],
                      threshold: float, strict: bool = False) -> float:
    """AP of a ranked list with greedy one-to-one matching; recall base = number of GT windows."""
    if not windows:
        return 0.0
    matched = [False] * len(windows)
    tp = 0
    precisions = []
    for rank, (span, _) in enumerate(spans, 1):
        best, best_j = -1.0, -1
        for j, w in enumerate(windows):
            if matched[j]:
                continue
            iou = temporal_iou(span, w)
            if _hit(iou, threshold, strict) and iou > best:
                best, best_j = iou, j
        if best_j >= 0:
            matched[best_j] = True
            tp += 1
            precisions.append(tp / rank)
    return sum(precisions) / len(windows)


def map_at(preds: Mapping, gts: Mapping[str, GroundTruth], threshold: float, strict: bool = False) -> float:
    aps = [average_precision(spans, gt.windows, threshold, strict) for spans, gt in _aligned(preds, gts)]
    return 100.0 * float(np.mean(aps)) if aps else 0.0


def binary_average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_rel = sum(1 for x in labels if x)
    if n_rel == 0:
        return 0.0
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, 1):
        if labels[i]:
            hits += 1
            total += hits / rank
    return total / n_rel


def vhd_single(scores: Sequence[float], labels: Sequence[int]) -> tuple[float, float]:
    """(AP, hit@1) for one query, both as fractions."""
    if len(scores) != len(labels):
        raise LabelLengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    if not scores:
        return 0.0, 0.0
    top = int(np.argmax(np.asarray(scores)))  # first maximum wins ties
    return binary_average_precision(scores, labels), float(bool(labels[top]))


def vhd_metrics(saliency: Mapping[str, Sequence[float]], labels: Mapping[str, Sequence[int]]) -> dict[str, float]:
    """Highlight-detection mAP and HIT@1 over every query that has labels."""
    aps, hits = [], []
    for qid, lab in labels.items():
        if qid not in saliency:
            raise MissingPrediction(f"no saliency scores for query {qid!r}")
        ap, hit = vhd_single(list(saliency[qid]), list(lab))
        aps.append(ap)
        hits.append(hit)
    if not aps:
        return {"map": 0.0, "hit_at_1": 0.0}
    return {"map": 100.0 * float(np.mean(aps)), "hit_at_1": 100.0 * float(np.mean(hits))}


@dataclass
class EvalReport:
    r1: dict[float, float]
    map_at: dict[float, float]
    map_avg: float
    miou: float
    num_queries: int
    vhd: Optional[dict[str, float]] = None
    by_query_type: dict[str, "EvalReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "num_queries": self.num_queries,
            "r1": {f"{t:g}": round(v, 4) for t, v in self.r1.items()},
            "map_at": {f"{t:g}": round(v, 4) for t, v in self.map_at.items()},
            "map_avg": round(self.map_avg, 4),
            "miou": round(self.miou, 4),
        }
        if self.vhd is not None:
            out["vhd"] = {k: round(v, 4) for k, v in self.vhd.items()}
        if self.by_query_type:
            out["by_query_type"] = {k: v.to_dict() for k, v in self.by_query_type.items()}
        return out

    def table_row(self) -> dict[str, float]:
        row = {f"R1@{t:g}": v for t, v in self.r1.items()}
        row["mAP@0.5"] = self.map_at[0.5]
        row["mAP@0.75"] = self.map_at[0.75]
        row["mAP@avg"] = self.map_avg
        row["mIoU"] = self.miou
        if self.vhd is not None:
            row["VHD mAP"] = self.vhd["map"]
            row["HIT@1"] = self.vhd["hit_at_1"]
        return row


def evaluate(preds: Mapping, gts: Mapping[str, GroundTruth], *,
             saliency: Optional[Mapping[str, Sequence[float]]] = None,
             types: Optional[Mapping[str, QueryType]] = None,
             strict: bool = False) -> EvalReport:
    """Full report for the queries in ``gts`` (queries without GT windows are skipped)."""
    gts = {q: g for q, g in gts.items() if g.windows}
    r1 = {t: recall_at_1(preds, gts, t, strict) for t in R1_THRESHOLDS}
    maps = {t: map_at(preds, gts, t, strict) for t in MAP_THRESHOLDS}
    report = EvalReport(
        r1=r1,
        map_at=maps,
        map_avg=float(np.mean(list(maps.values()))),
        miou=mean_iou(preds, gts),
        num_queries=len(gts),
    )
    if saliency is not None:
        labels = {q: g.saliency_labels for q, g in gts.items() if g.saliency_labels is not None}
        if labels:
            report.vhd = vhd_metrics(saliency, labels)
    if types is not None:
        report.by_query_type = breakdown(preds, gts, types, saliency=saliency, strict=strict)
    return report


def breakdown(preds: Mapping, gts: Mapping[str, GroundTruth], types: Mapping[str, QueryType], *,
              saliency: Optional[Mapping[str, Sequence[float]]] = None,
              strict: bool = False) -> dict[str, EvalReport]:
    """Per-category reports; the Error slice overlaps the length categories. Empty slices are omitted."""
    missing = set(gts) - set(types)
    if missing:
        raise KeyError(f"no query type for {sorted(missing)[:5]}")
    slices: dict[str, list[str]] = {c: [] for c in REPORT_CATEGORIES}
    for qid in gts:
        qt = types[qid]
        slices[qt.category.value].append(qid)
        if qt.error_flag:
            slices["Error"].append(qid)
    out = {}
    for cat in REPORT_CATEGORIES:
        if slices[cat]:
            sub = {q: gts[q] for q in slices[cat]}
            out[cat] = evaluate(preds, sub, saliency=saliency, strict=strict)
    return out
