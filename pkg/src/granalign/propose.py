"""Moment proposals: histogram selection, gap merging, filtering, span scoring, NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import FrameIndexSpan, PipelineConfig, TimeSpan, frames_to_time, temporal_iou
from .errors import EmptySeries
from .score import FrameScoreSeries


@dataclass(frozen=True)
class ScoredSpan:
    span: FrameIndexSpan
    mu: float
    rho: float
    score: float


@dataclass(frozen=True)
class RankedSpan:
    span: TimeSpan
    score: float


@dataclass(frozen=True, eq=False)
class MomentPrediction:
    query_id: str
    video_id: str
    spans: tuple[RankedSpan, ...]
    saliency: Optional[FrameScoreSeries] = None
    scored: tuple[ScoredSpan, ...] = field(default=())

    @property
    def top(self) -> RankedSpan:
        return self.spans[0]


def _scores(series: FrameScoreSeries | Sequence[float]) -> np.ndarray:
    arr = series.scores if isinstance(series, FrameScoreSeries) else np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        raise EmptySeries("score series is empty")
    return arr


def histogram_cutoff(scores: np.ndarray, bins: int, top_bins: int) -> float:
    lo, hi = float(scores.min()), float(scores.max())
    return lo + (bins - top_bins) / bins * (hi - lo)


def select_high_frames(series, bins: int = 10, top_bins: int = 8) -> list[int]:
    """Frames whose score falls in the top ``top_bins`` of ``bins`` equal-width bins."""
    if bins < 1 or not 1 <= top_bins <= bins:
        raise ValueError("need bins >= 1 and 1 <= top_bins <= bins")
    s = _scores(series)
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return list(range(s.size))
    cutoff = histogram_cutoff(s, bins, top_bins)
    return [int(i) for i in np.flatnonzero(s >= cutoff)]


def merge_frames(selected: Iterable[int], tau: int) -> list[FrameIndexSpan]:
    """Join consecutive selected frames whose gap (missing frames) is at most ``tau``."""
    frames = list(selected)
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ValueError("selected frames must be sorted and unique")
    spans: list[FrameIndexSpan] = []
    if not frames:
        return spans
    start = prev = frames[0]
    for j in frames[1:]:
        if j - prev - 1 > tau:
            spans.append(FrameIndexSpan(start, prev))
            start = j
        prev = j
    spans.append(FrameIndexSpan(start, prev))
    return spans


def span_mean(scores: np.ndarray, span: FrameIndexSpan) -> float:
    return math.fsum(scores[span.start_idx:span.end_idx + 1].tolist()) / span.num_frames


def nearest_rank_percentile(values: Sequence[float], percent: float) -> float:
    """Nearest-rank percentile; ``percent == 0`` yields ``-inf`` (no threshold)."""
    ordered = sorted(values)
    if not ordered:
        raise EmptySeries("no values")
    rank = math.ceil(Fraction(str(percent)) * len(ordered) / 100)
    if rank <= 0:
        return -math.inf
    return ordered[min(rank, len(ordered)) - 1]


def filter_low_spans(spans: Sequence[FrameIndexSpan], series, n: float) -> list[FrameIndexSpan]:
    """Drop spans whose mean score is below the n-th percentile of all frame scores.

    At least one span survives: if every span would be dropped, the one with
    the highest mean (earliest on ties) is kept.
    """
    if not 0 <= n < 100:
        raise ValueError("n must lie in [0, 100)")
    if not spans:
        return []
    s = _scores(series)
    threshold = nearest_rank_percentile(s.tolist(), n)
    means = [span_mean(s, p) for p in spans]
    kept = [p for p, mu in zip(spans, means) if mu >= threshold]
    if kept:
        return kept
    best = max(range(len(spans)), key=lambda i: (means[i], -i))
    return [spans[best]]


def score_spans(spans: Sequence[FrameIndexSpan], series, lam: float) -> list[ScoredSpan]:
    """Score = (1 - lam) * mean frame score + lam * span length share."""
    if not spans:
        raise ValueError("no spans to score")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    s = _scores(series)
    total = sum(p.num_frames for p in spans)
    out = []
    for p in spans:
        mu = span_mean(s, p)
        rho = p.num_frames / total
        out.append(ScoredSpan(p, mu, rho, (1 - lam) * mu + lam * rho))
    return out


def _nms_key(item: tuple[TimeSpan, float]):
    span, score = item
    return (-score, span.start_s, -span.length)


def nms(spans: Sequence[tuple[TimeSpan, float]], theta: float) -> list[tuple[TimeSpan, float]]:
    """Greedy NMS; a span is suppressed when its IoU with a kept span is strictly above ``theta``."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    order = sorted(spans, key=_nms_key)
    keep = []
    while order:
        top = order[0]
        keep.append(top)
        order = [c for c in order[1:] if temporal_iou(top[0], c[0]) <= theta]
    return keep


def propose(series: FrameScoreSeries, cfg: PipelineConfig) -> MomentPrediction:
    s = _scores(series)
    selected = select_high_frames(s, cfg.histogram_bins, cfg.histogram_top_bins)
    merged = merge_frames(selected, cfg.merge_gap)
    filtered = filter_low_spans(merged, s, cfg.bottom_percent)
    scored = score_spans(filtered, s, cfg.length_weight)
    by_time = {}
    candidates = []
    for sp in scored:
        ts = frames_to_time(sp.span, cfg.fps)
        by_time[(ts, sp.score)] = sp
        candidates.append((ts, sp.score))
    kept = nms(candidates, cfg.nms_iou)
    return MomentPrediction(
        query_id=series.query_id,
        video_id=series.video_id,
        spans=tuple(RankedSpan(ts, sc) for ts, sc in kept),
        saliency=series,
        scored=tuple(by_time[k] for k in kept),
    )
