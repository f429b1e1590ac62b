"""Per-query pipeline orchestration, run manifests and parameter sweeps."""

from __future__ import annotations

import logging
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .caption import CaptionSet, build_caption_set
from .core import PipelineConfig, SemanticGuidance
from .data import DatasetRecord
from .errors import ConfigError, GranAlignError
from .metrics import EvalReport, evaluate
from .propose import MomentPrediction, propose
from .providers.base import Caption, ModelProvider, ProviderSet
from .rewrite import QueryType, RewriteSet, classify_query, extract_guidance, generate_rewrites
from .score import EmbeddingMemo, FrameScoreSeries, score_video

log = logging.getLogger(__name__)

SWEEPABLE = ("num_rewrites", "length_weight", "top_k_percent", "merge_gap", "bottom_percent", "nms_iou")
STAGES = ("rewrite", "guidance", "caption", "score", "propose")


class _AgnosticMemo(ModelProvider):
    """Shares query-agnostic captions across queries of the same video."""

    def __init__(self, inner: ModelProvider):
        self.inner = inner
        self._table: dict[tuple[str, int], Caption] = {}
        self._lock = threading.Lock()

    def caption_frame(self, video_id, frame_index, guidance=None):
        if guidance is not None:
            return self.inner.caption_frame(video_id, frame_index, guidance)
        key = (video_id, frame_index)
        hit = self._table.get(key)
        if hit is None:
            hit = self.inner.caption_frame(video_id, frame_index)
            with self._lock:
                hit = self._table.setdefault(key, hit)
        return hit

    def frame_query_similarity(self, video_id, frame_index, query_text):
        return self.inner.frame_query_similarity(video_id, frame_index, query_text)


@dataclass
class QueryResult:
    record: DatasetRecord
    query_type: QueryType
    prediction: Optional[MomentPrediction] = None
    rewrites: Optional[RewriteSet] = None
    guidance: Optional[SemanticGuidance] = None
    captions: Optional[CaptionSet] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.prediction is not None

    def manifest_entry(self) -> dict[str, Any]:
        entry: dict[str, Any] = {"qid": self.record.query.id, "vid": self.record.video.video_id,
                                 "query_type": self.query_type.to_dict()}
        if not self.ok:
            entry["status"] = f"failed({self.error})"
            return entry
        entry["status"] = "ok"
        entry["m"] = self.rewrites.m if self.rewrites else None
        entry["spans"] = [
            {"frames": [s.span.start_idx, s.span.end_idx], "mu": s.mu, "rho": s.rho, "score": s.score}
            for s in self.prediction.scored
        ]
        return entry


@dataclass
class RunManifest:
    config: dict
    dataset: str
    split: str
    providers: dict
    timing: dict[str, float] = field(default_factory=dict)
    queries: list[dict] = field(default_factory=list)

    @property
    def num_failed(self) -> int:
        return sum(1 for q in self.queries if q["status"] != "ok")

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "dataset": self.dataset,
            "split": self.split,
            "providers": self.providers,
            "timing_s": {k: round(v, 6) for k, v in self.timing.items()},
            "num_queries": len(self.queries),
            "num_failed": self.num_failed,
            "queries": self.queries,
        }


@dataclass
class RunResult:
    results: list[QueryResult]
    report: Optional[EvalReport]
    manifest: RunManifest

    @property
    def predictions(self) -> list[MomentPrediction]:
        return [r.prediction for r in self.results if r.ok]

    @property
    def all_failed(self) -> bool:
        return bool(self.results) and not any(r.ok for r in self.results)


class _StageTimer:
    def __init__(self):
        self.totals: dict[str, float] = defaultdict(float)
        self._lock = threading.Lock()

    @contextmanager
    def __call__(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = time.perf_counter() - t0
            with self._lock:
                self.totals[stage] += dt


def process_query(record: DatasetRecord, cfg: PipelineConfig, providers: ProviderSet, *,
                  timer: Optional[_StageTimer] = None, grammar_check: bool = False,
                  caption_workers: int = 1) -> QueryResult:
    timer = timer or _StageTimer()
    checker = providers.rewriter.has_grammar_error if grammar_check else None
    result = QueryResult(record, classify_query(record.query, checker))
    try:
        with timer("rewrite"):
            result.rewrites = generate_rewrites(record.query, cfg, providers.rewriter)
        with timer("guidance"):
            result.guidance = extract_guidance(record.query, providers.rewriter)
        with timer("caption"):
            result.captions = build_caption_set(record.video, record.query, result.guidance, cfg,
                                                providers.captioner, frame_scorer=providers.frame_scorer,
                                                max_workers=caption_workers)
        with timer("score"):
            series = score_video(result.rewrites, result.captions, providers.embedder,
                                 EmbeddingMemo(providers.embedder))
        with timer("propose"):
            result.prediction = propose(series, cfg)
    except GranAlignError as exc:
        log.warning("query %s failed: %s", record.query.id, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_pipeline(cfg: PipelineConfig, records: Sequence[DatasetRecord], providers: ProviderSet, *,
                 dataset_name: str = "", split: str = "", provider_specs: Optional[dict] = None,
                 jobs: int = 1, grammar_check: bool = False, strict_iou: bool = False) -> RunResult:
    """Run every record through the pipeline; outputs keep dataset order whatever ``jobs`` is."""
    timer = _StageTimer()
    shared = ProviderSet(providers.rewriter, _AgnosticMemo(providers.captioner),
                         providers.embedder, providers.frame_scorer)

    def work(rec: DatasetRecord) -> QueryResult:
        return process_query(rec, cfg, shared, timer=timer, grammar_check=grammar_check)

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(r) for r in records]

    manifest = RunManifest(cfg.to_dict(), dataset_name, split, provider_specs or {})
    manifest.queries = [r.manifest_entry() for r in results]

    report = None
    ok = [r for r in results if r.ok and r.record.ground_truth.windows]
    if ok:
        with timer("eval"):
            preds = {r.record.query.id: r.prediction for r in ok}
            gts = {r.record.query.id: r.record.ground_truth for r in ok}
            sal = {r.record.query.id: r.prediction.saliency.scores.tolist() for r in ok}
            types = {r.record.query.id: r.query_type for r in ok}
            report = evaluate(preds, gts, saliency=sal, types=types, strict=strict_iou)
    manifest.timing = dict(timer.totals)
    manifest.timing["total"] = time.perf_counter() - t0
    return RunResult(results, report, manifest)


def sweep(cfg: PipelineConfig, parameter: str, values: Sequence, records: Sequence[DatasetRecord],
          providers: ProviderSet, **run_kwargs) -> list[tuple[Any, RunResult]]:
    """One full run per value of ``parameter`` with everything else held fixed."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {parameter!r}; choose from {', '.join(SWEEPABLE)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = []
    for v in values:
        run_cfg = PipelineConfig.from_mapping({**cfg.to_dict(), parameter: v})
        out.append((getattr(run_cfg, parameter), run_pipeline(run_cfg, records, providers, **run_kwargs)))
    return out


def format_table(rows: Sequence[tuple[str, dict[str, float]]], key_header: str = "") -> str:
    """Plain-text table; ``rows`` are ``(label, {column: value})``."""
    if not rows:
        return "(no results)"
    columns: list[str] = []
    for _, r in rows:
        for c in r:
            if c not in columns:
                columns.append(c)
    header = [key_header] + columns
    body = [[label] + [f"{r[c]:.2f}" if c in r else "-" for c in columns] for label, r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    fmt = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    lines = [fmt(header), "  ".join("-" * w for w in widths)]
    lines += [fmt(b) for b in body]
    return "\n".join(lines)
