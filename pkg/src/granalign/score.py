"""Per-frame granular moment score over the two query/caption pairings."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .caption import CaptionSet
from .errors import DimensionMismatch
from .providers.base import Embedding, ModelProvider
from .rewrite import RewriteSet


@dataclass(frozen=True, eq=False)
class FrameScoreSeries:
    video_id: str
    query_id: str
    scores: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64).copy()
        if arr.ndim != 1:
            raise ValueError("scores must be one-dimensional")
        if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1):
            raise ValueError("frame scores must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "video_id": self.video_id, "scores": self.scores.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FrameScoreSeries":
        return cls(str(d["video_id"]), str(d["query_id"]), np.asarray(d["scores"], dtype=np.float64))


def similarity_g(a: Embedding, b: Embedding) -> float:
    """Cosine similarity mapped from [-1, 1] onto [0, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    g = (1.0 + float(np.dot(a.vector, b.vector))) / 2.0
    return min(1.0, max(0.0, g))


def _frame_score(embed: Callable[[str], Embedding], rewrites: RewriteSet,
                 captions: CaptionSet, frame: int) -> float:
    if not 0 <= frame < captions.frame_count:
        raise IndexError(f"frame {frame} outside video of {captions.frame_count} frames")
    c_agn = embed(captions.agnostic[frame].text)
    c_awr = embed(captions.aware_or_agnostic(frame).text)
    terms = []
    for pair in rewrites.pairs:
        terms.append(similarity_g(embed(pair.simplified), c_agn))
        terms.append(similarity_g(embed(pair.detailed), c_awr))
    # fsum is exactly rounded, so the result does not depend on pair order
    return min(1.0, math.fsum(terms) / (2 * rewrites.m))


def frame_score(rewrites: RewriteSet, captions: CaptionSet, frame: int, embedder: ModelProvider) -> float:
    return _frame_score(embedder.embed, rewrites, captions, frame)


class EmbeddingMemo:
    """Thread-safe text -> embedding memo in front of a provider."""

    def __init__(self, embedder: ModelProvider):
        self._embedder = embedder
        self._table: dict[str, Embedding] = {}
        self._lock = threading.Lock()

    def __call__(self, text: str) -> Embedding:
        hit = self._table.get(text)
        if hit is not None:
            return hit
        emb = self._embedder.embed(text)
        with self._lock:
            return self._table.setdefault(text, emb)

    def __len__(self) -> int:
        return len(self._table)


def score_video(rewrites: RewriteSet, captions: CaptionSet, embedder: ModelProvider,
                memo: EmbeddingMemo | None = None) -> FrameScoreSeries:
    embed = memo if memo is not None else EmbeddingMemo(embedder)
    scores = [_frame_score(embed, rewrites, captions, f) for f in range(captions.frame_count)]
    return FrameScoreSeries(captions.video_id, rewrites.original.id, np.asarray(scores))
