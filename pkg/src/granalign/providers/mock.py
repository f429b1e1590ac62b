"""Deterministic offline provider used by tests and the synthetic fixture.

Rules (all outputs depend only on the inputs and ``seed``):

* rewrite: simplified = first six tokens, lower-cased, stopwords dropped;
  detailed = the query verbatim.
* caption: ``"frame <vid>:<idx> <fixture tokens>"``; a guided caption appends
  the guidance entities and actions.
* embed: 64-d signed bag of hashed content tokens, L2-normalised; texts with
  no content tokens map to ``e_0``.
* frame/query similarity: cosine of the query embedding and the embedding of
  the frame's agnostic caption.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import STOPWORDS, Query, SemanticGuidance, content_tokens, normalize_token
from ..errors import ContractViolation
from .base import Caption, CaptionMode, Embedding, ModelProvider

MOCK_DIM = 64

FILLER_WORDS = (
    "wall window table chair lamp shelf door floor ceiling curtain "
    "sky tree road car building grass water cloud fence sign"
).split()


def _hash64(seed: int, *parts: object) -> int:
    key = "\x1f".join([str(seed), *map(str, parts)]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def mock_embedding_vector(text: str, seed: int = 0, dim: int = MOCK_DIM) -> np.ndarray:
    acc = np.zeros(dim)
    for tok in content_tokens(text):
        h = _hash64(seed, tok)
        acc[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    norm = np.linalg.norm(acc)
    if norm == 0.0:
        acc = np.zeros(dim)
        acc[0] = 1.0
        return acc
    return acc / norm


class MockProvider(ModelProvider):
    name = "mock"

    def __init__(self, seed: int = 0, frame_tokens: Optional[Mapping[str, Sequence[str]]] = None):
        self.seed = seed
        self.frame_tokens = dict(frame_tokens or {})
        self.calls: dict[str, int] = {"rewrite": 0, "caption": 0, "embed": 0, "similarity": 0}
        self._lock = threading.Lock()

    def _count(self, kind: str) -> None:
        with self._lock:
            self.calls[kind] += 1

    @classmethod
    def from_fixture(cls, path: str | Path, seed: int = 0) -> "MockProvider":
        """Load ``{video_id: [caption tokens per frame, ...]}`` from JSON."""
        with open(path, encoding="utf-8") as fh:
            return cls(seed=seed, frame_tokens=json.load(fh))

    def _rewrite_once(self, query: Query, instruction_pair_id: int, sample_index: int) -> tuple[str, str]:
        self._count("rewrite")
        head = [normalize_token(t) for t in query.text.split()[:6]]
        simplified = " ".join(t for t in head if t and t not in STOPWORDS)
        return simplified, query.text

    def _frame_text(self, video_id: str, frame_index: int) -> str:
        frames = self.frame_tokens.get(video_id)
        if frames is not None and frame_index < len(frames):
            return frames[frame_index]
        h = _hash64(self.seed, "filler", video_id, frame_index)
        picks = [FILLER_WORDS[(h >> (8 * k)) % len(FILLER_WORDS)] for k in range(3)]
        return " ".join(picks)

    def _agnostic_text(self, video_id: str, frame_index: int) -> str:
        return f"frame {video_id}:{frame_index} {self._frame_text(video_id, frame_index)}".strip()

    def caption_frame(self, video_id: str, frame_index: int,
                      guidance: Optional[SemanticGuidance] = None) -> Caption:
        self._count("caption")
        if frame_index < 0:
            raise ContractViolation(f"negative frame index {frame_index}")
        text = self._agnostic_text(video_id, frame_index)
        if guidance is None:
            return Caption(text, CaptionMode.AGNOSTIC)
        return Caption(text + " " + " ".join(guidance.tokens()), CaptionMode.AWARE,
                       guidance.fingerprint())

    def embed(self, text: str) -> Embedding:
        self._count("embed")
        return Embedding(mock_embedding_vector(text, self.seed))

    def frame_query_similarity(self, video_id: str, frame_index: int, query_text: str) -> float:
        self._count("similarity")
        q = mock_embedding_vector(query_text, self.seed)
        c = mock_embedding_vector(self._agnostic_text(video_id, frame_index), self.seed)
        return float(np.dot(q, c))

    def has_grammar_error(self, text: str) -> bool:
        return False
