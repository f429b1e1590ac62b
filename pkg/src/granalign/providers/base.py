"""Provider contract shared by the mock, file-backed and HTTP backends."""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Query, SemanticGuidance
from ..errors import ContractViolation, DimensionMismatch

log = logging.getLogger(__name__)

NORM_TOL = 1e-6


class CaptionMode(str, enum.Enum):
    AGNOSTIC = "agnostic"
    AWARE = "aware"


@dataclass(frozen=True)
class Caption:
    text: str
    mode: CaptionMode
    guidance_fingerprint: Optional[str] = None

    def __post_init__(self):
        if not self.text.strip():
            raise ContractViolation("caption text is empty")
        if (self.mode is CaptionMode.AWARE) != (self.guidance_fingerprint is not None):
            raise ContractViolation("guidance fingerprint must be set iff the caption is query-aware")


@dataclass(frozen=True, eq=False)
class Embedding:
    """Unit-norm sentence embedding. The backing array is read-only."""

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ContractViolation("embedding must be a non-empty 1-d vector")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > NORM_TOL:
            raise ContractViolation(f"embedding norm {norm:.8f} is not 1")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])

    @classmethod
    def normalized(cls, values) -> "Embedding":
        vec = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if not np.isfinite(norm) or norm == 0.0:
            raise ContractViolation("cannot normalize a zero or non-finite vector")
        return cls(vec / norm)

    def cosine(self, other: "Embedding") -> float:
        if self.dim != other.dim:
            raise DimensionMismatch(f"embedding dims differ: {self.dim} vs {other.dim}")
        return float(np.dot(self.vector, other.vector))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ModelProvider:
    """Access point for the four external model capabilities.

    Subclasses implement the ``_rewrite_once``, ``caption_frame``, ``embed``
    and ``frame_query_similarity`` hooks. ``extract_guidance`` and
    ``has_grammar_error`` are optional; the default raises
    ``NotImplementedError`` and callers fall back to heuristics.
    """

    name = "provider"

    def rewrite(self, query: Query, instruction_pair_id: int, sample_index: int) -> tuple[str, str]:
        """Return a (simplified, detailed) pair, retrying once on a contract violation."""
        last: ContractViolation | None = None
        for attempt in range(2):
            try:
                simplified, detailed = self._rewrite_once(query, instruction_pair_id, sample_index)
                return validate_rewrite(simplified, detailed)
            except ContractViolation as exc:
                last = exc
                if attempt == 0:
                    log.debug("rewrite of %s violated contract (%s); retrying", query.id, exc)
        assert last is not None
        raise last

    def _rewrite_once(self, query: Query, instruction_pair_id: int, sample_index: int) -> tuple[str, str]:
        raise NotImplementedError

    def caption_frame(self, video_id: str, frame_index: int,
                      guidance: Optional[SemanticGuidance] = None) -> Caption:
        raise NotImplementedError

    def embed(self, text: str) -> Embedding:
        raise NotImplementedError

    def frame_query_similarity(self, video_id: str, frame_index: int, query_text: str) -> float:
        raise NotImplementedError

    def extract_guidance(self, query_text: str) -> tuple[list[str], list[str]]:
        raise NotImplementedError

    def has_grammar_error(self, text: str) -> bool:
        raise NotImplementedError

    def close(self) -> None:
        pass


def validate_rewrite(simplified, detailed) -> tuple[str, str]:
    if not isinstance(simplified, str) or not isinstance(detailed, str):
        raise ContractViolation("rewrite outputs must be strings")
    simplified, detailed = simplified.strip(), detailed.strip()
    if not simplified or not detailed:
        raise ContractViolation("rewrite produced an empty query")
    if simplified == detailed:
        raise ContractViolation("simplified and detailed rewrites are identical")
    return simplified, detailed


@dataclass(frozen=True)
class ProviderSet:
    """One provider per capability; they may all be the same object."""

    rewriter: ModelProvider
    captioner: ModelProvider
    embedder: ModelProvider
    frame_scorer: ModelProvider

    @classmethod
    def single(cls, provider: ModelProvider) -> "ProviderSet":
        return cls(provider, provider, provider, provider)

    def close(self) -> None:
        seen = set()
        for p in (self.rewriter, self.captioner, self.embedder, self.frame_scorer):
            if id(p) not in seen:
                seen.add(id(p))
                p.close()
