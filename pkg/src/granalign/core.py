"""Shared value types, pipeline configuration and interval helpers."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

# Small closed-class word list; used by the mock rewriter/embedder and the
# heuristic guidance extractor.
STOPWORDS = frozenset(
    """
    a an the and or but of to in on at by for with from into onto over under
    up down out off about as is are was were be been being am do does did
    it its this that these those there here then than so very just
    he she they we you i me him her them us his their our your my
    who whom which what while when where some any each other another
    while after before during through around near not no
    """.split()
)

_PUNCT = "\"'.,!?;:()[]{}"


def normalize_token(token: str) -> str:
    return token.strip(_PUNCT).lower()


def content_tokens(text: str) -> list[str]:
    """Lower-cased tokens of ``text`` with punctuation and stopwords removed."""
    out = []
    for raw in text.split():
        tok = normalize_token(raw)
        if tok and tok not in STOPWORDS:
            out.append(tok)
    return out


def ceil_percent(percent: float, total: int) -> int:
    """Exact ``ceil(percent / 100 * total)`` without float round-off."""
    return math.ceil(Fraction(str(percent)) * total / 100)


@dataclass(frozen=True, order=True)
class TimeSpan:
    start_s: float
    end_s: float

    def __post_init__(self):
        for v in (self.start_s, self.end_s):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"invalid time {v!r} in span")
        if self.start_s > self.end_s:
            raise ValueError(f"span start {self.start_s} after end {self.end_s}")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    def as_list(self) -> list[float]:
        return [self.start_s, self.end_s]


@dataclass(frozen=True, order=True)
class FrameIndexSpan:
    """Inclusive range of frame indices."""

    start_idx: int
    end_idx: int

    def __post_init__(self):
        if self.start_idx < 0 or self.start_idx > self.end_idx:
            raise ValueError(f"invalid frame span [{self.start_idx}, {self.end_idx}]")

    @property
    def num_frames(self) -> int:
        return self.end_idx - self.start_idx + 1

    def indices(self) -> range:
        return range(self.start_idx, self.end_idx + 1)


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    word_count: int = field(default=-1)

    def __post_init__(self):
        n = len(self.text.split())
        if n < 1:
            raise ValueError("query text must contain at least one token")
        if self.word_count == -1:
            object.__setattr__(self, "word_count", n)
        elif self.word_count != n:
            raise ValueError(f"word_count {self.word_count} != {n} tokens")


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    duration_s: float
    fps: float
    frame_count: int

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.frame_count < 1:
            raise ValueError(f"video {self.video_id!r} has no frames")

    @classmethod
    def from_duration(cls, video_id: str, duration_s: float, fps: float) -> "VideoMeta":
        # 1e-9 guards products like 0.1 * 30 landing just under an integer;
        # clips shorter than one sampling interval still get one frame
        count = max(1, math.floor(duration_s * fps + 1e-9))
        return cls(video_id, float(duration_s), float(fps), count)


@dataclass(frozen=True)
class PipelineConfig:
    fps: float = 0.5
    top_k_percent: float = 10.0
    num_rewrites: int = 3
    merge_gap: int = 6
    bottom_percent: float = 20.0
    length_weight: float = 0.3
    nms_iou: float = 0.9
    histogram_bins: int = 10
    histogram_top_bins: int = 8
    instruction_pair: int = 1

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigError("fps must be > 0")
        if not 0 < self.top_k_percent <= 100:
            raise ConfigError("top_k_percent must lie in (0, 100]")
        if self.num_rewrites < 1:
            raise ConfigError("num_rewrites must be >= 1")
        if self.merge_gap < 0:
            raise ConfigError("merge_gap must be >= 0")
        if not 0 <= self.bottom_percent < 100:
            raise ConfigError("bottom_percent must lie in [0, 100)")
        if not 0 <= self.length_weight <= 1:
            raise ConfigError("length_weight must lie in [0, 1]")
        if not 0 < self.nms_iou <= 1:
            raise ConfigError("nms_iou must lie in (0, 1]")
        if not 1 <= self.histogram_top_bins <= self.histogram_bins:
            raise ConfigError("need 1 <= histogram_top_bins <= histogram_bins")

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(names)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kind = names[key].type
            try:
                kwargs[key] = int(value) if kind == "int" else float(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        return cls(**kwargs)


def load_config(path: str | Path, **overrides: Any) -> PipelineConfig:
    """Read a flat JSON or YAML config file; non-None ``overrides`` win."""
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(raw) or {}
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_mapping(data)


def temporal_iou(a: TimeSpan, b: TimeSpan) -> float:
    inter = max(0.0, min(a.end_s, b.end_s) - max(a.start_s, b.start_s))
    union = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    if union <= 0:
        # both spans are points
        return 1.0 if a == b else 0.0
    return inter / union


def frames_to_time(span: FrameIndexSpan, fps: float) -> TimeSpan:
    if fps <= 0:
        raise ValueError("fps must be positive")
    return TimeSpan(span.start_idx / fps, (span.end_idx + 1) / fps)


_WS = re.compile(r"\s+")


def collapse_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class SemanticGuidance:
    """Entities and actions pulled from a query to steer query-aware captioning."""

    entities: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.entities and not self.actions:
            raise ValueError("guidance needs at least one entity or action")

    def tokens(self) -> list[str]:
        return [*self.entities, *self.actions]

    def fingerprint(self) -> str:
        payload = json.dumps({"entities": self.entities, "actions": self.actions},
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]
