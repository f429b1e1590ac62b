"""Dual caption sets: dense query-agnostic plus sparse query-aware captions."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional

from .core import PipelineConfig, Query, SemanticGuidance, VideoMeta, ceil_percent
from .errors import CaptionFailed, ProviderError
from .providers.base import Caption, CaptionMode, ModelProvider


def candidate_count(frame_count: int, top_k_percent: float) -> int:
    return max(1, ceil_percent(top_k_percent, frame_count))


@dataclass(frozen=True)
class CaptionSet:
    video_id: str
    agnostic: tuple[Caption, ...]
    aware: Mapping[int, Caption]
    candidate_frames: tuple[int, ...]

    def __post_init__(self):
        if tuple(sorted(self.aware)) != tuple(self.candidate_frames):
            raise ValueError("aware captions must exist for exactly the candidate frames")
        if any(b <= a for a, b in zip(self.candidate_frames, self.candidate_frames[1:])):
            raise ValueError("candidate frames must be strictly increasing")
        if any(c.mode is not CaptionMode.AGNOSTIC for c in self.agnostic):
            raise ValueError("agnostic slot holds a query-aware caption")
        if any(c.mode is not CaptionMode.AWARE for c in self.aware.values()):
            raise ValueError("aware slot holds a query-agnostic caption")

    @property
    def frame_count(self) -> int:
        return len(self.agnostic)

    def aware_or_agnostic(self, frame: int) -> Caption:
        """Query-aware caption where one exists, else the frame's agnostic caption."""
        return self.aware.get(frame) or self.agnostic[frame]


def select_candidate_frames(video: VideoMeta, query: Query, top_k_percent: float,
                            provider: ModelProvider) -> list[int]:
    """Top-K% frames by frame/query similarity; ties go to the lower index."""
    if not 0 < top_k_percent <= 100:
        raise ValueError("top_k_percent must lie in (0, 100]")
    k = candidate_count(video.frame_count, top_k_percent)
    scores = [provider.frame_query_similarity(video.video_id, f, query.text)
              for f in range(video.frame_count)]
    ranked = sorted(range(video.frame_count), key=lambda f: (-scores[f], f))
    return sorted(ranked[:k])


def _caption_all(provider: ModelProvider, video_id: str, frames, guidance, max_workers: int) -> list[Caption]:
    def one(f: int) -> Caption:
        try:
            return provider.caption_frame(video_id, f, guidance)
        except ProviderError as exc:
            raise CaptionFailed(video_id, f, str(exc)) from exc

    frames = list(frames)
    if max_workers > 1 and len(frames) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, frames))
    return [one(f) for f in frames]


def build_agnostic_captions(video: VideoMeta, provider: ModelProvider, max_workers: int = 1) -> list[Caption]:
    return _caption_all(provider, video.video_id, range(video.frame_count), None, max_workers)


def build_caption_set(video: VideoMeta, query: Query, guidance: SemanticGuidance,
                      cfg: PipelineConfig, provider: ModelProvider,
                      frame_scorer: Optional[ModelProvider] = None,
                      max_workers: int = 1) -> CaptionSet:
    """Caption every frame without the query and the top-K% frames with guidance.

    ``frame_scorer`` ranks frames for the top-K% selection; defaults to
    ``provider``. Any per-frame failure aborts with ``CaptionFailed``.
    """
    agnostic = build_agnostic_captions(video, provider, max_workers)
    candidates = select_candidate_frames(video, query, cfg.top_k_percent, frame_scorer or provider)
    aware_list = _caption_all(provider, video.video_id, candidates, guidance, max_workers)
    return CaptionSet(video.video_id, tuple(agnostic), dict(zip(candidates, aware_list)), tuple(candidates))
