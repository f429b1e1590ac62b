"""Zero-shot video moment retrieval by aligning queries and frame captions at two granularities."""

from .core import (FrameIndexSpan, PipelineConfig, Query, SemanticGuidance, TimeSpan, VideoMeta,
                   frames_to_time, load_config, temporal_iou)
from .propose import MomentPrediction, propose
from .score import FrameScoreSeries, score_video

__version__ = "0.1.0"

__all__ = [
    "FrameIndexSpan", "FrameScoreSeries", "MomentPrediction", "PipelineConfig", "Query",
    "SemanticGuidance", "TimeSpan", "VideoMeta", "frames_to_time", "load_config", "propose",
    "score_video", "temporal_iou",
]
