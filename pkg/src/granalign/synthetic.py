"""Small synthetic benchmark for offline end-to-end runs with the mock provider.

Each video is 200 s long (100 frames at 0.5 fps). Frames inside a query's
planted window are captioned with that query's content words; all other
frames get a fixed, unrelated background description.
"""

from __future__ import annotations

import json
from pathlib import Path

from .core import content_tokens
from .data import DatasetRecord, Split, load_qvhighlights

DURATION_S = 200.0
FPS = 0.5

# (qid, vid, query, planted frame window inclusive)
QUERIES = (
    ("syn0", "vid_kitchen", "A man is chopping onions on a wooden board", (40, 60)),
    ("syn1", "vid_park", "a brown dog catches a red frisbee", (10, 25)),
    ("syn2", "vid_park", "Kids ride bikes next to the pond", (62, 85)),
    ("syn3", "vid_beach", "a woman surfing a large wave", (0, 15)),
    ("syn4", "vid_stage", "The band plays guitar under bright purple lights while the crowd is cheering", (78, 99)),
)

BACKGROUND_REPEAT = 4
BACKGROUND = {
    "vid_kitchen": "empty countertop beside closed cupboard",
    "vid_park": "quiet lawn under grey sky",
    "vid_beach": "calm sand dunes at dusk",
    "vid_stage": "dark empty venue hallway",
}


def frame_tokens() -> dict[str, list[str]]:
    videos: dict[str, list[str]] = {}
    for vid, text in BACKGROUND.items():
        # repeated so the per-frame id token in each mock caption barely moves the embedding
        videos[vid] = [" ".join([text] * BACKGROUND_REPEAT)] * int(DURATION_S * FPS)
    for _, vid, query, (lo, hi) in QUERIES:
        words = " ".join(content_tokens(query))
        for f in range(lo, hi + 1):
            videos[vid][f] = words
    return videos


def annotation_lines() -> list[dict]:
    lines = []
    for qid, vid, query, (lo, hi) in QUERIES:
        lines.append({
            "qid": qid,
            "query": query,
            "vid": vid,
            "duration": DURATION_S,
            "relevant_windows": [[lo / FPS, (hi + 1) / FPS]],
            "relevant_clip_ids": list(range(lo, hi + 1)),
        })
    return lines


def write_synthetic(out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``annotations.jsonl`` (QVHighlights format) and ``frames.json`` (mock fixture)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ann = out / "annotations.jsonl"
    ann.write_text("".join(json.dumps(d) + "\n" for d in annotation_lines()), encoding="utf-8")
    frames = out / "frames.json"
    frames.write_text(json.dumps(frame_tokens(), indent=1), encoding="utf-8")
    return ann, frames


def synthetic_records(tmp_dir: str | Path, fps: float = FPS) -> list[DatasetRecord]:
    ann, _ = write_synthetic(tmp_dir)
    return load_qvhighlights(ann, Split.VAL, fps=fps)
