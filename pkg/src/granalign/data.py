"""Benchmark annotation loaders and prediction (de)serialization."""

from __future__ import annotations

import enum
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import Query, TimeSpan, VideoMeta
from .errors import IoError, LengthMismatch, MissingDuration, ParseError, SchemaError
from .metrics import GroundTruth
from .propose import MomentPrediction, RankedSpan
from .score import FrameScoreSeries

log = logging.getLogger(__name__)

QVH_CLIP_SECONDS = 2.0
CHARADES_VAL_SEED = 2024


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class DatasetRecord:
    query: Query
    video: VideoMeta
    ground_truth: GroundTruth
    split: Split


def _clamp_window(start: float, end: float, duration: float, where: str) -> TimeSpan:
    if start < 0 or end < 0:
        raise ParseError(f"{where}: negative timestamp [{start}, {end}]")
    if start > end:
        raise ParseError(f"{where}: start {start} after end {end}")
    cs, ce = min(start, duration), min(end, duration)
    if (cs, ce) != (start, end):
        log.warning("%s: window [%s, %s] clamped to duration %s", where, start, end, duration)
    return TimeSpan(float(cs), float(ce))


def _open_lines(path: str | Path):
    try:
        with open(path, encoding="utf-8") as fh:
            yield from enumerate(fh, 1)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _qvh_labels(obj: dict, n_frames: int, fps: float) -> Optional[tuple[int, ...]]:
    clip_ids = obj.get("relevant_clip_ids")
    if clip_ids is None:
        return None
    # labels live on the score-series grid; one 2 s clip per frame at 0.5 fps
    labels = [0] * n_frames
    for cid in clip_ids:
        lo = int(cid * QVH_CLIP_SECONDS * fps)
        hi = max(lo + 1, int((cid + 1) * QVH_CLIP_SECONDS * fps))
        for f in range(lo, min(hi, n_frames)):
            labels[f] = 1
    return tuple(labels)


def load_qvhighlights(path: str | Path, split: Split | str = Split.VAL, fps: float = 0.5) -> list[DatasetRecord]:
    split = Split(split)
    records = []
    for lineno, line in _open_lines(path):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno)
        for key in ("qid", "query", "vid", "duration"):
            if key not in obj:
                raise SchemaError(key, lineno)
        duration = float(obj["duration"])
        video = VideoMeta.from_duration(str(obj["vid"]), duration, fps)
        windows: list[TimeSpan] = []
        if "relevant_windows" in obj:
            for w in obj["relevant_windows"]:
                if len(w) != 2:
                    raise ParseError(f"window {w!r} is not [start, end]", lineno)
                windows.append(_clamp_window(float(w[0]), float(w[1]), duration, f"{path}:{lineno}"))
        elif split is not Split.TEST:
            raise SchemaError("relevant_windows", lineno)
        if not windows and split is not Split.TEST:
            raise ParseError("no relevant windows", lineno)
        qid = str(obj["qid"])
        gt = GroundTruth(qid, tuple(windows), _qvh_labels(obj, video.frame_count, fps))
        records.append(DatasetRecord(Query(qid, str(obj["query"])), video, gt, split))
    return records


def load_duration_index(path: str | Path) -> dict[str, float]:
    """Durations from a JSON mapping or ``video_id duration`` text lines (CSV also accepted)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        return {str(k): float(v) for k, v in json.loads(text).items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.replace(",", " ").split()
        if not parts:
            continue
        try:
            out[parts[0]] = float(parts[-1])
        except ValueError as exc:
            raise ParseError(f"bad duration {parts[-1]!r}", lineno) from exc
    return out


def load_charades(path: str | Path, duration_index: Mapping[str, float] | str | Path,
                  split: Split | str = Split.TEST, fps: float = 0.5) -> list[DatasetRecord]:
    """``<vid> <start> <end>##<sentence>`` lines; query ids are ``<vid>#<line number>``."""
    split = Split(split)
    if not isinstance(duration_index, Mapping):
        duration_index = load_duration_index(duration_index)
    records = []
    for lineno, line in _open_lines(path):
        line = line.strip()
        if not line:
            continue
        head, sep, sentence = line.partition("##")
        parts = head.split()
        if not sep or len(parts) != 3 or not sentence.strip():
            raise ParseError("expected '<vid> <start> <end>##<sentence>'", lineno)
        vid = parts[0]
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise ParseError(f"bad timestamps {parts[1:]}", lineno) from exc
        if vid not in duration_index:
            raise MissingDuration(f"no duration for video {vid!r} (line {lineno})")
        duration = float(duration_index[vid])
        window = _clamp_window(start, end, duration, f"{path}:{lineno}")
        qid = f"{vid}#{lineno}"
        records.append(DatasetRecord(Query(qid, sentence.strip()),
                                     VideoMeta.from_duration(vid, duration, fps),
                                     GroundTruth(qid, (window,)), split))
    return records


def load_activitynet(path: str | Path, split: Split | str = Split.VAL, fps: float = 0.5) -> list[DatasetRecord]:
    split = Split(split)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(data, dict):
        raise ParseError("expected an object keyed by video id")
    records = []
    for vid, entry in data.items():
        for key in ("duration", "timestamps", "sentences"):
            if key not in entry:
                raise SchemaError(f"{vid}.{key}")
        stamps, sentences = entry["timestamps"], entry["sentences"]
        if len(stamps) != len(sentences):
            raise LengthMismatch(f"{vid}: {len(stamps)} timestamps vs {len(sentences)} sentences")
        duration = float(entry["duration"])
        video = VideoMeta.from_duration(vid, duration, fps)
        for i, (ts, sent) in enumerate(zip(stamps, sentences)):
            window = _clamp_window(float(ts[0]), float(ts[1]), duration, f"{vid}[{i}]")
            qid = f"{vid}#{i}"
            records.append(DatasetRecord(Query(qid, sent.strip()), video, GroundTruth(qid, (window,)), split))
    return records


def split_validation(records: Sequence[DatasetRecord], fraction: float = 0.1,
                     seed: int = CHARADES_VAL_SEED) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Carve a validation subset out of training records; returns (train, val) in source order."""
    idx = list(range(len(records)))
    random.Random(seed).shuffle(idx)
    chosen = set(idx[: round(fraction * len(records))])
    train = [r for i, r in enumerate(records) if i not in chosen]
    val = [r for i, r in enumerate(records) if i in chosen]
    return train, val


LOADERS = {
    "qvhighlights": load_qvhighlights,
    "charades": load_charades,
    "activitynet": load_activitynet,
}


# --- predictions -----------------------------------------------------------

def _r4(x: float) -> float:
    return round(float(x), 4)


def prediction_to_dict(pred: MomentPrediction) -> dict:
    out = {
        "qid": pred.query_id,
        "vid": pred.video_id,
        "pred_relevant_windows": [[_r4(r.span.start_s), _r4(r.span.end_s), _r4(r.score)] for r in pred.spans],
    }
    if pred.saliency is not None:
        out["pred_saliency_scores"] = [_r4(x) for x in pred.saliency.scores]
    return out


def write_predictions(preds: Iterable[MomentPrediction], path: str | Path) -> None:
    lines = [json.dumps(prediction_to_dict(p), separators=(", ", ": ")) for p in preds]
    try:
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write predictions to {path}: {exc}") from exc


def read_predictions(path: str | Path) -> list[MomentPrediction]:
    preds = []
    for lineno, line in _open_lines(path):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
        for key in ("qid", "pred_relevant_windows"):
            if key not in obj:
                raise SchemaError(key, lineno)
        spans = tuple(RankedSpan(TimeSpan(float(s), float(e)), float(sc))
                      for s, e, sc in obj["pred_relevant_windows"])
        qid, vid = str(obj["qid"]), str(obj.get("vid", ""))
        sal = obj.get("pred_saliency_scores")
        series = FrameScoreSeries(vid, qid, np.asarray(sal, dtype=np.float64)) if sal is not None else None
        preds.append(MomentPrediction(qid, vid, spans, series))
    return preds


def read_score_series(path: str | Path) -> list[FrameScoreSeries]:
    out = []
    for lineno, line in _open_lines(path):
        if not line.strip():
            continue
        try:
            out.append(FrameScoreSeries.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"bad score record: {exc}", lineno) from exc
    return out


def write_score_series(series: Iterable[FrameScoreSeries], path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for s in series:
                fh.write(json.dumps(s.to_dict()) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write scores to {path}: {exc}") from exc
