"""JSON-lines cache backend.

A cache directory holds one file per capability::

    captions.jsonl          {video_id, frame_index, mode, guidance_fingerprint, text}
    embeddings.jsonl        {text_sha256, vector}
    frame_similarity.jsonl  {video_id, frame_index, query_sha256, score}
    rewrites.jsonl          {query_sha256, instruction_pair_id, sample_index, simplified, detailed}

Files are read once at construction. With a ``fallback`` provider, misses are
forwarded to it and the answer is appended to the cache; without one they
raise ``CacheMiss``.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path
from typing import Any, Callable, Optional

from ..core import Query, SemanticGuidance
from ..errors import CacheMiss, ParseError
from .base import Caption, CaptionMode, Embedding, ModelProvider, sha256_text

log = logging.getLogger(__name__)

CAPTIONS = "captions.jsonl"
EMBEDDINGS = "embeddings.jsonl"
SIMILARITY = "frame_similarity.jsonl"
REWRITES = "rewrites.jsonl"


def _read_jsonl(path: Path, key_fn: Callable[[dict], Any]) -> dict:
    table: dict = {}
    if not path.exists():
        return table
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                table[key_fn(rec)] = rec
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path.name}: {exc}", lineno) from exc
    return table


def _caption_key(rec: dict) -> tuple:
    return (str(rec["video_id"]), int(rec["frame_index"]), rec["mode"], rec.get("guidance_fingerprint"))


def _similarity_key(rec: dict) -> tuple:
    return (str(rec["video_id"]), int(rec["frame_index"]), rec["query_sha256"])


def _rewrite_key(rec: dict) -> tuple:
    return (rec["query_sha256"], int(rec["instruction_pair_id"]), int(rec["sample_index"]))


class FileBackedProvider(ModelProvider):
    name = "file"

    def __init__(self, cache_dir: str | Path, fallback: Optional[ModelProvider] = None):
        self.cache_dir = Path(cache_dir)
        self.fallback = fallback
        self._write_lock = threading.Lock()
        self._captions = _read_jsonl(self.cache_dir / CAPTIONS, _caption_key)
        self._embeddings = _read_jsonl(self.cache_dir / EMBEDDINGS, lambda r: r["text_sha256"])
        self._similarity = _read_jsonl(self.cache_dir / SIMILARITY, _similarity_key)
        self._rewrites = _read_jsonl(self.cache_dir / REWRITES, _rewrite_key)
        self._dim: Optional[int] = None

    def _store(self, filename: str, table: dict, key, record: dict) -> None:
        with self._write_lock:
            if key in table:
                return
            table[key] = record
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            with open(self.cache_dir / filename, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def _miss(self, what: str):
        if self.fallback is None:
            raise CacheMiss(f"{what} not in cache {self.cache_dir}")
        return self.fallback

    def _rewrite_once(self, query: Query, instruction_pair_id: int, sample_index: int) -> tuple[str, str]:
        key = (sha256_text(query.text), instruction_pair_id, sample_index)
        rec = self._rewrites.get(key)
        if rec is None:
            provider = self._miss(f"rewrite of query {query.id!r} (pair {instruction_pair_id}, sample {sample_index})")
            simplified, detailed = provider.rewrite(query, instruction_pair_id, sample_index)
            rec = {"query_sha256": key[0], "instruction_pair_id": instruction_pair_id,
                   "sample_index": sample_index, "simplified": simplified, "detailed": detailed}
            self._store(REWRITES, self._rewrites, key, rec)
        return rec["simplified"], rec["detailed"]

    def caption_frame(self, video_id: str, frame_index: int,
                      guidance: Optional[SemanticGuidance] = None) -> Caption:
        if guidance is None:
            mode, fp = CaptionMode.AGNOSTIC, None
        else:
            mode, fp = CaptionMode.AWARE, guidance.fingerprint()
        key = (video_id, frame_index, mode.value, fp)
        rec = self._captions.get(key)
        if rec is None:
            provider = self._miss(f"{mode.value} caption for {video_id}:{frame_index}")
            cap = provider.caption_frame(video_id, frame_index, guidance)
            rec = {"video_id": video_id, "frame_index": frame_index, "mode": mode.value,
                   "guidance_fingerprint": fp, "text": cap.text}
            self._store(CAPTIONS, self._captions, key, rec)
        return Caption(rec["text"], mode, fp)

    def has_caption(self, video_id: str, frame_index: int) -> bool:
        return (video_id, frame_index, CaptionMode.AGNOSTIC.value, None) in self._captions

    def embed(self, text: str) -> Embedding:
        key = sha256_text(text)
        rec = self._embeddings.get(key)
        if rec is None:
            provider = self._miss(f"embedding of {text[:40]!r}")
            emb = provider.embed(text)
            rec = {"text_sha256": key, "vector": emb.vector.tolist()}
            self._store(EMBEDDINGS, self._embeddings, key, rec)
            return emb
        emb = Embedding(rec["vector"])
        if self._dim is None:
            self._dim = emb.dim
        elif emb.dim != self._dim:
            raise ParseError(f"{EMBEDDINGS}: mixed embedding dimensions ({emb.dim} vs {self._dim})")
        return emb

    def frame_query_similarity(self, video_id: str, frame_index: int, query_text: str) -> float:
        key = (video_id, frame_index, sha256_text(query_text))
        rec = self._similarity.get(key)
        if rec is None:
            provider = self._miss(f"frame similarity for {video_id}:{frame_index}")
            score = provider.frame_query_similarity(video_id, frame_index, query_text)
            rec = {"video_id": video_id, "frame_index": frame_index,
                   "query_sha256": key[2], "score": score}
            self._store(SIMILARITY, self._similarity, key, rec)
        return float(rec["score"])

    def extract_guidance(self, query_text: str) -> tuple[list[str], list[str]]:
        if self.fallback is None:
            raise NotImplementedError
        return self.fallback.extract_guidance(query_text)

    def has_grammar_error(self, text: str) -> bool:
        if self.fallback is None:
            raise NotImplementedError
        return self.fallback.has_grammar_error(text)

    def close(self) -> None:
        if self.fallback is not None:
            self.fallback.close()
