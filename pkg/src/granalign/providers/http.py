"""OpenAI-compatible HTTP backend (chat completions + embeddings)."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from typing import Any, Optional

import httpx
import numpy as np

from ..core import Query, SemanticGuidance
from ..errors import ContractViolation, RemoteUnavailable
from ..instructions import get_pair
from .base import Caption, CaptionMode, Embedding, ModelProvider

log = logging.getLogger(__name__)

DEFAULT_MAX_IN_FLIGHT = 8
DEFAULT_FRAME_URL = "{video_id}/{frame_index}"

AGNOSTIC_PROMPT = "Describe what is happening in this video frame in one sentence."
AWARE_PROMPT = (
    "Describe what is happening in this video frame in one sentence. "
    "Pay particular attention to the following, and mention them only if they are visible. "
    "Entities: {entities}. Actions: {actions}."
)
GUIDANCE_PROMPT = (
    "Extract the key entities (nouns) and actions (verbs or verb phrases) from the query below. "
    'Answer with JSON only: {{"entities": [...], "actions": [...]}}. Use words from the query.\n'
    "Query: {query}"
)
GRAMMAR_PROMPT = (
    "Does the following sentence contain a grammatical error? Answer yes or no.\nSentence: {text}"
)

_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)


def _parse_json_object(content: str) -> dict:
    text = _FENCE.sub("", content.strip())
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end < start:
        raise ContractViolation(f"expected a JSON object, got {content[:80]!r}")
    try:
        obj = json.loads(text[start:end + 1])
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"unparseable JSON from model: {exc}") from exc
    if not isinstance(obj, dict):
        raise ContractViolation("expected a JSON object")
    return obj


def parse_rewrite_reply(content: str) -> tuple[str, str]:
    """Accept either ``{"simplified": .., "detailed": ..}`` or two labelled lines."""
    try:
        obj = _parse_json_object(content)
        return str(obj.get("simplified", "")), str(obj.get("detailed", ""))
    except ContractViolation:
        pass
    found = {}
    for line in content.splitlines():
        key, sep, value = line.partition(":")
        key = key.strip().strip("*-# ").lower()
        if sep and key in ("simplified", "detailed"):
            found[key] = value.strip()
    if len(found) != 2:
        raise ContractViolation(f"could not parse rewrite reply {content[:80]!r}")
    return found["simplified"], found["detailed"]


class HttpProvider(ModelProvider):
    """Talks to ``/v1/chat/completions`` and ``/v1/embeddings``.

    ``frame_url_template`` turns ``(video_id, frame_index)`` into the image URL
    sent in chat content parts and to the embeddings endpoint for frame/query
    similarity (servers hosting CLIP-style models accept image URLs as input).
    """

    name = "http"

    def __init__(self, endpoint: str, model_name: Optional[str] = None, *,
                 auth_token_env: Optional[str] = None,
                 frame_url_template: str = DEFAULT_FRAME_URL,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 timeout: float = 60.0,
                 transport: Optional[httpx.BaseTransport] = None):
        base = endpoint.rstrip("/")
        if not base.endswith("/v1"):
            base += "/v1"
        headers = {"Content-Type": "application/json"}
        if auth_token_env:
            token = os.environ.get(auth_token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
            else:
                log.warning("auth env var %s is not set; sending no token", auth_token_env)
        self.model_name = model_name or "default"
        self.frame_url_template = frame_url_template
        self._client = httpx.Client(base_url=base, headers=headers, timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._text_memo: dict[str, np.ndarray] = {}

    def _post(self, path: str, payload: dict[str, Any]) -> dict:
        with self._slots:
            try:
                resp = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                raise RemoteUnavailable(f"{path}: {exc}") from exc
        if resp.status_code >= 400:
            raise RemoteUnavailable(f"{path}: HTTP {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ContractViolation(f"{path}: response is not JSON") from exc

    def _chat(self, messages: list[dict], temperature: Optional[float] = None) -> str:
        payload: dict[str, Any] = {"model": self.model_name, "messages": messages}
        if temperature is not None:
            payload["temperature"] = temperature
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ContractViolation("malformed chat completion response") from exc
        if not isinstance(content, str) or not content.strip():
            raise ContractViolation("empty chat completion")
        return content

    def _embeddings(self, inputs: list[str]) -> list[np.ndarray]:
        data = self._post("/embeddings", {"model": self.model_name, "input": inputs})
        try:
            rows = sorted(data["data"], key=lambda d: d.get("index", 0))
            vecs = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation("malformed embeddings response") from exc
        if len(vecs) != len(inputs):
            raise ContractViolation(f"asked for {len(inputs)} embeddings, got {len(vecs)}")
        return vecs

    def frame_url(self, video_id: str, frame_index: int) -> str:
        return self.frame_url_template.format(video_id=video_id, frame_index=frame_index)

    def _rewrite_once(self, query: Query, instruction_pair_id: int, sample_index: int) -> tuple[str, str]:
        pair = get_pair(instruction_pair_id)
        system = (
            "You rewrite video search queries at two levels of detail.\n"
            f"Simplified rewrite: {pair.simplified}\n"
            f"Detailed rewrite: {pair.detailed}\n"
            'Answer with JSON only: {"simplified": "...", "detailed": "..."}'
        )
        user = f"Query: {query.text}\nThis is variation #{sample_index + 1}."
        content = self._chat([{"role": "system", "content": system},
                              {"role": "user", "content": user}])
        return parse_rewrite_reply(content)

    def caption_frame(self, video_id: str, frame_index: int,
                      guidance: Optional[SemanticGuidance] = None) -> Caption:
        if guidance is None:
            prompt = AGNOSTIC_PROMPT
        else:
            prompt = AWARE_PROMPT.format(entities=", ".join(guidance.entities) or "none",
                                         actions=", ".join(guidance.actions) or "none")
        content = self._chat([{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": self.frame_url(video_id, frame_index)}},
            ],
        }])
        text = content.strip()
        if guidance is None:
            return Caption(text, CaptionMode.AGNOSTIC)
        return Caption(text, CaptionMode.AWARE, guidance.fingerprint())

    def embed(self, text: str) -> Embedding:
        (vec,) = self._embeddings([text])
        return Embedding.normalized(vec)

    def frame_query_similarity(self, video_id: str, frame_index: int, query_text: str) -> float:
        q = self._text_memo.get(query_text)
        if q is None:
            q = Embedding.normalized(self._embeddings([query_text])[0]).vector
            self._text_memo[query_text] = q
        (img,) = self._embeddings([self.frame_url(video_id, frame_index)])
        return float(np.dot(q, Embedding.normalized(img).vector))

    def extract_guidance(self, query_text: str) -> tuple[list[str], list[str]]:
        obj = _parse_json_object(self._chat([{"role": "user",
                                              "content": GUIDANCE_PROMPT.format(query=query_text)}]))
        entities = [str(e) for e in obj.get("entities") or []]
        actions = [str(a) for a in obj.get("actions") or []]
        return entities, actions

    def has_grammar_error(self, text: str) -> bool:
        reply = self._chat([{"role": "user", "content": GRAMMAR_PROMPT.format(text=text)}])
        return reply.strip().lower().startswith("yes")

    def close(self) -> None:
        self._client.close()
