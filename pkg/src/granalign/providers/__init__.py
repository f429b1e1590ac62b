"""Model provider backends and the spec used to build them."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .base import Caption, CaptionMode, Embedding, ModelProvider, ProviderSet, sha256_text
from .filebacked import FileBackedProvider
from .http import HttpProvider
from .mock import MockProvider, mock_embedding_vector


class ProviderKind(str, enum.Enum):
    HTTP = "http"
    FILE = "file"
    MOCK = "mock"


@dataclass(frozen=True)
class ProviderSpec:
    kind: ProviderKind
    endpoint: Optional[str] = None
    model_name: Optional[str] = None
    auth_token_env: Optional[str] = None
    cache_dir: Optional[str] = None
    seed: Optional[int] = None
    # extensions beyond the four core fields
    frame_url_template: Optional[str] = None
    mock_fixture: Optional[str] = None
    max_in_flight: int = 8

    def __post_init__(self):
        object.__setattr__(self, "kind", ProviderKind(self.kind))
        if self.kind is ProviderKind.HTTP and not self.endpoint:
            raise ValueError("an http provider needs an endpoint")
        if self.kind is ProviderKind.FILE and not self.cache_dir:
            raise ValueError("a file-backed provider needs a cache_dir")

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if v is not None}
        out["kind"] = self.kind.value
        return out


def build_provider(spec: ProviderSpec, *, cache_dir: Optional[str] = None) -> ModelProvider:
    """Instantiate ``spec``; a ``cache_dir`` wraps non-file backends in a read-through cache."""
    if spec.kind is ProviderKind.MOCK:
        seed = spec.seed or 0
        provider: ModelProvider = (MockProvider.from_fixture(spec.mock_fixture, seed=seed)
                                   if spec.mock_fixture else MockProvider(seed=seed))
    elif spec.kind is ProviderKind.HTTP:
        kwargs = {}
        if spec.frame_url_template:
            kwargs["frame_url_template"] = spec.frame_url_template
        provider = HttpProvider(spec.endpoint, spec.model_name, auth_token_env=spec.auth_token_env,
                                max_in_flight=spec.max_in_flight, **kwargs)
    else:
        return FileBackedProvider(spec.cache_dir)
    if cache_dir:
        return FileBackedProvider(cache_dir, fallback=provider)
    return provider


__all__ = [
    "Caption", "CaptionMode", "Embedding", "FileBackedProvider", "HttpProvider", "MockProvider",
    "ModelProvider", "ProviderKind", "ProviderSet", "ProviderSpec", "build_provider",
    "mock_embedding_vector", "sha256_text",
]
