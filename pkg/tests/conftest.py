import math

import numpy as np
import pytest

from granalign.caption import CaptionSet
from granalign.core import Query
from granalign.providers import Caption, CaptionMode, Embedding, MockProvider, ModelProvider
from granalign.rewrite import RewriteSet, RewrittenQueryPair
from granalign.synthetic import frame_tokens, synthetic_records


class TableEmbedder(ModelProvider):
    """Embeds texts by table lookup; counts calls."""

    def __init__(self, table):
        self.table = {k: Embedding.normalized(v) for k, v in table.items()}
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return self.table[text]


def build_g_fixture(g_pairs, frame_count=1):
    """Rewrite set, caption set and embedder whose per-pair similarity terms equal ``g_pairs``.

    Captions: agnostic text "agn" -> e0, aware text "awr" -> e1 (frame 0 is the
    only candidate). Pair i's simplified query sits at cosine 2*g-1 from e0,
    its detailed query at cosine 2*g'-1 from e1.
    """
    m = len(g_pairs)
    dim = 2 * m + 2
    table = {"agn": np.eye(dim)[0], "awr": np.eye(dim)[1]}
    pairs = []
    for i, (gs, gd) in enumerate(g_pairs):
        for text, g, axis, extra in ((f"s{i}", gs, 0, 2 + 2 * i), (f"d{i}", gd, 1, 3 + 2 * i)):
            c = 2 * g - 1
            v = np.zeros(dim)
            v[axis] = c
            v[extra] = math.sqrt(max(0.0, 1 - c * c))
            table[text] = v
        pairs.append(RewrittenQueryPair(f"s{i}", f"d{i}"))
    rs = RewriteSet(Query("q", "some query"), tuple(pairs))
    agn = tuple(Caption("agn", CaptionMode.AGNOSTIC) for _ in range(frame_count))
    caps = CaptionSet("v", agn, {0: Caption("awr", CaptionMode.AWARE, "fp")}, (0,))
    return rs, caps, TableEmbedder(table)


@pytest.fixture
def mock_provider():
    return MockProvider(seed=0)


@pytest.fixture
def synthetic(tmp_path):
    return synthetic_records(tmp_path)


@pytest.fixture
def synthetic_provider():
    return MockProvider(seed=0, frame_tokens=frame_tokens())
