"""Query rewriting at two granularities, guidance extraction and query typing."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .core import STOPWORDS, PipelineConfig, Query, SemanticGuidance, normalize_token
from .errors import GuidanceEmpty, ProviderError, RewriteFailed
from .providers.base import ModelProvider, validate_rewrite

log = logging.getLogger(__name__)

SIMPLE_MAX_TOKENS = 6
DETAIL_MIN_TOKENS = 20

# capitalised words that do not signal a proper noun
CAPITAL_ALLOWLIST = frozenset(
    "a an the i i'm i've i'd i'll he she it we they you his her its our their my your "
    "this that these those there here".split()
)

ACTION_SUFFIXES = ("ing", "ed")


@dataclass(frozen=True)
class RewrittenQueryPair:
    simplified: str
    detailed: str

    def __post_init__(self):
        validate_rewrite(self.simplified, self.detailed)


@dataclass(frozen=True)
class RewriteSet:
    original: Query
    pairs: tuple[RewrittenQueryPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ValueError("a rewrite set needs at least one pair")

    @property
    def m(self) -> int:
        return len(self.pairs)

    @classmethod
    def deduplicated(cls, original: Query, pairs: Sequence[RewrittenQueryPair]) -> "RewriteSet":
        """Drop repeated pairs, keeping first occurrences in order."""
        seen = set()
        unique = []
        for p in pairs:
            key = (p.simplified, p.detailed)
            if key not in seen:
                seen.add(key)
                unique.append(p)
        return cls(original, tuple(unique))

    def to_dict(self) -> dict:
        return {"qid": self.original.id, "query": self.original.text,
                "pairs": [[p.simplified, p.detailed] for p in self.pairs]}


def generate_rewrites(query: Query, cfg: PipelineConfig, provider: ModelProvider,
                      max_workers: int = 1) -> RewriteSet:
    """Request ``cfg.num_rewrites`` samples of the configured instruction pair.

    Samples that fail are skipped with a warning; duplicates are collapsed.
    Raises ``RewriteFailed`` only when no pair at all could be obtained.
    """

    def one(i: int):
        try:
            s, d = provider.rewrite(query, cfg.instruction_pair, i)
            return RewrittenQueryPair(s, d), None
        except ProviderError as exc:
            return None, exc

    indices = range(cfg.num_rewrites)
    if max_workers > 1 and cfg.num_rewrites > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, indices))
    else:
        results = [one(i) for i in indices]

    pairs = []
    errors = []
    for i, (pair, err) in enumerate(results):
        if pair is None:
            log.warning("rewrite sample %d for query %s failed: %s", i, query.id, err)
            errors.append(err)
        else:
            pairs.append(pair)
    if not pairs:
        raise RewriteFailed(f"no rewrite obtainable for query {query.id!r}: {errors[-1]}") from errors[-1]

    rs = RewriteSet.deduplicated(query, pairs)
    if rs.m < cfg.num_rewrites:
        log.warning("query %s: %d of %d rewrite pairs usable after dedup", query.id, rs.m, cfg.num_rewrites)
    return rs


def _heuristic_guidance(text: str) -> tuple[list[str], list[str]]:
    entities: list[str] = []
    actions: list[str] = []
    for raw in text.split():
        tok = normalize_token(raw)
        if not tok or tok in STOPWORDS:
            continue
        bucket = actions if tok.endswith(ACTION_SUFFIXES) else entities
        if tok not in bucket:
            bucket.append(tok)
    return entities, actions


def extract_guidance(query: Query, provider: Optional[ModelProvider] = None) -> SemanticGuidance:
    """Entities/actions for query-aware captioning.

    A provider's answer is filtered to items that occur in the query
    (case-insensitive); if nothing survives, or no provider is given, a
    suffix heuristic is used: tokens ending in -ing/-ed are actions and the
    remaining content words are entities.
    """
    lowered = query.text.lower()
    if provider is not None:
        try:
            ents, acts = provider.extract_guidance(query.text)
        except NotImplementedError:
            ents, acts = [], []
        except ProviderError as exc:
            log.warning("guidance extraction for %s failed (%s); using heuristic", query.id, exc)
            ents, acts = [], []
        ents = [e.strip() for e in ents if e.strip() and e.strip().lower() in lowered]
        acts = [a.strip() for a in acts if a.strip() and a.strip().lower() in lowered]
        if ents or acts:
            return SemanticGuidance(tuple(ents), tuple(acts))

    ents, acts = _heuristic_guidance(query.text)
    if not ents and not acts:
        raise GuidanceEmpty(f"query {query.id!r} has no content words")
    return SemanticGuidance(tuple(ents), tuple(acts))


class QueryCategory(str, enum.Enum):
    SIMPLE = "Simple"
    DETAIL = "Detail"
    ELSE = "Else"


@dataclass(frozen=True)
class QueryType:
    category: QueryCategory
    error_flag: bool = False

    def to_dict(self) -> dict:
        return {"category": self.category.value, "error_flag": self.error_flag}

    @classmethod
    def from_dict(cls, d: dict) -> "QueryType":
        return cls(QueryCategory(d["category"]), bool(d.get("error_flag", False)))


def has_proper_noun(text: str) -> bool:
    """Capitalised token that is not sentence-initial and not a pronoun/article."""
    sentence_start = True
    for raw in text.split():
        word = raw.strip("\"'([{")
        if word and not sentence_start and word[0].isupper():
            if normalize_token(word) not in CAPITAL_ALLOWLIST:
                return True
        sentence_start = raw.endswith((".", "!", "?"))
    return False


def classify_query(query: Query, grammar_checker: Optional[Callable[[str], bool]] = None) -> QueryType:
    n = query.word_count
    if n <= SIMPLE_MAX_TOKENS:
        category = QueryCategory.SIMPLE
    elif n >= DETAIL_MIN_TOKENS or has_proper_noun(query.text):
        category = QueryCategory.DETAIL
    else:
        category = QueryCategory.ELSE
    error_flag = False
    if grammar_checker is not None:
        try:
            error_flag = bool(grammar_checker(query.text))
        except (NotImplementedError, ProviderError) as exc:
            log.debug("grammar check unavailable for %s: %s", query.id, exc)
    return QueryType(category, error_flag)
