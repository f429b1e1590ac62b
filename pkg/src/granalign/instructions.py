"""Bundled instruction pairs for granularity-based query rewriting."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

DEFAULT_PAIR = 1

_HEADER = re.compile(r"^\[pair\s+(\d+)\]\s*$")


@dataclass(frozen=True)
class InstructionPair:
    pair_id: int
    simplified: str
    detailed: str


def parse_instruction_pairs(text: str) -> dict[int, InstructionPair]:
    pairs: dict[int, dict[str, str]] = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _HEADER.match(line)
        if m:
            current = int(m.group(1))
            pairs[current] = {}
            continue
        key, sep, value = line.partition(":")
        if current is None or not sep or key not in ("simplified", "detailed"):
            raise ValueError(f"malformed instruction line: {line!r}")
        pairs[current][key] = value.strip()
    out = {}
    for pid, fields in pairs.items():
        if set(fields) != {"simplified", "detailed"}:
            raise ValueError(f"instruction pair {pid} is incomplete")
        out[pid] = InstructionPair(pid, fields["simplified"], fields["detailed"])
    return out


@lru_cache(maxsize=None)
def bundled_pairs() -> dict[int, InstructionPair]:
    text = resources.files("granalign.assets").joinpath("instruction_pairs.txt").read_text("utf-8")
    return parse_instruction_pairs(text)


def get_pair(pair_id: int) -> InstructionPair:
    pairs = bundled_pairs()
    if pair_id not in pairs:
        raise KeyError(f"unknown instruction pair {pair_id}; available: {sorted(pairs)}")
    return pairs[pair_id]
