"""Generation metrics: hit ratios, novelty, diversity, and report files.

All metrics are pure functions of the record log plus a reference set, so a
report can always be regenerated from the JSONL artifact. Uniqueness is by
canonical form (first occurrence wins), novelty compares fingerprints
against the reference set, and diversity is the greedy sphere-packing count
over the hit set in record order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from geam.chem import MolGraph, parse_smiles
from geam.errors import ConfigError, EmptyReference
from geam.fingerprints import (
    CIRCLES_THRESHOLD,
    Fingerprint,
    NOVELTY_THRESHOLD,
    ecfp,
    max_similarity,
    n_circles,
)
from geam.records import GenerationRecord

_OPS = {
    "ge": lambda a, b: a >= b,
    "gt": lambda a, b: a > b,
    "le": lambda a, b: a <= b,
    "lt": lambda a, b: a < b,
}


@dataclass(frozen=True)
class HitRule:
    component: str     # a component name, or "y" for the composite score
    op: str            # ge | gt | le | lt
    threshold: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise ConfigError(f"unknown comparison {self.op!r}")

    def holds(self, record: GenerationRecord) -> bool:
        value = record.y if self.component == "y" else record.component_raw(
            self.component
        )
        return _OPS[self.op](value, self.threshold)

    @classmethod
    def parse(cls, text: str) -> "HitRule":
        """Parse forms like ``motif>=0.5`` or ``sa<4``."""
        for token, op in ((">=", "ge"), ("<=", "le"), (">", "gt"), ("<", "lt")):
            if token in text:
                name, _, rhs = text.partition(token)
                return cls(name.strip(), op, float(rhs))
        raise ConfigError(f"cannot parse hit rule {text!r}")

    def text(self) -> str:
        token = {"ge": ">=", "gt": ">", "le": "<=", "lt": "<"}[self.op]
        return f"{self.component}{token}{self.threshold!r}"


def is_hit(record: GenerationRecord, rules: Sequence[HitRule]) -> bool:
    return all(rule.holds(record) for rule in rules)


@dataclass(frozen=True)
class MetricsReport:
    n_records: int
    oracle_calls: int               # charged evaluations
    n_unique: int
    novel_hit_ratio: float          # percent
    novelty: float                  # percent
    n_circles_hits: int
    novel_top_mean: float | None    # mean raw of primary over top unique novel hits
    primary: str
    maximize: bool
    hit_rules: tuple[str, ...]
    vocab_trajectory: tuple[tuple[int, int], ...]  # (cycle, size at cycle end)

    def to_json(self) -> str:
        doc = {
            "n_records": self.n_records,
            "oracle_calls": self.oracle_calls,
            "n_unique": self.n_unique,
            "novel_hit_ratio": self.novel_hit_ratio,
            "novelty": self.novelty,
            "n_circles_hits": self.n_circles_hits,
            "novel_top_mean": self.novel_top_mean,
            "primary": self.primary,
            "maximize": self.maximize,
            "hit_rules": list(self.hit_rules),
            "vocab_trajectory": [list(pair) for pair in self.vocab_trajectory],
        }
        return json.dumps(doc, sort_keys=True)

    def to_csv(self) -> str:
        top = "NA" if self.novel_top_mean is None else repr(self.novel_top_mean)
        trajectory = ";".join(f"{c}:{s}" for c, s in self.vocab_trajectory)
        header = (
            "n_records,oracle_calls,n_unique,novel_hit_ratio,novelty,"
            "n_circles_hits,novel_top_mean,primary,maximize,hit_rules,"
            "vocab_trajectory"
        )
        rules = ";".join(self.hit_rules)
        row = (
            f"{self.n_records},{self.oracle_calls},{self.n_unique},"
            f"{self.novel_hit_ratio!r},{self.novelty!r},{self.n_circles_hits},"
            f"{top},{self.primary},{int(self.maximize)},{rules},{trajectory}"
        )
        return header + "\n" + row + "\n"


def _vocab_trajectory(
    records: Sequence[GenerationRecord],
) -> tuple[tuple[int, int], ...]:
    last: dict[int, int] = {}
    for r in records:
        last[r.cycle] = r.vocab_size
    return tuple(sorted(last.items()))


def compute_metrics(
    records: Sequence[GenerationRecord],
    reference: Sequence[Fingerprint],
    hit_rules: Sequence[HitRule],
    primary: str,
    maximize: bool = True,
    novelty_threshold: float = NOVELTY_THRESHOLD,
    circles_threshold: float = CIRCLES_THRESHOLD,
    top_fraction: float = 0.05,
) -> MetricsReport:
    """Score a record log against a reference set.

    novel hit ratio: unique, novel hits over all records (percent).
    novelty: records below the reference-similarity threshold (percent).
    #Circles: greedy diversity count over hits, in record order.
    novel top mean: mean primary raw value over the best
    ceil(top_fraction * count) unique novel hits; None when there are none.
    """
    if not reference:
        raise EmptyReference("metrics need a non-empty reference set")
    fps = [ecfp(parse_smiles(r.canonical)) for r in records]
    novel_flags = [
        max_similarity(fp, reference) < novelty_threshold for fp in fps
    ]
    hit_flags = [is_hit(r, hit_rules) for r in records]

    seen: set[str] = set()
    unique_flags = []
    for r in records:
        unique_flags.append(r.canonical not in seen)
        seen.add(r.canonical)

    n = len(records)
    unique_novel_hits = [
        r
        for r, u, v, h in zip(records, unique_flags, novel_flags, hit_flags)
        if u and v and h
    ]
    novel_hit_ratio = 100.0 * len(unique_novel_hits) / n if n else 0.0
    novelty_pct = (
        100.0 * sum(novel_flags) / n if n else 0.0
    )
    hit_fps = [fp for fp, h in zip(fps, hit_flags) if h]
    circles = n_circles(hit_fps, circles_threshold)

    if unique_novel_hits:
        take = max(1, math.ceil(top_fraction * len(unique_novel_hits)))
        ranked = sorted(
            (r.component_raw(primary) for r in unique_novel_hits),
            reverse=maximize,
        )
        top_mean = sum(ranked[:take]) / take
    else:
        top_mean = None

    return MetricsReport(
        n_records=n,
        oracle_calls=sum(1 for r in records if r.charged),
        n_unique=sum(unique_flags),
        novel_hit_ratio=novel_hit_ratio,
        novelty=novelty_pct,
        n_circles_hits=circles,
        novel_top_mean=top_mean,
        primary=primary,
        maximize=maximize,
        hit_rules=tuple(rule.text() for rule in hit_rules),
        vocab_trajectory=_vocab_trajectory(records),
    )


def reference_fingerprints(mols: Sequence[MolGraph]) -> list[Fingerprint]:
    return [ecfp(mol) for mol in mols]


def top_mean_y(records: Sequence[GenerationRecord], k: int = 100) -> float:
    """Mean composite score of the best k unique molecules."""
    best: dict[str, float] = {}
    for r in records:
        if r.canonical not in best or r.y > best[r.canonical]:
            best[r.canonical] = r.y
    ranked = sorted(best.values(), reverse=True)
    if not ranked:
        return 0.0
    return sum(ranked[:k]) / min(k, len(ranked))
