"""Scored fragment vocabularies.

A vocabulary is an ordered, deduplicated set of attachable fragments. Order
is by score descending, then support size descending, then canonical form
ascending, so two runs over the same inputs produce identical vocabularies.
Fragments without at least one open attachment point are never admitted;
they could not be assembled onto anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from geam.chem import Fragment, canonical_smiles, parse_smiles
from geam.errors import EmptyVocabulary
from geam.fgib import FragmentScorer
from geam.fingerprints import DEFAULT_WIDTH, ecfp
from geam.fragment import FragmentCandidate

DEFAULT_TOP_K = 300
DEFAULT_CAPACITY = 1000
MAX_NEW_PER_UPDATE = 50


@dataclass(frozen=True)
class ScoredFragment:
    fragment: Fragment
    canonical: str
    score: float
    support_size: int

    def sort_key(self) -> tuple[float, float, str]:
        return (-self.score, -self.support_size, self.canonical)


@dataclass(frozen=True)
class Vocabulary:
    entries: tuple[ScoredFragment, ...]
    capacity: int = DEFAULT_CAPACITY

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> ScoredFragment:
        return self.entries[i]

    @cached_property
    def index(self) -> dict[str, int]:
        return {sf.canonical: i for i, sf in enumerate(self.entries)}

    def __contains__(self, canonical: str) -> bool:
        return canonical in self.index

    @cached_property
    def fingerprint_matrix(self) -> np.ndarray:
        """Dense (n, width) 0/1 matrix of fragment fingerprints."""
        mat = np.zeros((len(self.entries), DEFAULT_WIDTH))
        for i, sf in enumerate(self.entries):
            fp = ecfp(sf.fragment)
            mat[i, sorted(fp.bits)] = 1.0
        return mat

    def to_jsonl(self, path: str) -> None:
        with open(path, "w") as fh:
            for sf in self.entries:
                fh.write(
                    json.dumps(
                        {
                            "smiles": sf.canonical,
                            "score": sf.score,
                            "support": sf.support_size,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def from_jsonl(cls, path: str, capacity: int = DEFAULT_CAPACITY) -> "Vocabulary":
        entries = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries.append(
                    ScoredFragment(
                        fragment=parse_smiles(rec["smiles"]),
                        canonical=rec["smiles"],
                        score=float(rec["score"]),
                        support_size=int(rec["support"]),
                    )
                )
        return cls(entries=tuple(entries), capacity=capacity)


def _admissible(candidate: FragmentCandidate) -> bool:
    return len(candidate.fragment.attachment_points) > 0


def _scored(candidate: FragmentCandidate, score: float) -> ScoredFragment:
    # Reparse from the canonical form so atom indexing (and therefore any
    # site numbering downstream) only depends on the canonical string.
    return ScoredFragment(
        fragment=parse_smiles(candidate.canonical),
        canonical=candidate.canonical,
        score=score,
        support_size=candidate.support_size,
    )


def build_vocab(
    candidates: Sequence[FragmentCandidate],
    scorer: FragmentScorer,
    top_k: int = DEFAULT_TOP_K,
    capacity: int = DEFAULT_CAPACITY,
) -> Vocabulary:
    """Score candidates and keep the top ``top_k`` attachable ones."""
    scored = [
        _scored(c, scorer.score(c)) for c in candidates if _admissible(c)
    ]
    scored.sort(key=ScoredFragment.sort_key)
    return Vocabulary(entries=tuple(scored[:top_k]), capacity=capacity)


def random_vocab(
    candidates: Sequence[FragmentCandidate],
    rng: np.random.Generator,
    top_k: int = DEFAULT_TOP_K,
    capacity: int = DEFAULT_CAPACITY,
) -> Vocabulary:
    """Uniform sample of attachable candidates, score set to 0."""
    pool = [c for c in candidates if _admissible(c)]
    take = min(top_k, len(pool))
    picks = rng.choice(len(pool), size=take, replace=False) if take else []
    scored = [_scored(pool[i], 0.0) for i in picks]
    scored.sort(key=ScoredFragment.sort_key)
    return Vocabulary(entries=tuple(scored), capacity=capacity)


def update_vocab(
    vocab: Vocabulary,
    candidates: Sequence[FragmentCandidate],
    scorer: FragmentScorer,
    max_new: int = MAX_NEW_PER_UPDATE,
) -> tuple[Vocabulary, int]:
    """Merge newly extracted fragments into an existing vocabulary.

    At most ``max_new`` new fragments (best first) join per call; existing
    entries keep their original scores. The merged set is re-sorted and
    truncated to the vocabulary's capacity. Returns the new vocabulary and
    how many fragments were actually admitted.
    """
    fresh = [
        c
        for c in candidates
        if _admissible(c) and c.canonical not in vocab.index
    ]
    # Deduplicate within the batch, keeping the first occurrence.
    seen: set[str] = set()
    unique: list[FragmentCandidate] = []
    for c in fresh:
        if c.canonical not in seen:
            seen.add(c.canonical)
            unique.append(c)
    scored = [_scored(c, scorer.score(c)) for c in unique]
    scored.sort(key=ScoredFragment.sort_key)
    admitted = scored[:max_new]
    merged = list(vocab.entries) + admitted
    merged.sort(key=ScoredFragment.sort_key)
    kept = tuple(merged[: vocab.capacity])
    n_admitted = sum(1 for sf in admitted if sf in kept)
    return Vocabulary(entries=kept, capacity=vocab.capacity), n_admitted


def require_nonempty(vocab: Vocabulary) -> Vocabulary:
    if len(vocab) == 0:
        raise EmptyVocabulary("vocabulary has no fragments")
    return vocab


def vocab_from_smiles(
    smiles: Iterable[str], capacity: int = DEFAULT_CAPACITY
) -> Vocabulary:
    """Build a vocabulary directly from fragment strings (score 0)."""
    entries = []
    seen: set[str] = set()
    for s in smiles:
        frag = parse_smiles(s)
        canon = canonical_smiles(frag)
        if canon in seen or not frag.attachment_points:
            continue
        seen.add(canon)
        entries.append(
            ScoredFragment(
                fragment=parse_smiles(canon),
                canonical=canon,
                score=0.0,
                support_size=0,
            )
        )
    ordered = sorted(entries, key=ScoredFragment.sort_key)
    return Vocabulary(entries=tuple(ordered), capacity=capacity)
