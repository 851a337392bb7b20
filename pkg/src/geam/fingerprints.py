"""Circular fingerprints, similarity and diversity measures.

Bits come from iterated neighborhood hashing: the radius-0 invariant of an
atom hashes its local features (element, aromaticity, degree, implicit
hydrogens, attachment markers, ring membership), and the radius-r invariant
hashes the radius-(r-1) invariant together with the sorted multiset of
(bond order, neighbor invariant) pairs. Every invariant at every radius sets
bit ``hash % width``. Hashing is FNV-1a over the little-endian 64-bit
encoding of the integers involved, so fingerprints are stable across runs
and platforms.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from geam.chem.graph import ELEMENTS, MolGraph
from geam.errors import EmptyReference, WidthMismatch

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1

DEFAULT_RADIUS = 2
DEFAULT_WIDTH = 1024
NOVELTY_THRESHOLD = 0.4
CIRCLES_THRESHOLD = 0.75


def fnv1a(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def _hash_ints(values: Sequence[int]) -> int:
    return fnv1a(struct.pack(f"<{len(values)}Q", *(v & _MASK64 for v in values)))


@dataclass(frozen=True)
class Fingerprint:
    width: int
    bits: frozenset[int]

    def __len__(self) -> int:
        return len(self.bits)


@lru_cache(maxsize=65536)
def ecfp(
    mol: MolGraph, radius: int = DEFAULT_RADIUS, width: int = DEFAULT_WIDTH
) -> Fingerprint:
    """Circular fingerprint of a molecule or fragment."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if width <= 0:
        raise ValueError("width must be positive")
    invariants = [
        _hash_ints(
            (
                ELEMENTS.index(atom.element),
                int(atom.aromatic),
                mol.degree(i),
                atom.implicit_h,
                mol.marker_counts[i],
                int(mol.ring_atom_flags[i]),
            )
        )
        for i, atom in enumerate(mol.atoms)
    ]
    bits = {inv % width for inv in invariants}
    for _ in range(radius):
        nxt = []
        for i in range(mol.n_atoms):
            env = sorted(
                (int(mol.bonds[bi].order), invariants[nb])
                for nb, bi in mol.neighbors[i]
            )
            flat: list[int] = [invariants[i]]
            for order, inv in env:
                flat.extend((order, inv))
            nxt.append(_hash_ints(flat))
        invariants = nxt
        bits.update(inv % width for inv in invariants)
    return Fingerprint(width, frozenset(bits))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """Jaccard similarity of on-bits; two empty fingerprints count as 1.0."""
    if a.width != b.width:
        raise WidthMismatch(f"fingerprint widths differ: {a.width} vs {b.width}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union


def max_similarity(fp: Fingerprint, reference: Sequence[Fingerprint]) -> float:
    if not reference:
        raise EmptyReference("similarity against an empty reference set")
    return max(tanimoto(fp, ref) for ref in reference)


def novelty(
    generated: Sequence[Fingerprint],
    reference: Sequence[Fingerprint],
    threshold: float = NOVELTY_THRESHOLD,
) -> float:
    """Fraction of generated fingerprints whose nearest reference similarity
    stays below the threshold."""
    if not reference:
        raise EmptyReference("novelty needs a non-empty reference set")
    if not generated:
        return 0.0
    novel = sum(
        1 for fp in generated if max_similarity(fp, reference) < threshold
    )
    return novel / len(generated)


def n_circles(
    fps: Sequence[Fingerprint], threshold: float = CIRCLES_THRESHOLD
) -> int:
    """Greedy count of mutually dissimilar fingerprints.

    Scans in input order and keeps a fingerprint when its similarity to every
    kept one is below the threshold; the kept count lower-bounds the size of
    the largest such set.
    """
    kept: list[Fingerprint] = []
    for fp in fps:
        if all(tanimoto(fp, other) < threshold for other in kept):
            kept.append(fp)
    return len(kept)
