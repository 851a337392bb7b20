"""Canonical text form for molecular graphs.

Atoms are partitioned by iterative neighborhood refinement (element,
aromaticity, degree, H count, ring membership, marker count, then repeated
neighbor-rank signatures). Remaining ties are broken by individualizing each
tied atom in the first ambiguous class and keeping the lexicographically
smallest serialization, so two graphs share a canonical form exactly when
they are isomorphic with matching labels.
"""

from __future__ import annotations

from functools import lru_cache

from geam.chem.graph import Bond, MolGraph
from geam.chem.smiles import write_smiles


@lru_cache(maxsize=65536)
def canonical_smiles(mol: MolGraph) -> str:
    """Canonical SMILES text; equal strings iff isomorphic graphs."""
    ranks = _refine(mol, _initial_ranks(mol))
    return _canonical_text(mol, ranks)


def core_canonical_smiles(mol: MolGraph) -> str:
    """Canonical form with attachment markers stripped.

    Used wherever two fragments should match regardless of how many open
    slots they carry (motif detection, fragment cores).
    """
    return canonical_smiles(mol.without_attachment_points())


def relabeled(mol: MolGraph, new_of_old: list[int]) -> MolGraph:
    """Copy of the graph with atom ``i`` moved to index ``new_of_old[i]``."""
    n = mol.n_atoms
    old_of_new = [0] * n
    for old, new in enumerate(new_of_old):
        old_of_new[new] = old
    atoms = tuple(mol.atoms[old] for old in old_of_new)
    bonds = tuple(
        Bond(new_of_old[b.a], new_of_old[b.b], b.order) for b in mol.bonds
    )
    markers = tuple(new_of_old[i] for i in mol.attachment_points)
    return MolGraph.from_parts(atoms, bonds, markers)


def _initial_ranks(mol: MolGraph) -> list[int]:
    keys = [
        (
            atom.element,
            atom.aromatic,
            mol.degree(i),
            atom.implicit_h,
            mol.ring_atom_flags[i],
            mol.marker_counts[i],
        )
        for i, atom in enumerate(mol.atoms)
    ]
    return _dense_ranks(keys)


def _refine(mol: MolGraph, ranks: list[int]) -> list[int]:
    """Propagate neighbor ranks until the partition stops splitting."""
    while True:
        keys = [
            (
                ranks[i],
                tuple(
                    sorted(
                        (int(mol.bonds[bi].order), ranks[nb])
                        for nb, bi in mol.neighbors[i]
                    )
                ),
            )
            for i in range(mol.n_atoms)
        ]
        new_ranks = _dense_ranks(keys)
        if new_ranks == ranks:
            return ranks
        ranks = new_ranks


def _dense_ranks(keys: list) -> list[int]:
    rank_of = {key: r for r, key in enumerate(sorted(set(keys)))}
    return [rank_of[k] for k in keys]


def _canonical_text(mol: MolGraph, ranks: list[int]) -> str:
    by_rank: dict[int, list[int]] = {}
    for i, r in enumerate(ranks):
        by_rank.setdefault(r, []).append(i)
    tied = [r for r, members in sorted(by_rank.items()) if len(members) > 1]
    if not tied:
        order = sorted(range(mol.n_atoms), key=ranks.__getitem__)
        new_of_old = [0] * mol.n_atoms
        for new, old in enumerate(order):
            new_of_old[old] = new
        return write_smiles(relabeled(mol, new_of_old))
    # Individualize each member of the first tied class and keep the
    # lexicographically smallest result.
    best: str | None = None
    for atom in by_rank[tied[0]]:
        branched = [2 * r for r in ranks]
        branched[atom] -= 1
        candidate = _canonical_text(mol, _refine(mol, _dense_ranks(branched)))
        if best is None or candidate < best:
            best = candidate
    assert best is not None
    return best
