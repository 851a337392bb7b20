"""Graph-level genetic operators over whole molecules.

Crossover cuts one acyclic single bond in each parent and joins one half of
each with a new single bond. Mutation applies a small local edit (element
swap, bond order change, short carbon chain, terminal deletion) and falls
back to the unmodified child whenever the edit would break valence or
aromaticity rules. Every accepted child costs exactly one oracle request.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from geam.chem import (
    AROMATIC_ELEMENTS,
    Atom,
    Bond,
    BondOrder,
    ELEMENTS,
    MolGraph,
    attach,
    canonical_smiles,
    cut_bonds,
    write_smiles,
)
from geam.errors import (
    ChemError,
    CrossoverFailed,
    PopulationTooSmall,
    ReproductionFailed,
    UnsupportedFeature,
)
from geam.oracles import OracleResult, PropertyOracle

POPULATION_SIZE = 100
MIN_CHILD_ATOMS = 15
MUTATION_RATE = 0.1
CROSSOVER_RETRIES = 20
REPRODUCTION_RESAMPLES = 10


@dataclass(frozen=True)
class Individual:
    graph: MolGraph
    canonical: str
    y: float
    ordinal: int  # global generation order, used to break score ties


class Population:
    """Fixed-capacity elite of the best distinct molecules seen so far."""

    def __init__(self, members: Sequence[Individual], size: int = POPULATION_SIZE):
        self.size = size
        self.members = list(members)[:size]

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @classmethod
    def from_entries(
        cls,
        entries: Iterable[tuple[MolGraph, float]],
        size: int = POPULATION_SIZE,
    ) -> "Population":
        members = [
            Individual(graph, canonical_smiles(graph), y, i)
            for i, (graph, y) in enumerate(entries)
        ]
        return cls(top_members(members, size), size)


def top_members(members: Iterable[Individual], size: int) -> list[Individual]:
    """Best ``size`` members, one per canonical form, earliest ordinal wins ties."""
    first: dict[str, Individual] = {}
    for m in members:
        held = first.get(m.canonical)
        if held is None or m.ordinal < held.ordinal:
            first[m.canonical] = m
    ranked = sorted(first.values(), key=lambda m: (-m.y, m.ordinal))
    return ranked[:size]


def select_parents(
    pop: Population, rng: np.random.Generator
) -> tuple[Individual, Individual]:
    """Two distinct parents, chosen proportionally to their scores."""
    if len(pop) < 2:
        raise PopulationTooSmall(f"need two parents, have {len(pop)}")
    scores = np.array([m.y for m in pop.members])
    total = float(scores.sum())
    probs = scores / total if total > 0.0 else None
    i = int(rng.choice(len(pop), p=probs))
    rest = [j for j in range(len(pop)) if j != i]
    if probs is None:
        j = int(rng.choice(rest))
    else:
        rest_p = scores[rest]
        rest_total = float(rest_p.sum())
        j = int(
            rng.choice(rest, p=rest_p / rest_total if rest_total > 0.0 else None)
        )
    return pop.members[i], pop.members[j]


def _cuttable_bonds(mol: MolGraph) -> list[int]:
    return [
        bi
        for bi, b in enumerate(mol.bonds)
        if b.order == BondOrder.SINGLE and not mol.ring_bond_flags[bi]
    ]


def crossover(
    a: MolGraph,
    b: MolGraph,
    rng: np.random.Generator,
    retries: int = CROSSOVER_RETRIES,
) -> MolGraph:
    """Swap halves of two parents across one acyclic single bond each."""
    cuts_a = _cuttable_bonds(a)
    cuts_b = _cuttable_bonds(b)
    if not cuts_a or not cuts_b:
        raise CrossoverFailed("a parent has no acyclic single bond to cut")
    for _ in range(retries):
        half_a, _ = cut_bonds(a, [cuts_a[rng.integers(len(cuts_a))]])[
            rng.integers(2)
        ]
        half_b, _ = cut_bonds(b, [cuts_b[rng.integers(len(cuts_b))]])[
            rng.integers(2)
        ]
        try:
            return attach(
                half_a,
                half_a.attachment_points[0],
                half_b,
                half_b.attachment_points[0],
            )
        except ChemError:
            continue
    raise CrossoverFailed(f"no valid recombination in {retries} attempts")


def _swap_element(mol: MolGraph, rng: np.random.Generator) -> MolGraph:
    i = int(rng.integers(mol.n_atoms))
    old = mol.atoms[i]
    pool = sorted(AROMATIC_ELEMENTS) if old.aromatic else list(ELEMENTS)
    choices = [e for e in pool if e != old.element]
    new_el = choices[rng.integers(len(choices))]
    atoms = list(mol.atoms)
    atoms[i] = Atom(new_el, old.aromatic, 0, old.charge)
    return MolGraph.from_parts(atoms, mol.bonds, mol.attachment_points)


def _change_bond_order(mol: MolGraph, rng: np.random.Generator) -> MolGraph:
    pool = [
        bi
        for bi, b in enumerate(mol.bonds)
        if b.order != BondOrder.AROMATIC and not mol.ring_bond_flags[bi]
    ]
    if not pool:
        raise CrossoverFailed("no editable bond")
    bi = pool[rng.integers(len(pool))]
    bond = mol.bonds[bi]
    orders = [o for o in (BondOrder.SINGLE, BondOrder.DOUBLE, BondOrder.TRIPLE)
              if o != bond.order]
    order = orders[rng.integers(len(orders))]
    bonds = list(mol.bonds)
    bonds[bi] = Bond(bond.a, bond.b, order)
    return MolGraph.from_parts(mol.atoms, bonds, mol.attachment_points)


def _append_chain(mol: MolGraph, rng: np.random.Generator) -> MolGraph:
    anchors = [i for i in range(mol.n_atoms) if mol.atoms[i].implicit_h >= 1]
    if not anchors:
        raise CrossoverFailed("no atom with a free valence")
    anchor = anchors[rng.integers(len(anchors))]
    length = int(rng.integers(1, 4))
    atoms = list(mol.atoms)
    bonds = list(mol.bonds)
    prev = anchor
    for _ in range(length):
        atoms.append(Atom("C", False, 0, 0))
        bonds.append(Bond(prev, len(atoms) - 1, BondOrder.SINGLE))
        prev = len(atoms) - 1
    return MolGraph.from_parts(atoms, bonds, mol.attachment_points)


def _delete_terminal(mol: MolGraph, rng: np.random.Generator) -> MolGraph:
    terminals = [
        i
        for i in range(mol.n_atoms)
        if mol.degree(i) == 1 and mol.marker_counts[i] == 0
    ]
    if not terminals or mol.n_atoms < 3:
        raise CrossoverFailed("nothing removable")
    gone = terminals[rng.integers(len(terminals))]
    atoms = [a for i, a in enumerate(mol.atoms) if i != gone]

    def shift(i: int) -> int:
        return i - 1 if i > gone else i

    bonds = [
        Bond(shift(b.a), shift(b.b), b.order)
        for b in mol.bonds
        if gone not in (b.a, b.b)
    ]
    markers = [shift(i) for i in mol.attachment_points if i != gone]
    return MolGraph.from_parts(atoms, bonds, markers)


_EDITS = (_swap_element, _change_bond_order, _append_chain, _delete_terminal)


def mutate(
    mol: MolGraph, rng: np.random.Generator, rate: float = MUTATION_RATE
) -> MolGraph:
    """With probability ``rate`` apply one random edit; identity on failure.

    The random stream always advances the same way for a given draw so that
    failed edits do not shift later decisions unpredictably between runs with
    identical inputs.
    """
    if rng.random() >= rate:
        return mol
    edit = _EDITS[rng.integers(len(_EDITS))]
    try:
        return edit(mol, rng)
    except ChemError:
        return mol
    except CrossoverFailed:
        return mol


def reproduce(
    pop: Population,
    oracle: PropertyOracle,
    rng: np.random.Generator,
    min_atoms: int = MIN_CHILD_ATOMS,
    resamples: int = REPRODUCTION_RESAMPLES,
    mutation_rate: float = MUTATION_RATE,
) -> tuple[MolGraph, OracleResult]:
    """One offspring from the population, scored exactly once."""
    for _ in range(resamples):
        parent_a, parent_b = select_parents(pop, rng)
        try:
            child = crossover(parent_a.graph, parent_b.graph, rng)
        except CrossoverFailed:
            continue
        child = mutate(child, rng, rate=mutation_rate)
        if child.n_atoms < min_atoms:
            continue
        try:
            # Both traversal orders must stay inside the 9-ring-closure
            # dialect, or downstream serialization would reject the child.
            write_smiles(child)
            canonical_smiles(child)
        except UnsupportedFeature:
            continue
        return child, oracle.evaluate(child)
    raise ReproductionFailed(f"no viable offspring in {resamples} attempts")
