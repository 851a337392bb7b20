"""Molecular graphs with a fixed-cap valence model.

Molecules are immutable labeled graphs over a small organic element set.
Open attachment points (serialized as ``*`` in SMILES) live on the graph as
a tuple of atom indices; a graph with at least one open site doubles as an
assembly fragment. Implicit hydrogens are never stored by callers: they are
derived from the valence caps at construction time, with attachment markers
each reserving one valence unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Sequence

from geam.errors import (
    AromaticityError,
    ChemError,
    InvalidSite,
    ValenceError,
)

# Allowed caps per element; multi-valued entries resolve to the smallest cap
# that fits the bond-order sum (hypervalent S and P).
VALENCE_CAPS: dict[str, tuple[int, ...]] = {
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "F": (1,),
    "P": (3, 5),
    "S": (2, 6),
    "Cl": (1,),
    "Br": (1,),
}

ELEMENTS: tuple[str, ...] = tuple(VALENCE_CAPS)

# Elements that may carry the aromatic flag. C and N donate one pi electron
# from a formal double bond and get +1 on their bond-order sum; O and S are
# lone-pair donors and get no increment.
AROMATIC_ELEMENTS: frozenset[str] = frozenset({"C", "N", "O", "S"})
AROMATIC_PI_DONORS: frozenset[str] = frozenset({"C", "N"})


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def units(self) -> int:
        """Contribution to the bond-order sum of each endpoint."""
        return 1 if self is BondOrder.AROMATIC else int(self)


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    implicit_h: int = 0
    charge: int = 0


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE

    def other(self, idx: int) -> int:
        if idx == self.a:
            return self.b
        if idx == self.b:
            return self.a
        raise ValueError(f"atom {idx} not on this bond")


@dataclass(frozen=True)
class MolGraph:
    """Connected molecular graph, optionally with open attachment points.

    ``attachment_points`` lists atom indices with a reserved single-bond
    slot; an index may repeat when one atom carries several open slots.
    Instances should be built with :meth:`from_parts`, which derives implicit
    hydrogens and validates valence, connectivity and aromaticity.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    attachment_points: tuple[int, ...] = field(default=())

    # -- construction --------------------------------------------------------

    @classmethod
    def from_parts(
        cls,
        atoms: Sequence[Atom],
        bonds: Iterable[Bond],
        attachment_points: Iterable[int] = (),
    ) -> "MolGraph":
        """Build a validated graph, recomputing every implicit-H count."""
        bonds = tuple(bonds)
        markers = tuple(sorted(attachment_points))
        n = len(atoms)
        if n == 0:
            raise ChemError("molecule needs at least one atom")

        seen_pairs: set[tuple[int, int]] = set()
        for bond in bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n) or bond.a == bond.b:
                raise ChemError(f"bond {bond.a}-{bond.b} references bad atom indices")
            pair = (min(bond.a, bond.b), max(bond.a, bond.b))
            if pair in seen_pairs:
                raise ChemError(f"duplicate bond {pair[0]}-{pair[1]}")
            seen_pairs.add(pair)

        for idx in markers:
            if not 0 <= idx < n:
                raise ChemError(f"attachment point {idx} out of range")

        marker_count = [0] * n
        for idx in markers:
            marker_count[idx] += 1

        order_sum = [0] * n
        for bond in bonds:
            order_sum[bond.a] += bond.order.units
            order_sum[bond.b] += bond.order.units

        finished: list[Atom] = []
        for i, atom in enumerate(atoms):
            if atom.element not in VALENCE_CAPS:
                raise ChemError(f"unsupported element {atom.element!r}")
            if atom.aromatic and atom.element not in AROMATIC_ELEMENTS:
                raise AromaticityError(f"{atom.element} cannot be aromatic")
            used = order_sum[i] + marker_count[i]
            if atom.aromatic and atom.element in AROMATIC_PI_DONORS:
                used += 1
            cap = _fit_cap(atom.element, used)
            finished.append(
                Atom(atom.element, atom.aromatic, implicit_h=cap - used)
            )

        mol = cls(tuple(finished), bonds, markers)
        mol._validate_connected()
        mol._validate_aromaticity()
        return mol

    # -- derived structure ---------------------------------------------------

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per atom: tuple of (neighbor index, bond index) pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for bi, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, bi))
            adj[bond.b].append((bond.a, bi))
        return tuple(tuple(pairs) for pairs in adj)

    @cached_property
    def rings(self) -> tuple[tuple[int, ...], ...]:
        """Fundamental cycle basis as ordered atom-index tuples."""
        return _cycle_basis(self)

    @cached_property
    def ring_bond_flags(self) -> tuple[bool, ...]:
        """True for bonds lying on some cycle (non-bridge edges)."""
        flags = [False] * len(self.bonds)
        pair_to_bond = {
            (min(b.a, b.b), max(b.a, b.b)): i for i, b in enumerate(self.bonds)
        }
        for ring in self.rings:
            for i, a in enumerate(ring):
                b = ring[(i + 1) % len(ring)]
                flags[pair_to_bond[(min(a, b), max(a, b))]] = True
        return tuple(flags)

    @cached_property
    def ring_atom_flags(self) -> tuple[bool, ...]:
        flags = [False] * len(self.atoms)
        for bi, bond in enumerate(self.bonds):
            if self.ring_bond_flags[bi]:
                flags[bond.a] = True
                flags[bond.b] = True
        return tuple(flags)

    @cached_property
    def marker_counts(self) -> tuple[int, ...]:
        counts = [0] * len(self.atoms)
        for idx in self.attachment_points:
            counts[idx] += 1
        return tuple(counts)

    def degree(self, idx: int) -> int:
        return len(self.neighbors[idx])

    def bond_between(self, a: int, b: int) -> Bond | None:
        for nb, bi in self.neighbors[a]:
            if nb == b:
                return self.bonds[bi]
        return None

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def without_attachment_points(self) -> "MolGraph":
        """The same molecule with every open slot replaced by hydrogen."""
        if not self.attachment_points:
            return self
        return MolGraph.from_parts(self.atoms, self.bonds, ())

    # -- validation ----------------------------------------------------------

    def _validate_connected(self) -> None:
        seen = {0}
        stack = [0]
        while stack:
            for nb, _ in self.neighbors[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(self.atoms):
            raise ChemError("molecule graph must be connected")

    def _validate_aromaticity(self) -> None:
        for bi, bond in enumerate(self.bonds):
            if bond.order is BondOrder.AROMATIC:
                if not (self.atoms[bond.a].aromatic and self.atoms[bond.b].aromatic):
                    raise AromaticityError(
                        f"aromatic bond {bond.a}-{bond.b} joins non-aromatic atoms"
                    )
                if not self.ring_bond_flags[bi]:
                    raise AromaticityError(
                        f"aromatic bond {bond.a}-{bond.b} is not a ring bond"
                    )
        aromatic_atoms = {i for i, a in enumerate(self.atoms) if a.aromatic}
        if not aromatic_atoms:
            return
        covered: set[int] = set()
        for ring in self.rings:
            if all(self.atoms[i].aromatic for i in ring) and all(
                self._ring_bond_order(ring, k) is BondOrder.AROMATIC
                for k in range(len(ring))
            ):
                covered.update(ring)
        missing = aromatic_atoms - covered
        if missing:
            raise AromaticityError(
                f"aromatic atoms {sorted(missing)} lie on no fully aromatic ring"
            )

    def _ring_bond_order(self, ring: tuple[int, ...], k: int) -> BondOrder:
        bond = self.bond_between(ring[k], ring[(k + 1) % len(ring)])
        assert bond is not None
        return bond.order


Fragment = MolGraph
"""A fragment is a molecular graph carrying >= 1 open attachment point."""


def _fit_cap(element: str, used: int) -> int:
    for cap in VALENCE_CAPS[element]:
        if used <= cap:
            return cap
    raise ValenceError(
        f"{element} with bond-order sum {used} exceeds cap "
        f"{max(VALENCE_CAPS[element])}"
    )


def _cycle_basis(mol: MolGraph) -> tuple[tuple[int, ...], ...]:
    """Fundamental cycles of a DFS spanning tree, one per extra edge."""
    parent: dict[int, tuple[int, int]] = {}  # atom -> (parent atom, bond idx)
    depth = {0: 0}
    order: list[int] = []
    stack = [0]
    tree_bonds: set[int] = set()
    while stack:
        v = stack.pop()
        order.append(v)
        for nb, bi in mol.neighbors[v]:
            if nb not in depth:
                depth[nb] = depth[v] + 1
                parent[nb] = (v, bi)
                tree_bonds.add(bi)
                stack.append(nb)
    cycles: list[tuple[int, ...]] = []
    for bi, bond in enumerate(mol.bonds):
        if bi in tree_bonds:
            continue
        # Walk both endpoints up to their lowest common ancestor.
        left, right = [bond.a], [bond.b]
        a, b = bond.a, bond.b
        while depth[a] > depth[b]:
            a = parent[a][0]
            left.append(a)
        while depth[b] > depth[a]:
            b = parent[b][0]
            right.append(b)
        while a != b:
            a = parent[a][0]
            b = parent[b][0]
            left.append(a)
            right.append(b)
        cycles.append(tuple(left + right[::-1][1:]))
    return tuple(cycles)


def attach(
    base: MolGraph, base_site: int, frag: Fragment, frag_site: int
) -> MolGraph:
    """Join ``frag`` onto ``base`` with a single bond between two open sites.

    Both sites must be open attachment points; one marker is consumed on each
    side and every remaining marker is preserved on the merged graph.
    """
    if base_site not in base.attachment_points:
        raise InvalidSite(f"atom {base_site} is not an open site of the base")
    if frag_site not in frag.attachment_points:
        raise InvalidSite(f"atom {frag_site} is not an open site of the fragment")
    offset = base.n_atoms
    atoms = base.atoms + frag.atoms
    bonds = list(base.bonds)
    bonds.extend(
        Bond(b.a + offset, b.b + offset, b.order) for b in frag.bonds
    )
    bonds.append(Bond(base_site, frag_site + offset, BondOrder.SINGLE))
    markers = list(base.attachment_points)
    markers.remove(base_site)
    frag_markers = list(frag.attachment_points)
    frag_markers.remove(frag_site)
    markers.extend(i + offset for i in frag_markers)
    return MolGraph.from_parts(atoms, bonds, markers)


def cut_bonds(
    mol: MolGraph, bond_indices: Iterable[int]
) -> list[tuple[Fragment, tuple[int, ...]]]:
    """Delete the given bonds and return each connected component.

    Every deleted-bond endpoint gains one attachment marker in its component.
    Returns (fragment, original atom indices) pairs, where position ``k`` of
    the index tuple is the original index of the fragment's atom ``k``.
    Components are ordered by their smallest original atom index.
    """
    removed = set(bond_indices)
    for bi in removed:
        if not 0 <= bi < len(mol.bonds):
            raise ChemError(f"bond index {bi} out of range")
    cut_ends: list[int] = []
    for bi in removed:
        cut_ends.extend((mol.bonds[bi].a, mol.bonds[bi].b))

    unvisited = set(range(mol.n_atoms))
    pieces: list[tuple[Fragment, tuple[int, ...]]] = []
    while unvisited:
        start = min(unvisited)
        component = [start]
        unvisited.discard(start)
        stack = [start]
        while stack:
            v = stack.pop()
            for nb, bi in mol.neighbors[v]:
                if bi not in removed and nb in unvisited:
                    unvisited.discard(nb)
                    component.append(nb)
                    stack.append(nb)
        component.sort()
        remap = {old: new for new, old in enumerate(component)}
        atoms = tuple(mol.atoms[i] for i in component)
        bonds = [
            Bond(remap[b.a], remap[b.b], b.order)
            for bi, b in enumerate(mol.bonds)
            if bi not in removed and b.a in remap and b.b in remap
        ]
        markers = [remap[i] for i in mol.attachment_points if i in remap]
        markers.extend(remap[i] for i in cut_ends if i in remap)
        pieces.append(
            (MolGraph.from_parts(atoms, bonds, markers), tuple(component))
        )
    return pieces
