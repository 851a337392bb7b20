"""Rule-based fragment decomposition.

A molecule is decomposed by simultaneously cutting every acyclic single bond
whose endpoints match one of a small table of environment rules (aromatic to
aliphatic carbon, amine and amide C-N, ether C-O, ring to non-ring). Every
cut endpoint keeps one attachment marker, so joining the fragments back along
the recorded cut list reconstructs the molecule exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from geam.chem.canon import canonical_smiles
from geam.chem.graph import Bond, BondOrder, Fragment, MolGraph, cut_bonds
from geam.errors import PropertyRangeError


@dataclass(frozen=True)
class EnvPattern:
    """Predicate on one bond endpoint; ``None`` fields match anything.

    ``carbonyl`` tests for a double-bonded oxygen neighbor, which separates
    amide carbons from amine-context carbons.
    """

    element: str | None = None
    aromatic: bool | None = None
    in_ring: bool | None = None
    min_degree: int | None = None
    carbonyl: bool | None = None

    def matches(self, mol: MolGraph, idx: int) -> bool:
        atom = mol.atoms[idx]
        if self.element is not None and atom.element != self.element:
            return False
        if self.aromatic is not None and atom.aromatic != self.aromatic:
            return False
        if self.in_ring is not None and mol.ring_atom_flags[idx] != self.in_ring:
            return False
        if self.min_degree is not None and mol.degree(idx) < self.min_degree:
            return False
        if self.carbonyl is not None and _has_carbonyl(mol, idx) != self.carbonyl:
            return False
        return True


def _has_carbonyl(mol: MolGraph, idx: int) -> bool:
    for nb, bi in mol.neighbors[idx]:
        bond = mol.bonds[bi]
        if bond.order is BondOrder.DOUBLE and mol.atoms[nb].element == "O":
            return True
    return False


@dataclass(frozen=True)
class CleavageRule:
    rule_id: str
    left: EnvPattern
    right: EnvPattern

    def matches(self, mol: MolGraph, bond: Bond) -> bool:
        """True when either orientation of the bond fits the rule."""
        return (
            self.left.matches(mol, bond.a) and self.right.matches(mol, bond.b)
        ) or (
            self.left.matches(mol, bond.b) and self.right.matches(mol, bond.a)
        )


DEFAULT_RULES: tuple[CleavageRule, ...] = (
    CleavageRule(
        "aromatic-aliphatic-carbon",
        EnvPattern(element="C", aromatic=True),
        EnvPattern(element="C", aromatic=False),
    ),
    CleavageRule(
        "amine-carbon-nitrogen",
        EnvPattern(element="C", carbonyl=False),
        EnvPattern(element="N", aromatic=False, in_ring=False),
    ),
    CleavageRule(
        "amide-carbon-nitrogen",
        EnvPattern(element="C", carbonyl=True),
        EnvPattern(element="N", aromatic=False),
    ),
    CleavageRule(
        "ether-carbon-oxygen",
        EnvPattern(element="C"),
        EnvPattern(element="O", aromatic=False, in_ring=False, min_degree=2),
    ),
    CleavageRule(
        "ring-to-chain",
        EnvPattern(in_ring=True),
        EnvPattern(in_ring=False),
    ),
)


@dataclass(frozen=True)
class CutBond:
    """One cleaved bond: (fragment, atom) on each side, in fragment indexing."""

    frag_a: int
    atom_a: int
    frag_b: int
    atom_b: int
    rule_id: str


@dataclass(frozen=True)
class Decomposition:
    fragments: tuple[Fragment, ...]
    atom_indices: tuple[tuple[int, ...], ...]  # original index of each atom
    cuts: tuple[CutBond, ...]

    @property
    def n_fragments(self) -> int:
        return len(self.fragments)


def matching_bonds(
    mol: MolGraph, rules: Sequence[CleavageRule] = DEFAULT_RULES
) -> list[tuple[int, str]]:
    """(bond index, rule id) for every cleavable bond.

    Only acyclic single bonds are eligible; the first matching rule in table
    order names the cut.
    """
    hits: list[tuple[int, str]] = []
    for bi, bond in enumerate(mol.bonds):
        if bond.order is not BondOrder.SINGLE or mol.ring_bond_flags[bi]:
            continue
        for rule in rules:
            if rule.matches(mol, bond):
                hits.append((bi, rule.rule_id))
                break
    return hits


def decompose(
    mol: MolGraph, rules: Sequence[CleavageRule] = DEFAULT_RULES
) -> Decomposition:
    """Cut every rule-matching bond at once and collect the pieces.

    The fragments partition the molecule's atoms; a molecule matching no
    rule comes back as a single fragment with zero cuts.
    """
    hits = matching_bonds(mol, rules)
    pieces = cut_bonds(mol, [bi for bi, _ in hits])
    old_to_piece: dict[int, tuple[int, int]] = {}
    for pi, (_frag, old_ids) in enumerate(pieces):
        for new, old in enumerate(old_ids):
            old_to_piece[old] = (pi, new)
    cuts = []
    for bi, rule_id in hits:
        bond = mol.bonds[bi]
        fa, aa = old_to_piece[bond.a]
        fb, ab = old_to_piece[bond.b]
        cuts.append(CutBond(fa, aa, fb, ab, rule_id))
    return Decomposition(
        fragments=tuple(frag for frag, _ in pieces),
        atom_indices=tuple(old_ids for _, old_ids in pieces),
        cuts=tuple(cuts),
    )


def reassemble(decomp: Decomposition) -> MolGraph:
    """Join the fragments back along the recorded cuts (test oracle aid)."""
    if not decomp.cuts:
        return decomp.fragments[0]
    # Work on one growing graph; track where each fragment's atoms ended up.
    placed: dict[int, int] = {0: 0}  # fragment -> atom offset in current graph
    current = decomp.fragments[0]
    pending = list(decomp.cuts)
    while pending:
        progressed = False
        for cut in list(pending):
            a_in = cut.frag_a in placed
            b_in = cut.frag_b in placed
            if a_in and b_in:
                # Both halves already merged: close the bond directly.
                site_a = placed[cut.frag_a] + cut.atom_a
                site_b = placed[cut.frag_b] + cut.atom_b
                markers = list(current.attachment_points)
                markers.remove(site_a)
                markers.remove(site_b)
                bonds = current.bonds + (Bond(site_a, site_b, BondOrder.SINGLE),)
                current = MolGraph.from_parts(current.atoms, bonds, markers)
            elif a_in or b_in:
                if a_in:
                    base_site = placed[cut.frag_a] + cut.atom_a
                    frag_idx, frag_site = cut.frag_b, cut.atom_b
                else:
                    base_site = placed[cut.frag_b] + cut.atom_b
                    frag_idx, frag_site = cut.frag_a, cut.atom_a
                frag = decomp.fragments[frag_idx]
                offset = current.n_atoms
                markers = list(current.attachment_points)
                markers.remove(base_site)
                markers.extend(i + offset for i in frag.attachment_points)
                markers.remove(frag_site + offset)
                bonds = list(current.bonds)
                bonds.extend(
                    Bond(b.a + offset, b.b + offset, b.order) for b in frag.bonds
                )
                bonds.append(Bond(base_site, frag_site + offset, BondOrder.SINGLE))
                current = MolGraph.from_parts(
                    current.atoms + frag.atoms, bonds, markers
                )
                placed[frag_idx] = offset
            else:
                continue
            pending.remove(cut)
            progressed = True
        if not progressed:
            raise AssertionError("disconnected cut list")
    return current


# -- candidate extraction ------------------------------------------------------


@dataclass(frozen=True)
class SupportEntry:
    """One dataset occurrence of a fragment: the molecule, its decomposition,
    the property label and the fragment's positions inside the decomposition."""

    graph: MolGraph
    decomposition: Decomposition
    y: float
    positions: tuple[int, ...]


@dataclass(frozen=True)
class FragmentCandidate:
    fragment: Fragment
    canonical: str
    support: tuple[SupportEntry, ...] = field(repr=False)

    @property
    def support_size(self) -> int:
        return len(self.support)


def extract_candidates(
    dataset: Sequence[tuple[MolGraph, float]],
    rules: Sequence[CleavageRule] = DEFAULT_RULES,
) -> list[FragmentCandidate]:
    """Decompose every dataset entry and pool fragments by canonical form.

    One support entry is recorded per dataset entry containing the fragment,
    so duplicated molecules contribute multiplicity. Candidates come back in
    first-seen order.
    """
    order: list[str] = []
    frags: dict[str, Fragment] = {}
    supports: dict[str, list[SupportEntry]] = {}
    for graph, y in dataset:
        if not 0.0 <= y <= 1.0:
            raise PropertyRangeError(f"label {y!r} outside [0, 1]")
        decomp = decompose(graph, rules)
        positions: dict[str, list[int]] = {}
        for fi, frag in enumerate(decomp.fragments):
            positions.setdefault(canonical_smiles(frag), []).append(fi)
        for key, pos in positions.items():
            if key not in frags:
                frags[key] = decomp.fragments[pos[0]]
                supports[key] = []
                order.append(key)
            supports[key].append(
                SupportEntry(graph, decomp, y, tuple(pos))
            )
    return [
        FragmentCandidate(frags[key], key, tuple(supports[key])) for key in order
    ]


# -- rule table IO -------------------------------------------------------------


def rules_to_json(rules: Sequence[CleavageRule]) -> str:
    payload = [
        {
            "id": r.rule_id,
            "left": _env_dict(r.left),
            "right": _env_dict(r.right),
        }
        for r in rules
    ]
    return json.dumps(payload, indent=2)


def rules_from_json(text: str) -> tuple[CleavageRule, ...]:
    payload = json.loads(text)
    return tuple(
        CleavageRule(
            entry["id"],
            EnvPattern(**entry.get("left", {})),
            EnvPattern(**entry.get("right", {})),
        )
        for entry in payload
    )


def _env_dict(env: EnvPattern) -> dict:
    fields = ("element", "aromatic", "in_ring", "min_degree", "carbonyl")
    return {f: getattr(env, f) for f in fields if getattr(env, f) is not None}
