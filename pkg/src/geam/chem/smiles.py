"""Parsing and writing of a SMILES subset.

Supported: the elements C N O F P S Cl Br, lowercase aromatic c n o s, ring
closure digits 1-9, branches, the bond symbols ``-`` ``=`` ``#`` and the
attachment wildcard ``*``. Charges, isotopes, stereo descriptors, bracket
atoms and multi-component strings are rejected as unsupported rather than
silently misread.

A bond written without a symbol between two aromatic atoms is aromatic when
it lies on a ring and single otherwise, so biphenyl-style links parse without
an explicit ``-``; the writer always emits ``-`` there to keep round-trips
exact.
"""

from __future__ import annotations

from dataclasses import dataclass

from geam.errors import SmilesSyntaxError, UnsupportedFeature
from geam.chem.graph import Atom, Bond, BondOrder, MolGraph

_TWO_CHAR = ("Cl", "Br")
_PLAIN = {"C", "N", "O", "F", "P", "S"}
_AROMATIC = {"c", "n", "o", "s"}
_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE}
# Constructs that are legal SMILES but outside this subset.
_KNOWN_UNSUPPORTED = set("[]%@/\\.:+bpIHieB")

_MARKER = "*"


@dataclass
class _Edge:
    a: int
    b: int
    order: BondOrder | None  # None = written without a symbol


def parse_smiles(text: str) -> MolGraph:
    """Parse SMILES text into a validated molecular graph.

    ``*`` tokens become attachment points on their (single) neighbor, so
    fragment strings such as ``c1(*)c(*)ccc(*)c1`` parse directly.
    """
    if not text or not text.strip():
        raise SmilesSyntaxError("empty SMILES string")
    text = text.strip()

    elements: list[str] = []      # "*" entries are marker pseudo-atoms
    aromatic: list[bool] = []
    edges: list[_Edge] = []
    ring_open: dict[str, tuple[int, BondOrder | None, int]] = {}
    branch_stack: list[int] = []
    prev = -1
    pending: BondOrder | None = None
    pending_pos = -1

    def add_atom(element: str, is_aromatic: bool, pos: int) -> None:
        nonlocal prev, pending
        if prev < 0 and pending is not None:
            raise SmilesSyntaxError("bond symbol before any atom", pending_pos)
        elements.append(element)
        aromatic.append(is_aromatic)
        idx = len(elements) - 1
        if prev >= 0:
            edges.append(_Edge(prev, idx, pending))
        prev = idx
        pending = None

    i = 0
    while i < len(text):
        ch = text[i]
        if text[i : i + 2] in _TWO_CHAR:
            add_atom(text[i : i + 2], False, i)
            i += 2
            continue
        if ch in _PLAIN:
            add_atom(ch, False, i)
        elif ch in _AROMATIC:
            add_atom(ch.upper(), True, i)
        elif ch == _MARKER:
            add_atom(_MARKER, False, i)
        elif ch in _BOND_SYMBOLS:
            if pending is not None:
                raise SmilesSyntaxError("two bond symbols in a row", i)
            pending = _BOND_SYMBOLS[ch]
            pending_pos = i
        elif ch.isdigit():
            if ch == "0":
                raise SmilesSyntaxError("ring closure digit must be 1-9", i)
            if prev < 0:
                raise SmilesSyntaxError("ring closure before any atom", i)
            if ch in ring_open:
                opener, open_order, _pos = ring_open.pop(ch)
                order = _merge_ring_orders(open_order, pending, i)
                if opener == prev:
                    raise SmilesSyntaxError("ring closure bonds atom to itself", i)
                edges.append(_Edge(opener, prev, order))
            else:
                ring_open[ch] = (prev, pending, i)
            pending = None
        elif ch == "(":
            if prev < 0:
                raise SmilesSyntaxError("branch before any atom", i)
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before branch open", i)
            branch_stack.append(prev)
        elif ch == ")":
            if not branch_stack:
                raise SmilesSyntaxError("unmatched ')'", i)
            if pending is not None:
                raise SmilesSyntaxError("dangling bond symbol before ')'", i)
            prev = branch_stack.pop()
        elif ch in _KNOWN_UNSUPPORTED:
            raise UnsupportedFeature(
                f"SMILES feature {ch!r} is outside the supported subset"
            )
        elif ch.isspace():
            raise SmilesSyntaxError("whitespace inside SMILES", i)
        else:
            raise SmilesSyntaxError(f"unrecognized character {ch!r}", i)
        i += 1

    if pending is not None:
        raise SmilesSyntaxError("trailing bond symbol", pending_pos)
    if branch_stack:
        raise SmilesSyntaxError("unclosed branch")
    if ring_open:
        digit, (_, _, pos) = next(iter(ring_open.items()))
        raise SmilesSyntaxError(f"unclosed ring closure {digit}", pos)

    return _assemble(elements, aromatic, edges)


def _merge_ring_orders(
    a: BondOrder | None, b: BondOrder | None, pos: int
) -> BondOrder | None:
    if a is not None and b is not None and a is not b:
        raise SmilesSyntaxError("conflicting bond orders on ring closure", pos)
    return a if a is not None else b


def _assemble(
    elements: list[str], aromatic: list[bool], edges: list[_Edge]
) -> MolGraph:
    seen_pairs: set[tuple[int, int]] = set()
    for e in edges:
        pair = (min(e.a, e.b), max(e.a, e.b))
        if pair in seen_pairs:
            raise SmilesSyntaxError(f"duplicate bond between atoms {e.a} and {e.b}")
        seen_pairs.add(pair)

    ring_edges = _cyclic_edges(len(elements), edges)

    # Marker pseudo-atoms: exactly one plain single bond each.
    marker_ids = {i for i, el in enumerate(elements) if el == _MARKER}
    marker_neighbor: dict[int, int] = {}
    for ei, e in enumerate(edges):
        for m, other in ((e.a, e.b), (e.b, e.a)):
            if m not in marker_ids:
                continue
            if e.order not in (None, BondOrder.SINGLE):
                raise UnsupportedFeature(
                    "attachment markers join by single bonds only"
                )
            if other in marker_ids:
                raise SmilesSyntaxError("attachment marker bonded to another marker")
            if m in marker_neighbor:
                raise SmilesSyntaxError("attachment marker must have exactly one bond")
            marker_neighbor[m] = other
    for m in marker_ids:
        if m not in marker_neighbor:
            raise SmilesSyntaxError("attachment marker has no neighbor atom")

    remap: dict[int, int] = {}
    atoms: list[Atom] = []
    for i, el in enumerate(elements):
        if i in marker_ids:
            continue
        remap[i] = len(atoms)
        atoms.append(Atom(el, aromatic[i]))
    if not atoms:
        raise SmilesSyntaxError("no atoms in SMILES")

    bonds: list[Bond] = []
    for ei, e in enumerate(edges):
        if e.a in marker_ids or e.b in marker_ids:
            continue
        order = e.order
        if order is None:
            both_aromatic = aromatic[e.a] and aromatic[e.b]
            order = (
                BondOrder.AROMATIC
                if both_aromatic and ei in ring_edges
                else BondOrder.SINGLE
            )
        bonds.append(Bond(remap[e.a], remap[e.b], order))

    markers = [remap[nb] for _, nb in sorted(marker_neighbor.items())]
    return MolGraph.from_parts(atoms, bonds, markers)


def _cyclic_edges(n: int, edges: list[_Edge]) -> set[int]:
    """Indices of edges lying on a cycle (non-bridges), iterative Tarjan."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for ei, e in enumerate(edges):
        adj[e.a].append((e.b, ei))
        adj[e.b].append((e.a, ei))
    visited = [False] * n
    disc = [0] * n
    low = [0] * n
    bridges: set[int] = set()
    counter = 0
    for root in range(n):
        if visited[root]:
            continue
        visited[root] = True
        disc[root] = low[root] = counter
        counter += 1
        stack: list[list[int]] = [[root, -1, 0]]
        while stack:
            v, in_edge, ptr = stack[-1]
            if ptr < len(adj[v]):
                stack[-1][2] += 1
                nb, ei = adj[v][ptr]
                if ei == in_edge:
                    continue
                if visited[nb]:
                    low[v] = min(low[v], disc[nb])
                else:
                    visited[nb] = True
                    disc[nb] = low[nb] = counter
                    counter += 1
                    stack.append([nb, ei, 0])
            else:
                stack.pop()
                if in_edge >= 0:
                    e = edges[in_edge]
                    u = e.a if e.b == v else e.b
                    low[u] = min(low[u], low[v])
                    if low[v] > disc[u]:
                        bridges.add(in_edge)
    return {ei for ei in range(len(edges)) if ei not in bridges}


# -- writing ------------------------------------------------------------------


def write_smiles(mol: MolGraph) -> str:
    """Serialize a graph starting from atom 0, visiting neighbors in index
    order; attachment points render as ``*`` branches.

    Output is deterministic for a fixed atom order, so serializing a
    canonically relabeled graph yields the canonical text.
    """
    n = mol.n_atoms
    visited = [False] * n
    tree_parent = [-1] * n
    parent_bond: list[Bond | None] = [None] * n
    children: list[list[int]] = [[] for _ in range(n)]
    back_edges: list[int] = []
    order: list[int] = []

    # Recursive DFS via explicit stack; neighbors in ascending index order.
    stack: list[list[int]] = [[0, 0]]
    visited[0] = True
    order.append(0)
    seen_back: set[int] = set()
    while stack:
        v, ptr = stack[-1]
        nbrs = sorted(mol.neighbors[v])
        if ptr < len(nbrs):
            stack[-1][1] += 1
            nb, bi = nbrs[ptr]
            if not visited[nb]:
                visited[nb] = True
                tree_parent[nb] = v
                parent_bond[nb] = mol.bonds[bi]
                children[v].append(nb)
                order.append(nb)
                stack.append([nb, 0])
            elif nb != tree_parent[v] and bi not in seen_back:
                seen_back.add(bi)
                back_edges.append(bi)
        else:
            stack.pop()

    pos = {v: k for k, v in enumerate(order)}
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for bi in back_edges:
        bond = mol.bonds[bi]
        first, second = sorted((bond.a, bond.b), key=pos.__getitem__)
        opens.setdefault(first, []).append(bi)
        closes.setdefault(second, []).append(bi)

    digit_of: dict[int, int] = {}
    free = list(range(1, 10))
    ring_text: dict[int, list[str]] = {v: [] for v in range(n)}
    for v in order:
        for bi in sorted(closes.get(v, []), key=lambda b: digit_of[b]):
            digit = digit_of.pop(bi)
            bond = mol.bonds[bi]
            ring_text[v].append(_bond_text(mol, bond) + str(digit))
            free.append(digit)
            free.sort()
        for bi in sorted(opens.get(v, []), key=lambda b: pos[_far_end(mol, b, v)]):
            if not free:
                raise UnsupportedFeature("more than 9 simultaneous ring closures")
            digit = free.pop(0)
            digit_of[bi] = digit
            bond = mol.bonds[bi]
            ring_text[v].append(_bond_text(mol, bond) + str(digit))

    out: list[str] = []

    def emit(v: int) -> None:
        atom = mol.atoms[v]
        out.append(atom.element.lower() if atom.aromatic else atom.element)
        out.extend(ring_text[v])
        kids: list[int | None] = [None] * mol.marker_counts[v] + list(children[v])
        for k, child in enumerate(kids):
            last = k == len(kids) - 1
            if child is None:
                out.append("*" if last else "(*)")
            elif last:
                out.append(_bond_text(mol, parent_bond[child]))
                emit(child)
            else:
                out.append("(" + _bond_text(mol, parent_bond[child]))
                emit(child)
                out.append(")")

    emit(0)
    return "".join(out)


def _far_end(mol: MolGraph, bond_idx: int, v: int) -> int:
    bond = mol.bonds[bond_idx]
    return bond.other(v)


def _bond_text(mol: MolGraph, bond: Bond | None) -> str:
    if bond is None:
        return ""
    if bond.order is BondOrder.SINGLE:
        both = mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic
        return "-" if both else ""
    if bond.order is BondOrder.DOUBLE:
        return "="
    if bond.order is BondOrder.TRIPLE:
        return "#"
    return ""  # aromatic bond, implicit between aromatic atoms


def read_smiles_file(path: str) -> list[str]:
    """Newline-delimited SMILES; blank lines and ``#`` comments are skipped."""
    entries: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(line.split()[0])
    return entries


def write_smiles_file(path: str, smiles: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in smiles:
            fh.write(s + "\n")
