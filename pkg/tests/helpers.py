"""Shared oracles for the test suite.

The isomorphism check is an independent brute-force implementation kept
deliberately separate from the canonicalizer it validates.
"""

from __future__ import annotations

from itertools import permutations
from typing import Callable, Sequence

import numpy as np

from geam.chem import Atom, Bond, BondOrder, MolGraph
from geam.errors import ChemError

MAX_BRUTE_FORCE_ATOMS = 12


def _atom_key(mol: MolGraph, i: int) -> tuple:
    a = mol.atoms[i]
    return (a.element, a.aromatic, a.implicit_h, mol.marker_counts[i])


def _bond_map(mol: MolGraph) -> dict[tuple[int, int], BondOrder]:
    return {
        (min(b.a, b.b), max(b.a, b.b)): b.order for b in mol.bonds
    }


def isomorphic(a: MolGraph, b: MolGraph) -> bool:
    """Exhaustive isomorphism check on small graphs (<= 12 atoms)."""
    if a.n_atoms > MAX_BRUTE_FORCE_ATOMS or b.n_atoms > MAX_BRUTE_FORCE_ATOMS:
        raise ValueError("brute-force isomorphism is capped at 12 atoms")
    if a.n_atoms != b.n_atoms or len(a.bonds) != len(b.bonds):
        return False
    keys_a = sorted(_atom_key(a, i) for i in range(a.n_atoms))
    keys_b = sorted(_atom_key(b, i) for i in range(b.n_atoms))
    if keys_a != keys_b:
        return False

    bonds_a = _bond_map(a)
    bonds_b = _bond_map(b)
    n = a.n_atoms
    for perm in permutations(range(n)):
        if any(
            _atom_key(a, i) != _atom_key(b, perm[i]) for i in range(n)
        ):
            continue
        mapped = {
            (min(perm[x], perm[y]), max(perm[x], perm[y])): order
            for (x, y), order in bonds_a.items()
        }
        if mapped == bonds_b:
            return True
    return False


def random_molecule(
    rng: np.random.Generator,
    n_atoms: int | None = None,
    n_markers: int = 0,
    ring_chance: float = 0.3,
) -> MolGraph:
    """A random valid aliphatic molecule: a tree plus at most one ring bond."""
    elements = ["C", "C", "C", "C", "N", "O", "S", "F", "Cl"]
    while True:
        n = int(n_atoms if n_atoms is not None else rng.integers(2, 9))
        atoms = [Atom(elements[rng.integers(len(elements))]) for _ in range(n)]
        bonds = [
            Bond(int(rng.integers(i)), i, BondOrder.SINGLE)
            for i in range(1, n)
        ]
        if n >= 4 and rng.random() < ring_chance:
            pairs = {(min(b.a, b.b), max(b.a, b.b)) for b in bonds}
            i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
            if (i, j) not in pairs:
                bonds.append(Bond(i, j, BondOrder.SINGLE))
        markers = rng.integers(0, n, size=n_markers).tolist()
        try:
            return MolGraph.from_parts(atoms, bonds, markers)
        except ChemError:
            continue


def fd_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def assert_valid(mol: MolGraph) -> None:
    """Re-run the construction validators on an existing graph."""
    rebuilt = MolGraph.from_parts(mol.atoms, mol.bonds, mol.attachment_points)
    assert rebuilt.atoms == mol.atoms


def n_circles_exact(
    fps: Sequence, threshold: float, tanimoto: Callable
) -> int:
    """Largest mutually dissimilar subset by exhaustive subset search."""
    n = len(fps)
    if n > 10:
        raise ValueError("exact circles search is capped at 10 items")
    best = 0
    for mask in range(1, 1 << n):
        chosen = [i for i in range(n) if mask >> i & 1]
        ok = all(
            tanimoto(fps[i], fps[j]) < threshold
            for k, i in enumerate(chosen)
            for j in chosen[k + 1:]
        )
        if ok:
            best = max(best, len(chosen))
    return best
