"""Property oracles with budgets, caching, and composite scoring.

An oracle wraps one or more named property components. Each component maps
a molecule to a raw value plus a normalized value in [0, 1]; the oracle's
overall score is the product of the normalized values. Every unique molecule
(by canonical form) is charged against the budget exactly once; repeat
evaluations are served from the cache for free.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from geam.chem import (
    BondOrder,
    MolGraph,
    canonical_smiles,
    core_canonical_smiles,
    parse_smiles,
)
from geam.errors import BudgetExceeded, OracleFailure, PropertyRangeError
from geam.fragment import decompose


def normalize_unit(raw: float) -> float:
    """Clip an already unit-scaled value into [0, 1]."""
    return min(1.0, max(0.0, raw))


def normalize_ds(raw: float) -> float:
    """Map a binding-style score (more negative is better) into [0, 1]."""
    return -min(0.0, max(-20.0, raw)) / 20.0 + 0.0


def normalize_sa(raw: float) -> float:
    """Map a 1 (easy) .. 10 (hard) accessibility score into [0, 1]."""
    return (10.0 - min(10.0, max(1.0, raw))) / 9.0


@dataclass(frozen=True)
class OracleComponent:
    name: str
    fn: Callable[[MolGraph], float]
    normalize: Callable[[float], float]
    # Direction of the raw scale: True when larger raw values are better.
    maximize: bool = True


@dataclass(frozen=True)
class OracleResult:
    smiles: str
    y: float
    components: tuple[tuple[str, float, float], ...]  # (name, raw, normalized)
    charged: bool

    def component(self, name: str) -> tuple[float, float]:
        for n, raw, value in self.components:
            if n == name:
                return raw, value
        raise KeyError(name)


class PropertyOracle:
    """Thread-safe budgeted oracle over a list of components."""

    def __init__(
        self,
        components: Sequence[OracleComponent],
        budget: int | None = None,
    ):
        if not components:
            raise OracleFailure("an oracle needs at least one component")
        self.components = tuple(components)
        self.budget = budget
        self._cache: dict[str, OracleResult] = {}
        self._lock = threading.Lock()
        self._requests = 0

    @property
    def primary(self) -> OracleComponent:
        return self.components[0]

    @property
    def charged(self) -> int:
        with self._lock:
            return len(self._cache)

    @property
    def requests(self) -> int:
        with self._lock:
            return self._requests

    def evaluate(self, mol: MolGraph | str) -> OracleResult:
        graph = parse_smiles(mol) if isinstance(mol, str) else mol
        key = canonical_smiles(graph)
        with self._lock:
            self._requests += 1
            hit = self._cache.get(key)
            if hit is not None:
                return replace(hit, charged=False)
            if self.budget is not None and len(self._cache) >= self.budget:
                raise BudgetExceeded(
                    f"oracle budget of {self.budget} unique molecules exhausted"
                )
            parts = []
            y = 1.0
            for comp in self.components:
                raw = float(comp.fn(graph))
                if not math.isfinite(raw):
                    raise OracleFailure(f"component {comp.name} returned {raw}")
                value = float(comp.normalize(raw))
                if not 0.0 <= value <= 1.0:
                    raise PropertyRangeError(
                        f"normalized {comp.name} out of [0, 1]: {value}"
                    )
                parts.append((comp.name, raw, value))
                y *= value
            result = OracleResult(key, y, tuple(parts), charged=True)
            self._cache[key] = result
            return result


def surrogate_sa(mol: MolGraph) -> float:
    """Accessibility stand-in on the 1 (easy) .. 10 (hard) scale.

    Monotone penalties for size beyond a drug-like core, ring count,
    branching, heteroatom load, and high-order bonds.
    """
    size_pen = 0.08 * max(0, mol.n_atoms - 12)
    ring_pen = 0.35 * len(mol.rings)
    branch_pen = 0.25 * sum(1 for i in range(mol.n_atoms) if mol.degree(i) >= 3)
    hetero_pen = 0.15 * sum(1 for a in mol.atoms if a.element not in ("C",))
    order_pen = 0.20 * sum(1 for b in mol.bonds if int(b.order) == 3)
    raw = 1.0 + size_pen + ring_pen + branch_pen + hetero_pen + order_pen
    return min(10.0, raw)


def planted_motif_component(
    motif: str,
    base: float = 0.1,
    bonus: float = 0.8,
    noise_sigma: float = 0.0,
    seed: int = 0,
    name: str = "motif",
    count_cap: int = 1,
) -> OracleComponent:
    """Component rewarding molecules whose decomposition contains a motif.

    The motif is matched on marker-stripped canonical form, so substitution
    positions on the motif do not matter. The raw value is
    base + bonus * min(count, count_cap) / count_cap (+ optional Gaussian
    noise), clamped to [0, 1]; with the default cap of 1 the motif simply
    either occurs or does not.
    """
    if count_cap < 1:
        raise PropertyRangeError(f"count_cap must be >= 1, got {count_cap}")
    target = core_canonical_smiles(parse_smiles(motif))
    rng = np.random.default_rng(seed)

    def fn(graph: MolGraph) -> float:
        decomp = decompose(graph)
        count = sum(
            1
            for frag in decomp.fragments
            if core_canonical_smiles(frag) == target
        )
        raw = base + bonus * min(count, count_cap) / count_cap
        if noise_sigma > 0.0:
            raw += float(rng.normal(0.0, noise_sigma))
        return min(1.0, max(0.0, raw))

    return OracleComponent(name=name, fn=fn, normalize=normalize_unit)


def alkene_component(
    base: float = 0.1,
    bonus: float = 0.8,
    name: str = "alkene",
) -> OracleComponent:
    """Component rewarding a non-aromatic double bond anywhere in the graph.

    Block datasets and single-bond assembly never produce one, so this value
    can only be raised by bond-order edits (or by assembling fragments that
    were extracted from such edits).
    """

    def fn(graph: MolGraph) -> float:
        present = any(b.order == BondOrder.DOUBLE for b in graph.bonds)
        return base + (bonus if present else 0.0)

    return OracleComponent(name=name, fn=fn, normalize=normalize_unit)


def leanness_component(
    soft_atoms: int = 40,
    hard_atoms: int = 80,
    floor: float = 0.1,
    name: str = "lean",
) -> OracleComponent:
    """Component rewarding compact molecules, like a molecular-weight window.

    Full credit up to ``soft_atoms``, then a linear slide that bottoms out at
    ``floor`` once the molecule reaches ``hard_atoms``.
    """
    if not 0 < soft_atoms < hard_atoms:
        raise PropertyRangeError(
            f"need 0 < soft_atoms < hard_atoms, got {soft_atoms}, {hard_atoms}"
        )
    if not 0.0 <= floor <= 1.0:
        raise PropertyRangeError(f"floor out of [0, 1]: {floor}")
    span = float(hard_atoms - soft_atoms)

    def fn(graph: MolGraph) -> float:
        return float(graph.n_atoms)

    def normalize(raw: float) -> float:
        slide = 1.0 - (raw - soft_atoms) / span * (1.0 - floor)
        return min(1.0, max(floor, slide))

    return OracleComponent(
        name=name, fn=fn, normalize=normalize, maximize=False
    )


def sa_component(name: str = "sa") -> OracleComponent:
    return OracleComponent(
        name=name, fn=surrogate_sa, normalize=normalize_sa, maximize=False
    )


def motif_sa_oracle(
    motif: str,
    budget: int | None = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> PropertyOracle:
    """Motif reward multiplied by the accessibility term."""
    return PropertyOracle(
        [planted_motif_component(motif, noise_sigma=noise_sigma, seed=seed),
         sa_component()],
        budget=budget,
    )


def motif_oracle(
    motif: str,
    budget: int | None = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> PropertyOracle:
    """Pure motif reward, useful when exact 0/1-style labels are wanted."""
    return PropertyOracle(
        [planted_motif_component(motif, noise_sigma=noise_sigma, seed=seed)],
        budget=budget,
    )
