"""Failure-probability bound for uniform fragment sampling, with a checker.

With a vocabulary of |S| fragments, sequences of T picks, and phi optimal
sequences out of K = |S|^T, the chance that N independent uniform rollouts
all miss the optimal set is bounded by 1 / (1 + N ln(K / (K - phi))); it is
exactly 0 when every sequence is optimal and 1 when none is. The checker
measures the empirical failure frequency of a genuinely uniform sampler over
many batches and compares it against the bound plus Monte-Carlo slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

from geam.errors import ConfigError, EnumerationTooLarge

MAX_ENUMERATION = 100_000


def prop1_bound(s_size: int, t: int, phi: int, n_rollouts: int) -> float:
    """Upper bound on the probability that all rollouts miss an optimum."""
    if s_size < 1 or t < 1 or n_rollouts < 1:
        raise ConfigError("s_size, t, and n_rollouts must be positive")
    k = s_size**t
    if not 0 <= phi <= k:
        raise ConfigError(f"phi must lie in [0, {k}], got {phi}")
    if phi == k:
        return 0.0
    if phi == 0:
        return 1.0
    return 1.0 / (1.0 + n_rollouts * math.log(k / (k - phi)))


def exact_failure_probability(s_size: int, t: int, phi: int, n_rollouts: int) -> float:
    k = s_size**t
    return (1.0 - phi / k) ** n_rollouts


@dataclass(frozen=True)
class CellReport:
    s_size: int
    t: int
    phi: int
    n_rollouts: int
    batches: int
    bound: float
    empirical: float
    exact: float
    sigma: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} |S|={self.s_size} T={self.t} phi={self.phi} "
            f"N={self.n_rollouts}: empirical={self.empirical:.6f} "
            f"bound={self.bound:.6f} exact={self.exact:.6f} "
            f"sigma={self.sigma:.6f}"
        )


def count_optimal(
    s_size: int, t: int, optimal: Callable[[tuple[int, ...]], bool]
) -> int:
    """Exhaustively count optimal pick-sequences; guards the enumeration size."""
    k = s_size**t
    if k > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"|S|^T = {k} exceeds {MAX_ENUMERATION}")
    return sum(1 for seq in product(range(s_size), repeat=t) if optimal(seq))


def check_prop1(
    s_size: int,
    t: int,
    phi: int | Callable[[tuple[int, ...]], bool],
    n_rollouts: int,
    batches: int = 10_000,
    rng: np.random.Generator | None = None,
    slack_sigmas: float = 3.0,
) -> CellReport:
    """Empirical failure frequency of a uniform sampler vs the bound.

    A batch fails when none of its ``n_rollouts`` uniform sequences is
    optimal. With phi == K the bound is exactly 0 and the empirical rate
    must be exactly 0; otherwise the empirical rate must not exceed
    bound + slack, where slack is ``slack_sigmas`` binomial standard errors
    of the exact failure probability.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    k = s_size**t
    if k > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"|S|^T = {k} exceeds {MAX_ENUMERATION}")
    if callable(phi):
        phi_count = count_optimal(s_size, t, phi)
    else:
        phi_count = int(phi)
    if not 0 <= phi_count <= k:
        raise ConfigError(f"phi must lie in [0, {k}], got {phi_count}")

    bound = prop1_bound(s_size, t, phi_count, n_rollouts)
    exact = exact_failure_probability(s_size, t, phi_count, n_rollouts)
    # A uniform choice of T fragment picks is a uniform choice among the
    # K = |S|^T sequences; by symmetry the first phi indices stand in for
    # any particular optimal set.
    draws = rng.integers(0, k, size=(batches, n_rollouts))
    failures = np.all(draws >= phi_count, axis=1)
    empirical = float(failures.mean())
    sigma = math.sqrt(exact * (1.0 - exact) / batches)

    if phi_count == k:
        passed = empirical == 0.0
    else:
        passed = empirical <= bound + slack_sigmas * sigma
    return CellReport(
        s_size=s_size,
        t=t,
        phi=phi_count,
        n_rollouts=n_rollouts,
        batches=batches,
        bound=bound,
        empirical=empirical,
        exact=exact,
        sigma=sigma,
        passed=passed,
    )


def run_prop1_grid(
    sizes: Sequence[int] = (2, 3, 4),
    ts: Sequence[int] = (1, 2, 3),
    ns: Sequence[int] = (1, 10, 100),
    batches: int = 10_000,
    seed: int = 0,
) -> list[CellReport]:
    """Full grid over |S|, T, N with phi in {0, 1, K//2, K} per cell."""
    rng = np.random.default_rng(seed)
    reports = []
    for s_size in sizes:
        for t in ts:
            k = s_size**t
            phis = sorted({0, 1, k // 2, k})
            for n_rollouts in ns:
                for phi in phis:
                    reports.append(
                        check_prop1(
                            s_size, t, phi, n_rollouts, batches=batches, rng=rng
                        )
                    )
    return reports
