"""Directed-search design with a welfare certificate against the first-best.

Pipeline: first-best forest -> vertex-disjoint stars keeping at least half
the forest weight -> per-star flows with incentives (each star keeps at least
half of its own first-best) -> global assortments and their equilibrium.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .dist import UtilityDist
from .equilibrium import (
    AUDIT_TOL,
    EquilibriumOutcome,
    FeasibilityReport,
    _flow_root,
    best_response_gap,
    outcome_from_profile,
    check_feasibility,
    solve_equilibrium,
    solve_flow_equilibrium,
)
from .errors import CertificateViolation
from .firstbest import FirstBestSolution, solve_first_best
from .market import AssortmentSet, MarketSpec, Side, build_market

log = logging.getLogger(__name__)

GUARANTEE = 0.25
CERT_TOL = 1e-9


@dataclass(frozen=True)
class Star:
    """A star in node-id space: the center and its (leaf, weight) edges."""

    center: int
    leaves: tuple[tuple[int, float], ...]

    @property
    def weight(self) -> float:
        return sum(w for _, w in self.leaves)


def forest_to_stars(
    edges: Iterable[tuple[int, int, float]], n_nodes: int
) -> tuple[list[Star], Fraction, Fraction]:
    """Split a weighted forest into vertex-disjoint stars.

    Each tree is rooted at its lowest node id. Edges are grouped by the depth
    parity of their upper endpoint; the heavier group (ties go to even) is kept,
    and every kept edge hangs from its upper endpoint, the star center.
    Returns ``(stars, retained, total)`` with exact weight sums.
    """
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n_nodes)]
    for u, v, w in edges:
        adj[u].append((v, w))
        adj[v].append((u, w))
    seen = [False] * n_nodes
    stars: list[Star] = []
    retained = Fraction(0)
    total = Fraction(0)
    for root in range(n_nodes):
        if seen[root] or not adj[root]:
            continue
        seen[root] = True
        depth = {root: 0}
        children: dict[int, list[tuple[int, float]]] = {}
        order = [root]
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y, w in sorted(adj[x]):
                if y in depth:
                    if depth[y] != depth[x] - 1:
                        raise ValueError("input graph has a cycle")
                    continue
                depth[y] = depth[x] + 1
                seen[y] = True
                children.setdefault(x, []).append((y, w))
                order.append(y)
                queue.append(y)
        sums = [Fraction(0), Fraction(0)]
        for x, kids in children.items():
            for _, w in kids:
                sums[depth[x] % 2] += Fraction(w)
        keep = 0 if sums[0] >= sums[1] else 1
        total += sums[0] + sums[1]
        retained += sums[keep]
        for x in order:
            if x in children and depth[x] % 2 == keep:
                stars.append(Star(x, tuple(children[x])))
    return stars, retained, total


@dataclass
class StarMarket:
    """One star as a standalone market: a single center facing its leaves.

    ``leaves`` hold original type indices on the opposite side of the center,
    sorted by payoff rate (descending, ties by index).
    """

    center_side: Side
    center: int
    alpha_center: float
    leaves: list[int]
    alpha_leaves: list[float]
    dists: list[UtilityDist]
    rho: list[float]
    delta: float

    @property
    def n(self) -> int:
        return len(self.leaves)

    def as_market(self) -> MarketSpec:
        return build_market(
            ["c"],
            [f"l{k}" for k in range(self.n)],
            [self.alpha_center],
            self.alpha_leaves,
            self.delta,
            [self.dists],
        )

    def knapsack(self) -> list[float]:
        """First-best of the star: fill leaves greedily in payoff-rate order."""
        left = self.alpha_center
        beta = []
        for a in self.alpha_leaves:
            b = min(a, left)
            beta.append(b)
            left -= b
        return beta


def make_star_market(spec: MarketSpec, fb: FirstBestSolution, star: Star) -> StarMarket:
    M = spec.n_men
    if star.center < M:
        side, c = Side.MEN, star.center
        leaves = [leaf - M for leaf, _ in star.leaves]
        pairs = [(c, j) for j in leaves]
        alpha_c = spec.alpha_men[c]
        alpha_l = [spec.alpha_women[j] for j in leaves]
    else:
        side, c = Side.WOMEN, star.center - M
        leaves = [leaf for leaf, _ in star.leaves]
        pairs = [(i, c) for i in leaves]
        alpha_c = spec.alpha_women[c]
        alpha_l = [spec.alpha_men[i] for i in leaves]
    rows = [
        (float(fb.rho[i, j]), leaf, a, spec.dists[i][j])
        for (i, j), leaf, a in zip(pairs, leaves, alpha_l)
        if fb.rho[i, j] > 0.0
    ]
    rows.sort(key=lambda r: (-r[0], r[1]))
    return StarMarket(
        side,
        c,
        alpha_c,
        [r[1] for r in rows],
        [r[2] for r in rows],
        [r[3] for r in rows],
        [r[0] for r in rows],
        spec.delta,
    )


def idealized_leaf_threshold(gamma: float, alpha_leaf: float, d: UtilityDist) -> float:
    """Fixed point of ``t = (gamma / alpha_leaf) * T(t)``."""
    return _flow_root(alpha_leaf, [gamma], [0.0], [d])


def idealized_center_threshold(
    alpha_center: float,
    gammas: Sequence[float],
    leaf_thresholds: Sequence[float],
    dists: Sequence[UtilityDist],
) -> float:
    """Fixed point of ``t = (1/alpha_center) * sum gamma_i * T_i(max(t, leaf_i))``."""
    return _flow_root(alpha_center, gammas, leaf_thresholds, dists)


def _gammas(star: StarMarket, beta: Sequence[float]) -> list[float]:
    return [
        b / (star.delta + d.survival(r)) if b > 0 else 0.0
        for b, d, r in zip(beta, star.dists, star.rho)
    ]


@dataclass
class StarSolution:
    star: StarMarket
    case: str
    beta_fb: list[float]
    gamma: list[float]
    leaf_hat: list[float]
    center_hat: float
    fb_welfare: float
    welfare: float
    assortment: AssortmentSet
    outcome: EquilibriumOutcome
    checks: dict = field(default_factory=dict)


def solve_star(star: StarMarket) -> StarSolution:
    beta = star.knapsack()
    n = sum(1 for b in beta if b > 0)
    fb_welfare = 2.0 * sum(r * b for r, b in zip(star.rho, beta))
    sub = star.as_market()
    if n == 0:
        a = AssortmentSet.zeros(sub)
        out = solve_equilibrium(sub, a)
        return StarSolution(star, "empty", beta, [0.0] * star.n, [0.0] * star.n, 0.0, 0.0,
                            0.0, a, out)
    gamma = _gammas(star, beta)
    leaf_hat = [
        idealized_leaf_threshold(g, a, d) for g, a, d in zip(gamma, star.alpha_leaves, star.dists)
    ]
    center_hat = idealized_center_threshold(star.alpha_center, gamma, leaf_hat, star.dists)
    last = n - 1
    if center_hat > star.rho[last]:
        case = "case1"
        emit = gamma
    else:
        head = sum(star.rho[k] * beta[k] for k in range(last))
        tail = star.rho[last] * beta[last]
        if head >= tail:
            case = "case2a"
            emit = [g if k < last else 0.0 for k, g in enumerate(gamma)]
        else:
            case = "case2b"
            single = [0.0] * star.n
            single[last] = min(star.alpha_center, star.alpha_leaves[last])
            emit = _gammas(star, single)
    flows = np.array([emit])
    feq = solve_flow_equilibrium(sub, flows)
    a = feq.assortment
    out = solve_equilibrium(sub, a)
    sol = StarSolution(star, case, beta, list(emit), leaf_hat, center_hat, fb_welfare,
                       out.welfare, a, out)
    sol.checks = _star_checks(sol)
    return sol


def _star_checks(sol: StarSolution) -> dict:
    """Threshold orderings that hold in the emitted star equilibrium."""
    star, out = sol.star, sol.outcome
    tol = 1e-7 * max(1.0, max(star.rho, default=0.0))
    emitted_hat = [
        idealized_leaf_threshold(g, a, d)
        for g, a, d in zip(sol.gamma, star.alpha_leaves, star.dists)
    ]
    upper = all(
        out.thr_women[k] <= emitted_hat[k] + tol for k in range(star.n) if sol.gamma[k] > 0
    )
    lower = all(
        max(out.thr_men[0], out.thr_women[k]) >= emitted_hat[k] - tol
        for k in range(star.n)
        if sol.gamma[k] > 0
    )
    half = sol.welfare >= 0.5 * sol.fb_welfare - CERT_TOL * max(1.0, sol.fb_welfare)
    return {"leaf_upper": upper, "leaf_lower": lower, "half_of_star_fb": half}


@dataclass
class DesignedSolution:
    assortment: AssortmentSet
    outcome: EquilibriumOutcome
    first_best: FirstBestSolution
    fb_objective: float
    ratio: float
    stars: list[StarSolution]
    feasibility: FeasibilityReport
    forest_weight: Fraction
    retained_weight: Fraction
    flows: np.ndarray
    meta: dict = field(default_factory=dict)


def design_search(spec: MarketSpec, fb: FirstBestSolution | None = None) -> DesignedSolution:
    if fb is None:
        fb = solve_first_best(spec)
    M, W = spec.n_men, spec.n_women
    weighted = [(i, M + j, w) for (i, j), w in fb.weights().items()]
    raw_stars, retained, total = forest_to_stars(weighted, M + W)
    solutions = [solve_star(make_star_market(spec, fb, s)) for s in raw_stars]
    flows = np.zeros((M, W))
    for sol in solutions:
        st = sol.star
        for leaf, g in zip(st.leaves, sol.gamma):
            if st.center_side is Side.MEN:
                flows[st.center, leaf] = g
            else:
                flows[leaf, st.center] = g
    feq = solve_flow_equilibrium(spec, flows)
    a = feq.assortment
    # the flow-space profile balances flows exactly; certify it is an
    # equilibrium of the emitted rates rather than trusting a re-solve, which
    # can lose digits when a threshold sits inside a narrow point-mass band
    out = outcome_from_profile(spec, a, feq.thr_men, feq.thr_women)
    gap = best_response_gap(spec, a, feq.thr_men, feq.thr_women)
    resolved = solve_equilibrium(spec, a)
    report = check_feasibility(spec, a, out)
    meta = {"best_response_gap": gap, "resolved_welfare": resolved.welfare}
    if gap > CERT_TOL:
        raise CertificateViolation(
            f"emitted thresholds are not an equilibrium (best-response gap {gap:.3g})"
        )
    if fb.objective > 0:
        ratio = out.welfare / fb.objective
    else:
        ratio = 1.0
    if ratio > 1.0 + CERT_TOL:
        log.warning("design welfare exceeds the first-best by ratio %.12g; clamping", ratio)
        meta["unclamped_ratio"] = ratio
        ratio = 1.0 + CERT_TOL
    if not report.ok:
        raise CertificateViolation(
            f"designed equilibrium is infeasible: {report.worst_item} "
            f"violated by {report.worst_violation:.3g}"
        )
    if ratio < GUARANTEE - CERT_TOL:
        raise CertificateViolation(
            f"design achieves only {ratio:.6g} of the first-best (guarantee {GUARANTEE})"
        )
    return DesignedSolution(a, out, fb, fb.objective, ratio, solutions, report, total,
                            retained, flows, meta)
