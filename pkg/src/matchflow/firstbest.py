"""First-best relaxation: a capacitated transportation LP over pair payoff rates.

maximise   2 * sum rho[i, j] * beta[i, j]
subject to sum_j beta[i, j] <= alpha_men[i],  sum_i beta[i, j] <= alpha_women[j],  beta >= 0

Solved by a primal network simplex on the balanced form with one slack node
per side. The basis is a spanning tree, so the optimal support is a forest.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dist import RHO_TOL, solve_rho
from .market import MarketSpec

log = logging.getLogger(__name__)

RC_TOL = 1e-12


@dataclass
class FirstBestSolution:
    beta: np.ndarray
    rho: np.ndarray
    objective: float
    support: list[tuple[int, int]]
    pivots: int = 0

    def weights(self) -> dict[tuple[int, int], float]:
        return {(i, j): float(self.rho[i, j] * self.beta[i, j]) for i, j in self.support}


def rho_matrix(spec: MarketSpec) -> np.ndarray:
    return np.array(
        [[solve_rho(d, spec.delta).rho for d in row] for row in spec.dists], dtype=float
    )


def solve_transport(
    rho: np.ndarray, alpha_men, alpha_women
) -> tuple[np.ndarray, int]:
    """Network simplex for the capacitated transportation LP. Returns (beta, pivots)."""
    rho = np.asarray(rho, dtype=float)
    am = np.asarray(alpha_men, dtype=float)
    aw = np.asarray(alpha_women, dtype=float)
    M, W = rho.shape
    # rows 0..M-1 real men, row M slack; cols 0..W-1 real women, col W slack
    edges: list[tuple[int, int, float]] = []
    for i in range(M):
        for j in range(W):
            if rho[i, j] > RHO_TOL:
                edges.append((i, j, -rho[i, j]))
    n_real = len(edges)
    for i in range(M):
        edges.append((i, W, 0.0))
    for j in range(W):
        edges.append((M, j, 0.0))
    edges.append((M, W, 0.0))
    flow = np.zeros(len(edges))
    basic = set(range(n_real, len(edges)))
    for i in range(M):
        flow[n_real + i] = am[i]
    for j in range(W):
        flow[n_real + M + j] = aw[j]
    scale = max(1.0, float(np.max(np.abs(rho), initial=0.0)))
    n_row, n_col = M + 1, W + 1

    def tree_adj() -> list[list[tuple[int, int]]]:
        # nodes: rows 0..n_row-1, cols n_row..n_row+n_col-1
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n_row + n_col)]
        for k in basic:
            r, c, _ = edges[k]
            adj[r].append((n_row + c, k))
            adj[n_row + c].append((r, k))
        return adj

    pivots = 0
    while True:
        adj = tree_adj()
        # potentials u_r + v_c = cost on basic edges, u[slack row] = 0
        pot = [None] * (n_row + n_col)
        pot[M] = 0.0
        queue = deque([M])
        while queue:
            x = queue.popleft()
            for y, k in adj[x]:
                if pot[y] is None:
                    pot[y] = edges[k][2] - pot[x]
                    queue.append(y)
        entering = None
        for k in range(len(edges)):
            if k in basic:
                continue
            r, c, cost = edges[k]
            if cost - pot[r] - pot[n_row + c] < -RC_TOL * scale:
                entering = k
                break
        if entering is None:
            break
        r0, c0, _ = edges[entering]
        # path in the tree from column c0 back to row r0
        start, goal = n_row + c0, r0
        prev: dict[int, tuple[int, int]] = {start: (-1, -1)}
        queue = deque([start])
        while queue and goal not in prev:
            x = queue.popleft()
            for y, k in adj[x]:
                if y not in prev:
                    prev[y] = (x, k)
                    queue.append(y)
        path = []
        x = goal
        while x != start:
            x, k = prev[x]
            path.append(k)
        path.reverse()
        # cycle: entering edge gains, path edges alternate lose, gain, lose ...
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[k] for k in minus)
        leaving = min(k for k in minus if flow[k] <= theta)
        for k in minus:
            flow[k] -= theta
        for k in plus:
            flow[k] += theta
        flow[entering] += theta
        flow[leaving] = 0.0
        basic.remove(leaving)
        basic.add(entering)
        pivots += 1
    beta = np.zeros((M, W))
    for k in range(n_real):
        r, c, _ = edges[k]
        beta[r, c] = max(flow[k], 0.0)
    return beta, pivots


def solve_first_best(spec: MarketSpec, rho: np.ndarray | None = None) -> FirstBestSolution:
    if rho is None:
        rho = rho_matrix(spec)
    beta, pivots = solve_transport(rho, spec.alpha_men, spec.alpha_women)
    tiny = 1e-14 * max(1.0, max(spec.alpha_men), max(spec.alpha_women))
    beta[beta <= tiny] = 0.0
    support = [(int(i), int(j)) for i, j in zip(*np.nonzero(beta))]
    objective = float(2.0 * np.sum(rho * beta))
    return FirstBestSolution(beta, rho, objective, support, pivots)


def first_best_to_flows(spec: MarketSpec, fb: FirstBestSolution) -> tuple[np.ndarray, np.ndarray]:
    """Pair flows and pairwise thresholds realising the first-best."""
    M, W = spec.n_men, spec.n_women
    gamma = np.zeros((M, W))
    for i, j in fb.support:
        gamma[i, j] = fb.beta[i, j] / (spec.delta + spec.dists[i][j].survival(fb.rho[i, j]))
    return gamma, fb.rho.copy()


def first_best_oracle(rho: np.ndarray, alpha_men, alpha_women) -> float:
    """Brute-force LP optimum by enumerating every vertex of the polytope.

    Exponential; meant for markets with at most three types per side.
    """
    rho = np.asarray(rho, dtype=float)
    M, W = rho.shape
    n = M * W
    if n > 9:
        raise ValueError("vertex enumeration is limited to 3x3 markets")
    rows = []
    rhs = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = -1.0
        rows.append(e)
        rhs.append(0.0)
    for i in range(M):
        e = np.zeros(n)
        e[i * W : (i + 1) * W] = 1.0
        rows.append(e)
        rhs.append(float(alpha_men[i]))
    for j in range(W):
        e = np.zeros(n)
        e[j::W] = 1.0
        rows.append(e)
        rhs.append(float(alpha_women[j]))
    A = np.array(rows)
    b = np.array(rhs)
    c = rho.reshape(-1)
    best = 0.0
    for active in itertools.combinations(range(len(rows)), n):
        sub = A[list(active)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(active)])
        if np.all(A @ x <= b + 1e-9):
            best = max(best, 2.0 * float(c @ x))
    return best


def is_forest(edges, n_men: int, n_women: int) -> bool:
    parent = list(range(n_men + n_women))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        a, b = find(i), find(n_men + j)
        if a == b:
            return False
        parent[a] = b
    return True
