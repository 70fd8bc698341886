from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from matchflow.dist import PointMass, Uniform
from matchflow.equilibrium import (
    check_feasibility,
    solve_equilibrium,
    solve_flow_equilibrium,
)
from matchflow.errors import InfeasibleFlows
from matchflow.firstbest import (
    first_best_oracle,
    first_best_to_flows,
    is_forest,
    solve_first_best,
    solve_transport,
)
from matchflow.market import build_market, gen_random


def _objective(rho, am, aw):
    beta, _ = solve_transport(rho, am, aw)
    return 2.0 * float(np.sum(rho * beta)), beta


def _linprog(rho, am, aw):
    M, W = rho.shape
    A = []
    for i in range(M):
        row = np.zeros(M * W)
        row[i * W:(i + 1) * W] = 1
        A.append(row)
    for j in range(W):
        row = np.zeros(M * W)
        row[j::W] = 1
        A.append(row)
    res = linprog(-rho.reshape(-1), A_ub=np.array(A), b_ub=np.r_[am, aw], bounds=(0, None),
                  method="highs")
    return -2.0 * res.fun


def test_two_by_two_diagonal():
    rho = np.array([[2.0, 1.0], [1.0, 2.0]])
    obj, beta = _objective(rho, [1, 1], [1, 1])
    assert obj == pytest.approx(8.0)
    assert beta == pytest.approx(np.eye(2))
    assert first_best_oracle(rho, [1, 1], [1, 1]) == pytest.approx(8.0)


def test_star_knapsack():
    obj, beta = _objective(np.array([[3.0, 1.0]]), [2.0], [1.5, 1.0])
    assert beta[0] == pytest.approx([1.5, 0.5])
    assert obj == pytest.approx(10.0)


def test_trivial_cases():
    assert _objective(np.zeros((2, 3)), [1, 1], [1, 1, 1])[0] == 0.0
    assert first_best_oracle(np.zeros((2, 2)), [1, 1], [1, 1]) == 0.0
    assert first_best_oracle(np.array([[1.5]]), [2.0], [0.7]) == pytest.approx(2 * 0.7 * 1.5)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 3))
def test_matches_oracles(seed, M, W):
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0, 5, (M, W)) * (rng.random((M, W)) < 0.8)
    am, aw = rng.uniform(0.1, 3, M), rng.uniform(0.1, 3, W)
    obj, beta = _objective(rho, am, aw)
    scale = max(1.0, obj)
    assert obj == pytest.approx(first_best_oracle(rho, am, aw), abs=1e-6 * scale)
    assert obj == pytest.approx(_linprog(rho, am, aw), abs=1e-6 * scale)
    assert np.all(beta.sum(axis=1) <= am + 1e-9) and np.all(beta.sum(axis=0) <= aw + 1e-9)
    support = [(int(i), int(j)) for i, j in zip(*np.nonzero(beta > 1e-14))]
    assert is_forest(support, M, W)


@pytest.mark.parametrize("seed", range(40))
def test_ties_keep_acyclic_support(seed):
    rng = np.random.default_rng(seed)
    M, W = 4, 5
    rho = rng.integers(0, 3, (M, W)).astype(float)
    am, aw = rng.integers(1, 3, M).astype(float), rng.integers(1, 3, W).astype(float)
    obj, beta = _objective(rho, am, aw)
    assert obj == pytest.approx(_linprog(rho, am, aw), abs=1e-9)
    support = [(int(i), int(j)) for i, j in zip(*np.nonzero(beta > 1e-14))]
    assert is_forest(support, M, W)


def test_is_forest_detects_cycle():
    assert is_forest([(0, 0), (0, 1), (1, 1)], 2, 2)
    assert not is_forest([(0, 0), (0, 1), (1, 1), (1, 0)], 2, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 5), st.floats(1.0, 3.0))
def test_monotone_in_arrivals(seed, which, k):
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0, 5, (3, 3))
    am, aw = rng.uniform(0.1, 3, 3), rng.uniform(0.1, 3, 3)
    base = _objective(rho, am, aw)[0]
    am2, aw2 = am.copy(), aw.copy()
    (am2 if which < 3 else aw2)[which % 3] *= k
    assert _objective(rho, am2, aw2)[0] >= base - 1e-9 * max(1, base)


@pytest.mark.parametrize("seed", range(30))
def test_relaxation_dominance(seed):
    spec = gen_random(seed, max_types=3)
    fb = solve_first_best(spec)
    rng = np.random.default_rng(seed)
    # a feasible design from random prescribed flows, shrunk until sustainable
    flows = rng.uniform(0, 1, (spec.n_men, spec.n_women)) * min(spec.alpha_men + spec.alpha_women)
    for _ in range(60):
        try:
            a = solve_flow_equilibrium(spec, flows).assortment
            break
        except InfeasibleFlows:
            flows = 0.5 * flows
    out = solve_equilibrium(spec, a)
    assert check_feasibility(spec, a, out).ok
    assert out.welfare <= fb.objective + 1e-6 * max(1.0, fb.objective)


def test_flows_examples():
    spec = build_market(["m"], ["w"], [1.0], [1.0], 0.25, [[PointMass(5.0)]])
    fb = solve_first_best(spec)
    gamma, thr = first_best_to_flows(spec, fb)
    assert thr[0, 0] == pytest.approx(4.0, abs=1e-5)
    assert gamma[0, 0] == pytest.approx(0.8, abs=1e-9)
    spec = build_market(["m"], ["w"], [1.0], [1.0], 1.0, [[Uniform(0.0, 1.0)]])
    gamma, _ = first_best_to_flows(spec, solve_first_best(spec))
    assert gamma[0, 0] == pytest.approx(1 / math.sqrt(3), abs=1e-10)


def test_deterministic():
    spec = gen_random(77)
    a, b = solve_first_best(spec), solve_first_best(spec)
    assert np.array_equal(a.beta, b.beta) and a.support == b.support
