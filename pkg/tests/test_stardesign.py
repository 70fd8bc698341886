from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchflow.dist import Normal, Uniform, solve_rho
from matchflow.equilibrium import solve_equilibrium
from matchflow.firstbest import first_best_oracle, solve_first_best
from matchflow.market import build_market, gen_gap_example, gen_horizontal, gen_random
from matchflow.stardesign import (
    forest_to_stars,
    idealized_center_threshold,
    idealized_leaf_threshold,
    design_search,
    make_star_market,
    solve_star,
)


def test_single_edge_star():
    stars, kept, total = forest_to_stars([(0, 1, 2.5)], 2)
    assert len(stars) == 1 and kept == total == Fraction(2.5)


def test_path_keeps_heavier_parity_class():
    stars, kept, total = forest_to_stars([(0, 1, 2.0), (1, 2, 3.0)], 3)
    assert kept == 3 and total == 5
    assert [(s.center, s.leaves) for s in stars] == [(1, ((2, 3.0),))]


def test_star_is_kept_whole():
    edges = [(0, k, float(k)) for k in range(1, 6)]
    stars, kept, total = forest_to_stars(edges, 6)
    assert len(stars) == 1 and stars[0].center == 0 and kept == total == 15


def test_cycle_rejected():
    with pytest.raises(ValueError):
        forest_to_stars([(0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0)], 4)


def _random_forest(rng, n):
    # attach each node to a random earlier node, then drop some edges
    edges = []
    for v in range(1, n):
        if rng.random() < 0.8:
            edges.append((int(rng.integers(0, v)), v, float(rng.uniform(0.0, 5.0))))
    return edges


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 30))
def test_retention_and_disjointness(seed, n):
    edges = _random_forest(np.random.default_rng(seed), n)
    stars, kept, total = forest_to_stars(edges, n)
    assert 2 * kept >= total
    assert total == sum(Fraction(w) for _, _, w in edges)
    assert kept == sum(Fraction(w) for s in stars for _, w in s.leaves)
    used = [s.center for s in stars] + [leaf for s in stars for leaf, _ in s.leaves]
    assert len(used) == len(set(used))


@pytest.mark.parametrize("d", [Normal(2.0, 1.0), Uniform(0.0, 1.0)])
@pytest.mark.parametrize("delta", [0.2, 1.0])
def test_saturated_leaf_threshold_is_rho(d, delta):
    rho = solve_rho(d, delta).rho
    alpha = 1.7
    gamma = alpha / (delta + d.survival(rho))
    assert idealized_leaf_threshold(gamma, alpha, d) == pytest.approx(rho, abs=1e-10)
    assert idealized_leaf_threshold(0.0, alpha, d) == 0.0


def test_half_saturated_uniform_leaf():
    d, delta = Uniform(0.0, 1.0), 1.0
    rho = 2 - math.sqrt(3)
    alpha = 1.0
    gamma = 0.5 * alpha / (delta + 1 - rho)
    # t * alpha = gamma (1 - t^2) / 2 has the positive root below
    c = gamma / alpha
    closed = (-1 + math.sqrt(1 + c * c)) / c
    got = idealized_leaf_threshold(gamma, alpha, d)
    assert got == pytest.approx(closed, abs=1e-12)
    assert got < rho


def test_center_threshold_examples():
    d, delta = Normal(1.0, 0.5), 0.5
    rho = solve_rho(d, delta).rho
    gamma = 1.0 / (delta + d.survival(rho))
    assert idealized_center_threshold(1.0, [gamma], [rho], [d]) == pytest.approx(rho, abs=1e-10)
    assert idealized_center_threshold(1.0, [0.0], [rho], [d]) == 0.0
    split = idealized_center_threshold(2.0, [0.3, 0.3], [0.1, 0.1], [d, d])
    merged = idealized_center_threshold(2.0, [0.6], [0.1], [d])
    assert split == pytest.approx(merged, abs=1e-12)


def test_single_leaf_star_reaches_first_best():
    spec = build_market(["m"], ["w"], [1.0], [1.0], 0.5, [[Normal(2.0, 1.0)]])
    fb = solve_first_best(spec)
    stars, _, _ = forest_to_stars([(0, 1, fb.objective / 2)], 2)
    sol = solve_star(make_star_market(spec, fb, stars[0]))
    assert sol.welfare == pytest.approx(sol.fb_welfare, rel=1e-9)
    assert all(sol.checks.values())


def test_single_pair_design_ratio_one():
    spec = build_market(["m"], ["w"], [1.0], [2.0], 0.5, [[Normal(2.0, 1.0)]])
    assert design_search(spec).ratio == pytest.approx(1.0, abs=1e-9)


def test_horizontal_design_pairs_diagonal():
    spec = gen_horizontal(4, 1.0, Normal(8.0, 0.1))
    des = design_search(spec)
    assert des.ratio == pytest.approx(1.0, abs=1e-6)
    off = des.assortment.men - np.diag(np.diag(des.assortment.men))
    assert np.all(off == 0) and np.diag(des.assortment.men) == pytest.approx([1.0] * 4)


def test_gap_example_quarter_guarantee():
    spec = gen_gap_example(0.03)
    des = design_search(spec)
    assert des.outcome.welfare >= 0.25 * des.fb_objective
    assert des.feasibility.ok


@pytest.mark.parametrize("seed", range(60))
def test_random_design_certificate(seed):
    spec = gen_random(30_000 + seed, max_types=3)
    des = design_search(spec)
    assert 0.25 - 1e-9 <= des.ratio <= 1 + 1e-9
    assert des.fb_objective == pytest.approx(
        first_best_oracle(des.first_best.rho, spec.alpha_men, spec.alpha_women),
        abs=1e-6 * max(1.0, des.fb_objective))
    assert des.feasibility.ok and des.meta["best_response_gap"] <= 1e-9
    assert 2 * des.retained_weight >= des.forest_weight
    for sol in des.stars:
        assert all(sol.checks.values()), sol.checks
    # the re-solved equilibrium of the emitted rates agrees with the certified profile
    again = solve_equilibrium(spec, des.assortment)
    assert again.welfare == pytest.approx(des.outcome.welfare, rel=1e-6)
