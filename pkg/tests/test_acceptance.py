"""Acceptance criteria, one test each; every tolerance and time budget is pinned."""

from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from matchflow.dist import Normal, Uniform, payoff_rate, solve_rho
from matchflow.equilibrium import (
    assortative_equilibrium,
    check_feasibility,
    random_meeting_equilibrium,
    solve_equilibrium,
)
from matchflow.experiments import check_rows, run_delta_sweep, run_q_sweep
from matchflow.firstbest import first_best_oracle, is_forest, solve_first_best
from matchflow.hardness import (
    assignment_formula,
    assignment_welfare,
    complete_bound,
    random_instance,
    reduce,
    soundness_bound,
)
from matchflow.market import (
    AssortmentSet,
    build_market,
    gen_gap_example,
    gen_horizontal,
    gen_random,
    gen_vertical_example,
)
from matchflow.mcsim import SimConfig, replicate
from matchflow.stardesign import design_search, forest_to_stars


def _best_time(fn, repeats: int = 5) -> float:
    best = math.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _fixture_market():
    spec = build_market(["m"], ["w"], [1.0], [1.0], 1.0, [[Uniform(0.0, 1.0)]])
    return spec, AssortmentSet.symmetric([[1.0]])


def random_assortment(spec, rng):
    """Rates with row totals at most one on each side."""
    lm = rng.dirichlet(np.ones(spec.n_women), spec.n_men) * rng.uniform(0, 1, (spec.n_men, 1))
    lw = rng.dirichlet(np.ones(spec.n_men), spec.n_women) * rng.uniform(0, 1, (spec.n_women, 1))
    return AssortmentSet(lm, lw.T)


def test_criterion_01_rho_closed_form(acceptance):
    worst_err, worst_time, grid_gap = 0.0, 0.0, 0.0
    for delta in (0.1, 1.0, 10.0):
        d = Uniform(0.0, 1.0)
        exact = (1 + delta) - math.sqrt((1 + delta) ** 2 - 1)
        rho = solve_rho(d, delta).rho
        worst_err = max(worst_err, abs(rho - exact))
        # grid-scan oracle: the maximum of the payoff rate over a dense grid
        grid = np.linspace(0.0, 1.0, 200_001)
        scan = max(payoff_rate(d, delta, t) for t in grid)
        grid_gap = max(grid_gap, abs(scan - rho))
        worst_time = max(worst_time, _best_time(lambda: solve_rho(d, delta)))
    ok = worst_err <= 1e-9 and grid_gap <= 1e-9 and worst_time < 1e-3
    acceptance(1, ok, f"max |rho - closed form| {worst_err:.2e} (tol 1e-9), grid gap "
               f"{grid_gap:.2e}, slowest {worst_time * 1e3:.3f} ms (budget 1 ms)")
    assert ok


def test_criterion_02_equilibrium_fixture(acceptance):
    spec, a = _fixture_market()
    out = solve_equilibrium(spec, a)
    r3 = math.sqrt(3.0)
    errs = [
        abs(out.thr_men[0] - (2 - r3)),
        abs(out.thr_women[0] - (2 - r3)),
        abs(out.mass_men[0] - 1 / r3),
        abs(out.mass_women[0] - 1 / r3),
        abs(out.welfare - (4 * r3 - 6) / r3),
    ]
    elapsed = _best_time(lambda: solve_equilibrium(spec, a), 3)
    ok = max(errs) <= 1e-8 and elapsed < 1e-2
    acceptance(2, ok, f"max error {max(errs):.2e} (tol 1e-8), {elapsed * 1e3:.2f} ms (budget 10 ms)")
    assert ok


def test_criterion_03_convergence_bound(acceptance):
    start = time.perf_counter()
    over_bound, disagree, worst_spread = [], [], 0.0
    for s in range(500):
        spec = gen_random(10_000 + s)
        rng = np.random.default_rng(s)
        a = random_assortment(spec, rng)
        bound = 2 * spec.n_types + 2
        out = solve_equilibrium(spec, a, tol=1e-10, max_rounds=10 * bound)
        if out.iterations > bound or out.meta.get("stalled"):
            over_bound.append(s)
        ref = out.thresholds
        scale = 10.0 * max(1.0, float(ref.max()))
        for _ in range(20):
            init = (rng.uniform(0, scale, spec.n_men), rng.uniform(0, scale, spec.n_women))
            other = solve_equilibrium(spec, a, init=init).thresholds
            spread = float(np.max(np.abs(other - ref)))
            worst_spread = max(worst_spread, spread)
            if spread > 1e-8:
                disagree.append(s)
    elapsed = time.perf_counter() - start
    ok = not over_bound and not disagree and elapsed < 30.0
    acceptance(3, ok, f"{len(over_bound)} markets over 2|types|+2 rounds, {len(set(disagree))} "
               f"with init spread > 1e-8 (worst {worst_spread:.2e}), {elapsed:.1f} s (budget 30 s)")
    assert ok


def test_criterion_04_first_best_correctness(acceptance):
    start = time.perf_counter()
    worst_rel, cyclic = 0.0, []
    for s in range(200):
        spec = gen_random(20_000 + s, max_types=3)
        fb = solve_first_best(spec)
        oracle = first_best_oracle(fb.rho, spec.alpha_men, spec.alpha_women)
        rel = abs(fb.objective - oracle) / max(1.0, abs(oracle))
        worst_rel = max(worst_rel, rel)
        if not is_forest(fb.support, spec.n_men, spec.n_women):
            cyclic.append(s)
    elapsed = time.perf_counter() - start
    ok = worst_rel <= 1e-6 and not cyclic and elapsed < 60.0
    acceptance(4, ok, f"worst relative gap to vertex oracle {worst_rel:.2e} (tol 1e-6), "
               f"{len(cyclic)} cyclic supports, {elapsed:.1f} s (budget 60 s)")
    assert ok


def _random_forest(rng, n_nodes):
    edges = []
    for v in range(1, n_nodes):
        if rng.random() < 0.85:
            u = int(rng.integers(0, v))
            edges.append((u, v, float(rng.exponential(1.0))))
    return edges


def test_criterion_05_star_retention(acceptance):
    start = time.perf_counter()
    short, overlapping = [], []
    rng = np.random.default_rng(5)
    for k in range(200):
        n = int(rng.integers(2, 51))
        edges = _random_forest(rng, n)
        stars, retained, total = forest_to_stars(edges, n)
        if total != sum(Fraction(w) for _, _, w in edges) or 2 * retained < total:
            short.append(k)
        nodes = [s.center for s in stars] + [v for s in stars for v, _ in s.leaves]
        if len(nodes) != len(set(nodes)):
            overlapping.append(k)
    elapsed = time.perf_counter() - start
    ok = not short and not overlapping and elapsed < 5.0
    acceptance(5, ok, f"{len(short)} forests retaining < 1/2 (exact), {len(overlapping)} with "
               f"shared vertices, {elapsed:.2f} s (budget 5 s)")
    assert ok


def test_criterion_06_end_to_end_guarantee(acceptance):
    start = time.perf_counter()
    low_ratio, infeasible, weak_star = [], [], []
    worst = math.inf
    for s in range(200):
        spec = gen_random(s)
        d = design_search(spec)
        worst = min(worst, d.ratio)
        if d.outcome.welfare < 0.25 * d.fb_objective - 1e-9:
            low_ratio.append(s)
        if not check_feasibility(spec, d.assortment, d.outcome).ok:
            infeasible.append(s)
        for sol in d.stars:
            # independent re-solve of the emitted star assortment
            resolved = solve_equilibrium(sol.star.as_market(), sol.assortment).welfare
            if resolved < 0.5 * sol.fb_welfare - 1e-9 * max(1.0, sol.fb_welfare):
                weak_star.append(s)
    elapsed = time.perf_counter() - start
    ok = not low_ratio and not infeasible and not weak_star and elapsed < 300.0
    acceptance(6, ok, f"worst ratio {worst:.4f} (floor 0.25 - 1e-9), {len(infeasible)} "
               f"infeasible, {len(weak_star)} stars below 1/2, {elapsed:.1f} s (budget 300 s)")
    assert ok


def test_criterion_07_horizontal_gap(acceptance):
    start = time.perf_counter()
    ratios = {}
    for delta in (1.0, 5.0, 20.0):
        spec = gen_horizontal(4, delta, Normal(8.0, 0.1))
        design = design_search(spec).outcome.welfare
        _, rand = random_meeting_equilibrium(spec)
        ratios[delta] = design / rand.welfare
    elapsed = time.perf_counter() - start
    monotone = ratios[1.0] < ratios[5.0] < ratios[20.0]
    ok = ratios[5.0] >= 2.5 and monotone and elapsed < 10.0
    acceptance(7, ok, "design/random at delta 1, 5, 20: "
               + ", ".join(f"{r:.4f}" for r in ratios.values())
               + f" (need >= 2.5 at 5, increasing), {elapsed:.1f} s (budget 10 s)")
    assert ok


def test_criterion_08_vertical_example(acceptance):
    start = time.perf_counter()
    spec = gen_vertical_example(100.0, 0.01, 0.01)
    design = design_search(spec)
    _, assort = assortative_equilibrium(spec)
    ratio = design.outcome.welfare / assort.welfare
    elapsed = time.perf_counter() - start
    ok = ratio >= 1.8 and elapsed < 10.0
    cases = ",".join(s.case for s in design.stars)
    acceptance(8, ok, f"design {design.outcome.welfare:.4f} / assortative {assort.welfare:.4f} "
               f"= {ratio:.4f} (need >= 1.8; stars {cases}), {elapsed:.1f} s (budget 10 s)")
    assert ok


def test_criterion_09_gap_example(acceptance):
    start = time.perf_counter()
    eps = 0.03
    e = eps / 3
    spec = gen_gap_example(eps)
    fb = solve_first_best(spec)
    design = design_search(spec, fb)
    _, rand = random_meeting_equilibrium(spec)
    elapsed = time.perf_counter() - start
    fb_floor = (4 - e) / (1 + e) - 1e-6
    ok = (
        fb.objective >= fb_floor
        and design.outcome.welfare <= 2.05
        and rand.welfare <= 2.05
        and elapsed < 10.0
    )
    acceptance(9, ok, f"first-best {fb.objective:.6f} (floor {fb_floor:.6f}), design "
               f"{design.outcome.welfare:.6f}, random {rand.welfare:.6f} (cap 2.05), "
               f"{elapsed:.1f} s (budget 10 s)")
    assert ok


def test_criterion_10_monte_carlo_agreement(acceptance):
    start = time.perf_counter()
    spec, a = _fixture_market()
    out = solve_equilibrium(spec, a)
    analytic = out.masses
    cfg = SimConfig(n=20_000, horizon=200.0, burn_in=50.0, seed=0)
    reports = replicate(spec, a, out, cfg, seeds=list(range(10)), threads=4)
    worst_z, worst_rel, asym = 0.0, 0.0, 0
    for r in reports:
        worst_z = max(worst_z, float(np.max(np.abs(r.mass - analytic) / r.mass_stderr)))
        worst_rel = max(worst_rel, float(np.max(np.abs(r.mass / analytic - 1))))
        asym += r.matched_exits_men != r.matched_exits_women
    elapsed = time.perf_counter() - start
    ok = worst_z <= 3.0 and worst_rel <= 0.02 and asym == 0 and elapsed < 120.0
    acceptance(10, ok, f"worst |z| {worst_z:.2f} (<= 3), worst relative error {worst_rel:.4f} "
               f"(<= 0.02), {asym} runs with unequal matched exits, {elapsed:.1f} s (budget 120 s)")
    assert ok


def test_criterion_11_reduction_bounds(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    mismatches, checked = 0, 0
    for _ in range(20):
        n = int(rng.integers(3, 7))
        m = int(rng.integers(max(1, math.ceil(n / 3)), 9))
        inst = random_instance(rng, n, m)
        delta = float(rng.choice([0.01, 0.05, 0.1, 1.0]))
        rm = reduce(inst, delta)
        for x in itertools.product((0, 1), repeat=n):
            design = assignment_welfare(rm, x)
            checked += 1
            if design.welfare != assignment_formula(inst, delta, design.satisfied):
                mismatches += 1
    limit_ratio = complete_bound(1, 0, 0) / soundness_bound(1, 0, 0)
    ratio_err = abs(float(limit_ratio) - 24 / 23)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and ratio_err <= 1e-12 and elapsed < 30.0
    acceptance(11, ok, f"{mismatches}/{checked} assignments differ from the closed formula "
               f"(exact), complete/sound {float(limit_ratio):.15f} vs 24/23 (err {ratio_err:.1e}), "
               f"{elapsed:.1f} s (budget 30 s)")
    assert ok


def test_criterion_12_experiment_sweeps(acceptance):
    start = time.perf_counter()
    q_rows = run_q_sweep()
    d_rows = run_delta_sweep()
    elapsed = time.perf_counter() - start
    problems = check_rows(q_rows) + check_rows(d_rows)
    q0 = next(r for r in q_rows if r.param == 0.0)
    by_delta = {r.param: r for r in d_rows}
    gap_hi = by_delta[10.0].norm_design - by_delta[10.0].norm_random
    gap_lo = by_delta[0.01].norm_design - by_delta[0.01].norm_random
    ok = (
        not problems
        and all(r.norm_design >= 0.25 for r in q_rows + d_rows)
        and all(max(r.norm_design, r.norm_random) <= 1 + 1e-9 for r in q_rows + d_rows)
        and q0.norm_random < q0.norm_design - 0.2
        and gap_hi > gap_lo
        and elapsed < 600.0
    )
    acceptance(12, ok, f"{len(problems)} row invariant failures; q=0 design {q0.norm_design:.4f} "
               f"vs random {q0.norm_random:.4f}; gap at delta 10 {gap_hi:.4f} vs 0.01 "
               f"{gap_lo:.4f}; {elapsed:.1f} s (budget 600 s)")
    assert ok
