"""Welfare sweeps comparing the first-best, the designed search and random meeting."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Sequence

from .equilibrium import random_meeting_equilibrium
from .firstbest import solve_first_best
from .market import MarketSpec, gen_interpolated
from .stardesign import design_search

Q_GRID = tuple(round(0.1 * k, 10) for k in range(11))
DELTA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
HEADER = ("param", "welfare_fb", "welfare_design", "welfare_random", "norm_design",
          "norm_random", "runtime_ms")
SLACK = 1e-9


@dataclass
class ExperimentRow:
    param: float
    welfare_fb: float
    welfare_design: float
    welfare_random: float
    norm_design: float
    norm_random: float
    runtime_ms: float


def evaluate(spec: MarketSpec, param: float, timing: bool = True) -> ExperimentRow:
    start = time.perf_counter()
    fb = solve_first_best(spec)
    design = design_search(spec, fb)
    _, rand = random_meeting_equilibrium(spec)
    elapsed = (time.perf_counter() - start) * 1e3 if timing else 0.0
    w_fb = fb.objective
    if w_fb > 0:
        nd, nr = design.outcome.welfare / w_fb, rand.welfare / w_fb
    else:
        nd = nr = 1.0
    return ExperimentRow(float(param), w_fb, design.outcome.welfare, rand.welfare, nd, nr,
                         elapsed)


def _with_delta(spec: MarketSpec, delta: float) -> MarketSpec:
    return MarketSpec(spec.men, spec.women, spec.alpha_men, spec.alpha_women, float(delta),
                      spec.dists)


def _q_job(args):
    q, sigma, delta, timing = args
    return evaluate(gen_interpolated(q, sigma, delta), q, timing)


def _delta_job(args):
    spec, delta, timing = args
    return evaluate(_with_delta(spec, delta), delta, timing)


def _map(fn, jobs, threads: int):
    if threads <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def run_q_sweep(
    q_values: Sequence[float] = Q_GRID,
    sigma: float = 0.1,
    delta: float = 1.0,
    threads: int = 1,
    timing: bool = True,
) -> list[ExperimentRow]:
    qs = sorted(q_values)
    return _map(_q_job, [(q, sigma, delta, timing) for q in qs], threads)


def run_delta_sweep(
    delta_values: Sequence[float] = DELTA_GRID,
    q: float = 0.5,
    market: MarketSpec | None = None,
    threads: int = 1,
    timing: bool = True,
) -> list[ExperimentRow]:
    """Sweep the life-event rate over the interpolated market (or ``market``)."""
    base = market if market is not None else gen_interpolated(q)
    ds = sorted(delta_values)
    return _map(_delta_job, [(base, d, timing) for d in ds], threads)


def check_rows(rows: Sequence[ExperimentRow]) -> list[str]:
    """Invariant violations, one message each; empty when every row is sound."""
    problems = []
    for r in rows:
        values = astuple(r)
        if not all(math.isfinite(v) for v in values):
            problems.append(f"param {r.param}: non-finite value")
            continue
        if r.norm_design < 0.25 - SLACK:
            problems.append(f"param {r.param}: norm_design {r.norm_design} below 0.25")
        for name in ("norm_design", "norm_random"):
            v = getattr(r, name)
            if not -SLACK <= v <= 1.0 + SLACK:
                problems.append(f"param {r.param}: {name} {v} outside [0, 1]")
        scale = SLACK * max(1.0, r.welfare_fb)
        if r.welfare_design > r.welfare_fb + scale or r.welfare_random > r.welfare_fb + scale:
            problems.append(f"param {r.param}: welfare exceeds the first-best")
    params = [r.param for r in rows]
    if params != sorted(params):
        problems.append("param column is not monotone")
    return problems


def emit_csv(rows: Sequence[ExperimentRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([repr(float(v)) for v in astuple(r)])


def read_csv(path: str | Path) -> list[ExperimentRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HEADER:
            raise ValueError(f"unexpected header {header}")
        return [ExperimentRow(*(float(v) for v in line)) for line in reader]


def emit_plotdata(rows: Sequence[ExperimentRow], path: str | Path) -> None:
    """One blank-line separated block per series, each with (param, value) columns."""
    names = [f.name for f in fields(ExperimentRow)][1:]
    with open(path, "w", encoding="utf-8") as fh:
        for k, name in enumerate(names):
            if k:
                fh.write("\n\n")
            fh.write(f"# {name}\n")
            for r in rows:
                fh.write(f"{r.param!r} {getattr(r, name)!r}\n")
