"""Command-line entry point: ``matchflow <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 solver non-convergence,
4 certificate or invariant violation, 64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .equilibrium import (
    EquilibriumOutcome,
    FeasibilityReport,
    check_feasibility,
    random_meeting_equilibrium,
    solve_equilibrium,
)
from .errors import CertificateViolation, MatchflowError, ValidationError
from .experiments import (
    DELTA_GRID,
    Q_GRID,
    check_rows,
    emit_csv,
    emit_plotdata,
    run_delta_sweep,
    run_q_sweep,
)
from .firstbest import solve_first_best
from .hardness import load_instance, reduce
from .market import AssortmentSet, MarketSpec
from .mcsim import SimConfig, replicate, replication_seeds
from .schema import (
    assortment_to_dict,
    dumps,
    load_assortment,
    load_market,
    market_to_dict,
)
from .stardesign import design_search

log = logging.getLogger("matchflow")

EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps(
            {
                "ts": round(record.created, 6),
                "level": record.levelname.lower(),
                "logger": record.name,
                "msg": record.getMessage(),
            }
        )


def _setup_logging(style: str, level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if style == "json":
        handler.setFormatter(_JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


def _digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _manifest(args, inputs: list[str], outputs: list[str], started: float, seeds=None) -> None:
    """Write ``<output>.manifest.json`` beside each output file."""
    entry = {
        "command": args.command,
        "argv": sys.argv[1:],
        "tool_version": __version__,
        "inputs": {p: _digest(p) for p in inputs},
        "seeds": seeds or [],
        "wall_time_s": round(time.perf_counter() - started, 6),
        "outputs": {p: _digest(p) for p in outputs},
    }
    for p in outputs:
        Path(f"{p}.manifest.json").write_text(dumps(entry), encoding="utf-8")


def _by_label(types, values) -> dict:
    return {t.label: float(v) for t, v in zip(types, values)}


def outcome_to_dict(spec: MarketSpec, out: EquilibriumOutcome) -> dict:
    flows = [
        {"man": spec.men[i].label, "woman": spec.women[j].label, "flow": float(out.flows[i, j])}
        for i in range(spec.n_men)
        for j in range(spec.n_women)
        if out.flows[i, j] > 0
    ]
    return {
        "thresholds": {**_by_label(spec.men, out.thr_men), **_by_label(spec.women, out.thr_women)},
        "match_rate": {**_by_label(spec.men, out.xi_men), **_by_label(spec.women, out.xi_women)},
        "mass": {**_by_label(spec.men, out.mass_men), **_by_label(spec.women, out.mass_women)},
        "flows": flows,
        "welfare": float(out.welfare),
        "iterations": int(out.iterations),
        "meta": _plain(out.meta),
    }


def feasibility_to_dict(spec: MarketSpec, rep: FeasibilityReport) -> dict:
    return {
        "ok": bool(rep.ok),
        "worst_violation": float(rep.worst_violation),
        "worst_item": rep.worst_item,
        "capacity_slack": {
            **_by_label(spec.men, rep.capacity_slack_men),
            **_by_label(spec.women, rep.capacity_slack_women),
        },
        "flow_imbalance": [
            {"man": spec.men[i].label, "woman": spec.women[j].label,
             "imbalance": float(rep.flow_imbalance[i, j])}
            for i in range(spec.n_men)
            for j in range(spec.n_women)
            if rep.flow_imbalance[i, j] != 0
        ],
    }


def _plain(obj):
    """Make metadata JSON-safe (numpy scalars, tuples)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def cmd_validate(args) -> int:
    spec = load_market(args.market)
    if args.assortment:
        load_assortment(args.assortment, spec)
    print(f"ok: {spec.n_men} men types, {spec.n_women} women types, delta={spec.delta!r}")
    return 0


def cmd_eq(args, started) -> int:
    spec = load_market(args.market)
    a = load_assortment(args.assortment, spec)
    out = solve_equilibrium(spec, a)
    rep = check_feasibility(spec, a, out)
    doc = {"equilibrium": outcome_to_dict(spec, out), "feasibility": feasibility_to_dict(spec, rep)}
    _write(args.out, dumps(doc))
    if args.out:
        _manifest(args, [args.market, args.assortment], [args.out], started)
    return 0


def cmd_first_best(args, started) -> int:
    spec = load_market(args.market)
    fb = solve_first_best(spec)
    M, W = spec.n_men, spec.n_women
    doc = {
        "objective": fb.objective,
        "beta": [
            {"man": spec.men[i].label, "woman": spec.women[j].label, "beta": float(fb.beta[i, j])}
            for i in range(M) for j in range(W)
        ],
        "rho": [
            {"man": spec.men[i].label, "woman": spec.women[j].label, "rho": float(fb.rho[i, j])}
            for i in range(M) for j in range(W)
        ],
        "forest": [[spec.men[i].label, spec.women[j].label] for i, j in fb.support],
        "pivots": fb.pivots,
    }
    _write(args.out, dumps(doc))
    if args.out:
        _manifest(args, [args.market], [args.out], started)
    return 0


def _star_to_dict(spec: MarketSpec, sol) -> dict:
    st = sol.star
    center_types = spec.men if st.center_side.value == "men" else spec.women
    leaf_types = spec.women if st.center_side.value == "men" else spec.men
    return {
        "center": center_types[st.center].label,
        "leaves": [leaf_types[k].label for k in st.leaves],
        "case": sol.case,
        "gamma": [float(g) for g in sol.gamma],
        "leaf_thresholds": [float(t) for t in sol.leaf_hat],
        "center_threshold": float(sol.center_hat),
        "welfare": float(sol.welfare),
        "fb_welfare": float(sol.fb_welfare),
        "checks": {k: bool(v) for k, v in sol.checks.items()},
    }


def cmd_design(args, started) -> int:
    spec = load_market(args.market)
    d = design_search(spec)
    doc = {
        "assortment": assortment_to_dict(spec, d.assortment),
        "stars": [_star_to_dict(spec, s) for s in d.stars],
        "welfare": float(d.outcome.welfare),
        "fb_objective": float(d.fb_objective),
        "ratio": float(d.ratio),
        "forest_weight": float(d.forest_weight),
        "retained_weight": float(d.retained_weight),
        "equilibrium": outcome_to_dict(spec, d.outcome),
        "feasibility": feasibility_to_dict(spec, d.feasibility),
        "meta": _plain(d.meta),
    }
    _write(args.out, dumps(doc))
    if args.out:
        _manifest(args, [args.market], [args.out], started)
    return 0


def cmd_random(args, started) -> int:
    spec = load_market(args.market)
    a, out = random_meeting_equilibrium(spec)
    rep = check_feasibility(spec, a, out)
    doc = {
        "assortment": assortment_to_dict(spec, a),
        "equilibrium": outcome_to_dict(spec, out),
        "feasibility": feasibility_to_dict(spec, rep),
    }
    _write(args.out, dumps(doc))
    if args.out:
        _manifest(args, [args.market], [args.out], started)
    return 0


def cmd_mc(args, started) -> int:
    spec = load_market(args.market)
    a = load_assortment(args.design, spec)
    out = solve_equilibrium(spec, a)
    config = SimConfig(args.n, args.horizon, args.burn_in, args.seed)
    seeds = [args.seed] if args.reps == 1 else replication_seeds(args.seed, args.reps)
    reports = replicate(spec, a, out, config, seeds, threads=args.threads)
    analytic = {**_by_label(spec.men, out.mass_men), **_by_label(spec.women, out.mass_women)}
    doc = {
        "config": {"n": args.n, "horizon": args.horizon, "burn_in": args.burn_in,
                   "seed": args.seed, "reps": args.reps},
        "analytic": {"mass": analytic, "welfare": float(out.welfare)},
        "replications": [r.to_dict() for r in reports],
    }
    _write(args.out, dumps(doc))
    if args.out:
        _manifest(args, [args.market, args.design], [args.out], started, seeds)
    return 0


def cmd_reduce(args, started) -> int:
    inst = load_instance(args.cnf3lin)
    rm = reduce(inst, args.delta, args.noise)
    _write(args.out, dumps(market_to_dict(rm.spec)))
    if args.out:
        _manifest(args, [args.cnf3lin], [args.out], started)
    return 0


def cmd_exp(args, started) -> int:
    timing = not args.no_timing
    inputs = []
    if args.sweep == "q-sweep":
        if args.market:
            raise ValidationError("--market applies to delta-sweep only")
        values = args.values or list(Q_GRID)
        rows = run_q_sweep(values, args.sigma, args.delta, threads=args.threads, timing=timing)
    else:
        market = load_market(args.market) if args.market else None
        if args.market:
            inputs.append(args.market)
        values = args.values or list(DELTA_GRID)
        rows = run_delta_sweep(values, args.q, market, threads=args.threads, timing=timing)
    emit_csv(rows, args.out)
    outputs = [args.out]
    if args.plotdata:
        emit_plotdata(rows, args.plotdata)
        outputs.append(args.plotdata)
    _manifest(args, inputs, outputs, started)
    problems = check_rows(rows)
    for p in problems:
        log.error("invariant violated: %s", p)
    if problems:
        raise CertificateViolation(f"{len(problems)} experiment invariant(s) failed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="matchflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"matchflow {__version__}")
    p.add_argument("--log", choices=("text", "json"), default="text", help="log line format")
    p.add_argument("--log-level", default="warning",
                   choices=("debug", "info", "warning", "error"))
    p.add_argument("--threads", type=int, default=1, help="worker bound for parallel commands")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="check a market (and optional assortment) file")
    s.add_argument("--market", required=True)
    s.add_argument("--assortment")

    s = sub.add_parser("eq", help="equilibrium of a market under given assortments")
    s.add_argument("--market", required=True)
    s.add_argument("--assortment", required=True)
    s.add_argument("--out")

    s = sub.add_parser("first-best", help="first-best relaxation")
    s.add_argument("--market", required=True)
    s.add_argument("--out")

    s = sub.add_parser("design", help="star-based directed search design")
    s.add_argument("--market", required=True)
    s.add_argument("--out")

    s = sub.add_parser("random", help="random-meeting baseline")
    s.add_argument("--market", required=True)
    s.add_argument("--out")

    s = sub.add_parser("mc", help="Monte Carlo simulation of a design")
    s.add_argument("--market", required=True)
    s.add_argument("--design", required=True, help="design output or assortment file")
    s.add_argument("--n", type=int, default=20_000, help="agents per unit mass")
    s.add_argument("--horizon", type=float, default=200.0)
    s.add_argument("--burn-in", type=float, default=50.0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--out")

    s = sub.add_parser("reduce", help="market from a MAX3LIN2 instance")
    s.add_argument("--cnf3lin", required=True, help="one equation 'i j k b' per line")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--noise", type=float, default=1e-6)
    s.add_argument("--out")

    s = sub.add_parser("exp", help="welfare sweeps")
    s.add_argument("sweep", choices=("q-sweep", "delta-sweep"))
    s.add_argument("--out", required=True)
    s.add_argument("--plotdata")
    s.add_argument("--market", help="base market for delta-sweep")
    s.add_argument("--values", type=float, nargs="+", help="override the parameter grid")
    s.add_argument("--q", type=float, default=0.5, help="interpolation weight for delta-sweep")
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=1.0, help="life-event rate for q-sweep")
    s.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")
    return p


COMMANDS = {
    "eq": cmd_eq,
    "first-best": cmd_first_best,
    "design": cmd_design,
    "random": cmd_random,
    "mc": cmd_mc,
    "reduce": cmd_reduce,
    "exp": cmd_exp,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.log, args.log_level)
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("matchflow: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    started = time.perf_counter()
    try:
        if args.command == "validate":
            return cmd_validate(args)
        return COMMANDS[args.command](args, started)
    except MatchflowError as exc:
        print(f"matchflow: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"matchflow: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
