"""Stationary equilibrium for a fixed assortment design.

Thresholds are found by synchronous best-response iteration from the
all-zero profile. Each best response is the unique fixed point of the
multi-stream payoff rate. Writing ``h(t) = sum rate*T(max(t, f)) - t*(delta +
sum rate*S(max(t, f)))``, ``h`` is convex and decreasing with slope
``-(delta + sum rate*S)``, so a Newton step from below is exactly
``t <- B(t)`` and climbs monotonically to the root.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .dist import UtilityDist, bisect_decreasing
from .errors import InfeasibleFlows, IterationLimit, NonConvergence
from .market import AssortmentSet, MarketSpec

log = logging.getLogger(__name__)

BR_TOL = 1e-10
AUDIT_TOL = 1e-9
NEWTON_TOL = 1e-14
NEWTON_MAX = 100
STALL_TOL = 1e-7
STALL_WINDOW = 4
RM_TOL = 1e-12
RM_MAX_ITER = 10_000
MIN_DAMPING = 2.0**-40
RM_ITER_BEFORE_SWEEPS = 300
RM_MAX_SWEEPS = 200
MAX_BISECT_RM = 200
BR_AUDIT_TOL = 1e-9


def _stream_root(
    rates: Sequence[float],
    floors: Sequence[float],
    dists: Sequence[UtilityDist],
    delta: float,
    start: float = 0.0,
) -> float:
    # t <- B(t) is a Newton step on the convex decreasing num - t * den, so
    # it converges from any start; warm starts save most evaluations
    live = [(r, max(f, 0.0), d) for r, f, d in zip(rates, floors, dists) if r > 0.0]
    if not live:
        return 0.0
    t = max(float(start), 0.0)
    for _ in range(NEWTON_MAX):
        num = 0.0
        den = delta
        for r, f, d in live:
            u = t if t > f else f
            num += r * d.tail_expectation(u)
            den += r * d.survival(u)
        nxt = num / den
        if nxt <= 0.0:
            if t == 0.0:
                return 0.0
            t = 0.0
            continue
        if abs(nxt - t) <= NEWTON_TOL * max(1.0, nxt):
            return nxt
        t = nxt
    log.debug("newton stalled; falling back to bisection")

    def h(x: float) -> float:
        num = 0.0
        den = delta
        for r, f, d in live:
            u = x if x > f else f
            num += r * d.tail_expectation(u)
            den += r * d.survival(u)
        return num - x * den

    top = sum(r * d.tail_expectation(f) for r, f, d in live)
    root, _ = bisect_decreasing(h, 0.0, max(top, 0.0) / delta + 1.0)
    return root


def best_response_threshold(
    delta: float,
    rates: Sequence[float],
    opposite_thresholds: Sequence[float],
    dists: Sequence[UtilityDist],
) -> float:
    """Threshold equal to the expected utility of a type facing these meeting streams."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return _stream_root(rates, opposite_thresholds, dists, delta)


def _flow_root(
    alpha: float,
    flows: Sequence[float],
    floors: Sequence[float],
    dists: Sequence[UtilityDist],
) -> float:
    # right-hand side (1/alpha) * sum flow * T(max(t, f)) is nonincreasing in t
    live = [(g, max(f, 0.0), d) for g, f, d in zip(flows, floors, dists) if g > 0.0]
    if not live:
        return 0.0

    def h(t: float) -> float:
        return sum(g * d.tail_expectation(t if t > f else f) for g, f, d in live) / alpha - t

    if h(0.0) <= 0.0:
        return 0.0
    top = sum(g * d.tail_expectation(f) for g, f, d in live) / alpha
    root, _ = bisect_decreasing(h, 0.0, top + 1.0, tol=1e-15)
    return root


@dataclass
class EquilibriumOutcome:
    """Equilibrium quantities; arrays are indexed by type (and (man, woman) for flows)."""

    thr_men: np.ndarray
    thr_women: np.ndarray
    xi_men: np.ndarray
    xi_women: np.ndarray
    mass_men: np.ndarray
    mass_women: np.ndarray
    flows: np.ndarray
    welfare: float
    iterations: int
    trace: list[tuple[np.ndarray, np.ndarray]] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def thresholds(self) -> np.ndarray:
        return np.concatenate([self.thr_men, self.thr_women])

    @property
    def masses(self) -> np.ndarray:
        return np.concatenate([self.mass_men, self.mass_women])


def match_rate(
    spec: MarketSpec, a: AssortmentSet, thr_men: np.ndarray, thr_women: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-type matching rates given thresholds and assortments."""
    M, W = spec.n_men, spec.n_women
    surv = np.empty((M, W))
    for i in range(M):
        for j in range(W):
            surv[i, j] = spec.dists[i][j].survival(max(thr_men[i], thr_women[j]))
    return (a.men * surv).sum(axis=1), (a.women * surv).sum(axis=0)


def _tails(spec: MarketSpec, thr_men, thr_women) -> np.ndarray:
    M, W = spec.n_men, spec.n_women
    out = np.empty((M, W))
    for i in range(M):
        for j in range(W):
            out[i, j] = spec.dists[i][j].tail_expectation(max(thr_men[i], thr_women[j]))
    return out


def best_response_round(
    spec: MarketSpec, a: AssortmentSet, thr_men: np.ndarray, thr_women: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One synchronous application of the best-response map."""
    M, W = spec.n_men, spec.n_women
    new_m = np.array(
        [
            _stream_root(a.men[i], thr_women, spec.dists[i], spec.delta, thr_men[i])
            for i in range(M)
        ]
    )
    col = [tuple(spec.dists[i][j] for i in range(M)) for j in range(W)]
    new_w = np.array(
        [
            _stream_root(a.women[:, j], thr_men, col[j], spec.delta, thr_women[j])
            for j in range(W)
        ]
    )
    return new_m, new_w


def compute_welfare(spec: MarketSpec, a: AssortmentSet, out_masses, thr_men, thr_women) -> float:
    """Total utility flow: both sides' meeting streams weighted by accepted tail mass."""
    mass_m, mass_w = out_masses
    tails = _tails(spec, thr_men, thr_women)
    return float(
        (mass_m[:, None] * a.men * tails).sum() + (mass_w[None, :] * a.women * tails).sum()
    )


def solve_equilibrium(
    spec: MarketSpec,
    a: AssortmentSet,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    tol: float = BR_TOL,
    max_rounds: int | None = None,
    trace: bool = False,
) -> EquilibriumOutcome:
    if a.men.shape != (spec.n_men, spec.n_women):
        raise ValueError("assortment shape does not match the market")
    if init is None:
        thr_m, thr_w = np.zeros(spec.n_men), np.zeros(spec.n_women)
    else:
        thr_m, thr_w = (np.asarray(x, dtype=float).copy() for x in init)
    if max_rounds is None:
        max_rounds = 10 * spec.n_types + 100
    history = [(thr_m, thr_w)]
    rounds = 0
    changes: list[float] = []
    stalled = None
    while True:
        new_m, new_w = best_response_round(spec, a, thr_m, thr_w)
        rounds += 1
        history.append((new_m, new_w))
        change = max(
            np.max(np.abs(new_m - thr_m), initial=0.0), np.max(np.abs(new_w - thr_w), initial=0.0)
        )
        thr_m, thr_w = new_m, new_w
        if change <= tol:
            break
        changes.append(change)
        # chained thresholds sitting inside narrow point-mass bands amplify
        # rounding error; once the change stops shrinking at a tiny level the
        # profile is as precise as double arithmetic allows
        if (
            rounds > 2 * spec.n_types + 2
            and change <= STALL_TOL * max(1.0, float(np.max(thr_m)), float(np.max(thr_w)))
            and change >= min(changes[-STALL_WINDOW - 1 : -1])
        ):
            stalled = change
            log.debug("best-response iteration stalled at change %.3g", change)
            break
        if rounds >= max_rounds:
            raise IterationLimit(
                f"best-response iteration did not settle in {max_rounds} rounds", history
            )
    out = _assemble(spec, a, thr_m, thr_w, rounds, history if trace else None)
    if stalled is not None:
        out.meta.update(stalled=True, achieved_change=stalled)
    return out


def best_response_gap(
    spec: MarketSpec, a: AssortmentSet, thr_men: np.ndarray, thr_women: np.ndarray
) -> float:
    """Largest change one best-response round would make, relative to threshold scale."""
    br_m, br_w = best_response_round(spec, a, thr_men, thr_women)
    gap = max(
        np.max(np.abs(br_m - thr_men), initial=0.0), np.max(np.abs(br_w - thr_women), initial=0.0)
    )
    scale = max(1.0, float(np.max(thr_men, initial=0.0)), float(np.max(thr_women, initial=0.0)))
    return float(gap / scale)


def outcome_from_profile(
    spec: MarketSpec, a: AssortmentSet, thr_men: np.ndarray, thr_women: np.ndarray
) -> EquilibriumOutcome:
    """Matching rates, masses, flows and welfare implied by a threshold profile."""
    return _assemble(spec, a, np.asarray(thr_men, float), np.asarray(thr_women, float), 0, None)


def _assemble(spec, a, thr_m, thr_w, rounds, history) -> EquilibriumOutcome:
    xi_m, xi_w = match_rate(spec, a, thr_m, thr_w)
    mass_m = np.asarray(spec.alpha_men) / (spec.delta + xi_m)
    mass_w = np.asarray(spec.alpha_women) / (spec.delta + xi_w)
    flows = mass_m[:, None] * a.men
    welfare = compute_welfare(spec, a, (mass_m, mass_w), thr_m, thr_w)
    return EquilibriumOutcome(
        thr_m, thr_w, xi_m, xi_w, mass_m, mass_w, flows, welfare, rounds, history
    )


@dataclass
class FeasibilityReport:
    capacity_slack_men: np.ndarray
    capacity_slack_women: np.ndarray
    flow_imbalance: np.ndarray
    worst_violation: float
    ok: bool
    worst_item: str = ""


def check_feasibility(
    spec: MarketSpec, a: AssortmentSet, outcome: EquilibriumOutcome, tol: float = AUDIT_TOL
) -> FeasibilityReport:
    """Audit capacity (total rate at most 1) and pairwise flow balance."""
    slack_m = 1.0 - a.men.sum(axis=1)
    slack_w = 1.0 - a.women.sum(axis=0)
    imb = outcome.mass_men[:, None] * a.men - outcome.mass_women[None, :] * a.women
    scale = max(1.0, float(np.max(outcome.flows, initial=0.0)))
    items = []
    for i, s in enumerate(slack_m):
        items.append((max(0.0, -s) / (1.0 + tol), f"capacity {spec.men[i].label}"))
    for j, s in enumerate(slack_w):
        items.append((max(0.0, -s) / (1.0 + tol), f"capacity {spec.women[j].label}"))
    for i in range(spec.n_men):
        for j in range(spec.n_women):
            items.append(
                (abs(imb[i, j]) / scale, f"flow ({spec.men[i].label}, {spec.women[j].label})")
            )
    worst, name = max(items, key=lambda x: x[0])
    ok = worst <= tol
    return FeasibilityReport(slack_m, slack_w, imb, worst, ok, "" if ok else name)


@dataclass
class FlowEquilibrium:
    thr_men: np.ndarray
    thr_women: np.ndarray
    mass_men: np.ndarray
    mass_women: np.ndarray
    assortment: AssortmentSet
    rounds: int


def solve_flow_equilibrium(
    spec: MarketSpec, flows: np.ndarray, tol: float = BR_TOL, max_rounds: int | None = None
) -> FlowEquilibrium:
    """Equilibrium supporting prescribed pair flows, and the assortments realising them.

    Thresholds solve ``t = (1/alpha) * sum flow * T(max(t, t_opp))``; masses
    then follow from stationarity and rates are ``flow / mass``.
    Raises InfeasibleFlows when a mass is nonpositive or a capacity is exceeded.
    """
    flows = np.asarray(flows, dtype=float)
    M, W = spec.n_men, spec.n_women
    al_m, al_w = np.asarray(spec.alpha_men), np.asarray(spec.alpha_women)
    col = [tuple(spec.dists[i][j] for i in range(M)) for j in range(W)]
    thr_m, thr_w = np.zeros(M), np.zeros(W)
    max_rounds = max_rounds or 10 * spec.n_types + 100
    rounds = 0
    while True:
        new_m = np.array([_flow_root(al_m[i], flows[i], thr_w, spec.dists[i]) for i in range(M)])
        new_w = np.array([_flow_root(al_w[j], flows[:, j], thr_m, col[j]) for j in range(W)])
        rounds += 1
        change = max(np.max(np.abs(new_m - thr_m)), np.max(np.abs(new_w - thr_w)))
        thr_m, thr_w = new_m, new_w
        if change <= tol:
            break
        if rounds >= max_rounds:
            raise IterationLimit("flow-space threshold iteration did not settle")
    surv = np.array(
        [
            [spec.dists[i][j].survival(max(thr_m[i], thr_w[j])) for j in range(W)]
            for i in range(M)
        ]
    )
    mass_m = (al_m - (flows * surv).sum(axis=1)) / spec.delta
    mass_w = (al_w - (flows * surv).sum(axis=0)) / spec.delta
    if np.any(mass_m <= 0) or np.any(mass_w <= 0):
        raise InfeasibleFlows("prescribed flows leave a type with nonpositive mass")
    lam_m = flows / mass_m[:, None]
    lam_w = flows / mass_w[None, :]
    over = max(lam_m.sum(axis=1).max(), lam_w.sum(axis=0).max())
    if over > 1.0 + AUDIT_TOL:
        raise InfeasibleFlows(f"prescribed flows need total meeting rate {over:.6g} > 1")
    # absorb rounding so capacity holds exactly
    for arr, ax in ((lam_m, 1), (lam_w, 0)):
        tot = arr.sum(axis=ax, keepdims=True)
        np.divide(arr, np.maximum(tot, 1.0), out=arr)
    return FlowEquilibrium(thr_m, thr_w, mass_m, mass_w, AssortmentSet(lam_m, lam_w), rounds)


def assortments_from_flows(spec: MarketSpec, flows: np.ndarray) -> AssortmentSet:
    return solve_flow_equilibrium(spec, flows).assortment


def _blocks(allowed: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Connected components of the allowed-pair graph as (men, women) index arrays."""
    M, W = allowed.shape
    parent = list(range(M + W))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(*np.nonzero(allowed)):
        parent[find(int(i))] = find(M + int(j))
    groups: dict[int, list[int]] = {}
    for v in range(M + W):
        groups.setdefault(find(v), []).append(v)
    out = []
    for vs in groups.values():
        men = np.array([v for v in vs if v < M], dtype=int)
        women = np.array([v - M for v in vs if v >= M], dtype=int)
        if men.size and women.size:
            out.append((men, women))
    return out


def random_meeting_assortment(
    mass_men: np.ndarray, mass_women: np.ndarray, allowed: np.ndarray | None = None
) -> AssortmentSet:
    """Proportional mixing; the short side uses its full meeting capacity.

    With ``allowed``, mixing happens separately inside each connected block
    of allowed pairs (a block mixes fully even where the mask is sparse).
    """
    M, W = mass_men.size, mass_women.size
    if allowed is None:
        allowed = np.ones((M, W), dtype=bool)
    lam_m = np.zeros((M, W))
    lam_w = np.zeros((M, W))
    for men, women in _blocks(np.asarray(allowed, dtype=bool)):
        big = max(mass_men[men].sum(), mass_women[women].sum())
        lam_m[np.ix_(men, women)] = mass_women[None, women] / big
        lam_w[np.ix_(men, women)] = mass_men[men, None] / big
    return AssortmentSet(lam_m, lam_w)


def _masses_given_thresholds(
    spec: MarketSpec,
    thr_m: np.ndarray,
    thr_w: np.ndarray,
    allowed: np.ndarray | None,
    start: tuple[np.ndarray, np.ndarray],
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Stationary masses under proportional mixing with thresholds held fixed.

    Smooth in the log-masses, so a hybrid Powell solve is reliable here.
    """
    al = np.concatenate([spec.alpha_men, spec.alpha_women])
    M = spec.n_men

    def mass_map(x: np.ndarray) -> np.ndarray:
        a = random_meeting_assortment(x[:M], x[M:], allowed)
        xi_m, xi_w = match_rate(spec, a, thr_m, thr_w)
        return al / (spec.delta + np.concatenate([xi_m, xi_w]))

    y0 = np.log(np.concatenate(start))
    sol = optimize.root(lambda y: np.log(mass_map(np.exp(y))) - y, y0, method="hybr",
                        options={"xtol": 1e-15})
    x = mass_map(np.exp(sol.x))
    if np.max(np.abs(x - np.exp(sol.x))) > tol * max(1.0, x.max()):
        raise NonConvergence("masses under fixed thresholds did not settle")
    return x[:M], x[M:]


def _threshold_sweeps(
    spec: MarketSpec,
    allowed: np.ndarray | None,
    thr_m: np.ndarray,
    thr_w: np.ndarray,
    masses: tuple[np.ndarray, np.ndarray],
    tol: float,
    max_sweeps: int,
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray], int]:
    """Gauss-Seidel over types; each type's threshold is set by bisection so that
    it equals its best response once masses have re-equilibrated.

    Used when the mass iteration stalls, which happens when a threshold sits
    inside the narrow band of a smoothed point mass.
    """
    M, W = spec.n_men, spec.n_women
    col = [tuple(spec.dists[i][j] for i in range(M)) for j in range(W)]
    thr = np.concatenate([thr_m, thr_w]).astype(float)
    top = max(
        spec.dists[i][j].tail_expectation(0.0) for i in range(M) for j in range(W)
    )
    hi0 = max(top, 0.0) / spec.delta + 1.0

    def residual(k: int, t: float, start):
        trial = thr.copy()
        trial[k] = t
        tm, tw = trial[:M], trial[M:]
        mm, mw = _masses_given_thresholds(spec, tm, tw, allowed, start)
        a = random_meeting_assortment(mm, mw, allowed)
        if k < M:
            br = _stream_root(a.men[k], tw, spec.dists[k], spec.delta)
        else:
            br = _stream_root(a.women[:, k - M], tm, col[k - M], spec.delta)
        return br - t, (mm, mw)

    for sweep in range(1, max_sweeps + 1):
        old = thr.copy()
        for k in range(M + W):
            r0, m0 = residual(k, thr[k], masses)
            if abs(r0) <= 1e-13 * max(1.0, thr[k]):
                masses = m0
                continue
            lo, hi = (thr[k], hi0) if r0 > 0 else (0.0, thr[k])
            for _ in range(MAX_BISECT_RM):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                r, mm = residual(k, mid, masses)
                if r > 0:
                    lo = mid
                else:
                    hi = mid
            thr[k] = 0.5 * (lo + hi)
            _, masses = residual(k, thr[k], masses)
        if np.max(np.abs(thr - old)) <= tol:
            return thr[:M], thr[M:], masses, sweep
    raise NonConvergence(f"threshold sweeps did not settle in {max_sweeps} sweeps")


def random_meeting_equilibrium(
    spec: MarketSpec,
    tol: float = RM_TOL,
    max_iter: int = RM_MAX_ITER,
    allowed: np.ndarray | None = None,
) -> tuple[AssortmentSet, EquilibriumOutcome]:
    """Undirected search: outer fixed point between masses and meeting rates.

    ``allowed`` restricts mixing to blocks of pairs; the default is the
    whole market. The mass iteration halves its step whenever the update
    grows; if it still stalls, threshold sweeps take over.
    """
    mass_m = np.asarray(spec.alpha_men) / spec.delta
    mass_w = np.asarray(spec.alpha_women) / spec.delta
    damping = 1.0
    prev_step = np.inf
    best = None
    budget = min(max_iter, RM_ITER_BEFORE_SWEEPS)
    for it in range(1, budget + 1):
        a = random_meeting_assortment(mass_m, mass_w, allowed)
        out = solve_equilibrium(spec, a)
        step = max(
            np.max(np.abs(out.mass_men - mass_m)), np.max(np.abs(out.mass_women - mass_w))
        )
        scale = max(1.0, float(mass_m.max()), float(mass_w.max()))
        if best is None or step < best[0]:
            best = (step, out.thr_men, out.thr_women, (out.mass_men, out.mass_women))
        if step <= tol * scale:
            out.meta.update(outer_iterations=it, damping=damping, method="mass-iteration")
            return a, out
        if step >= prev_step and damping > MIN_DAMPING:
            damping *= 0.5
            log.info("random-meeting masses oscillate; damping now %g", damping)
        prev_step = step
        mass_m = (1 - damping) * mass_m + damping * out.mass_men
        mass_w = (1 - damping) * mass_w + damping * out.mass_women
    log.info("mass iteration stalled; trying a quasi-Newton solve on log-masses")
    M = spec.n_men

    def outer(y: np.ndarray) -> np.ndarray:
        x = np.exp(y)
        o = solve_equilibrium(spec, random_meeting_assortment(x[:M], x[M:], allowed), tol=1e-14)
        return np.log(np.concatenate([o.mass_men, o.mass_women])) - y

    _, tm, tw, masses = best
    sol = optimize.root(outer, np.log(np.concatenate(masses)), method="hybr",
                        options={"xtol": 1e-15})
    x = np.exp(sol.x)
    a = random_meeting_assortment(x[:M], x[M:], allowed)
    out = solve_equilibrium(spec, a)
    step = max(np.max(np.abs(out.mass_men - x[:M])), np.max(np.abs(out.mass_women - x[M:])))
    if step <= tol * max(1.0, float(x.max())):
        out.meta.update(outer_iterations=budget, damping=damping, method="log-mass-root")
        return a, out
    log.info("quasi-Newton stalled; trying a joint solve on thresholds and masses")
    out = _coupled_solve(spec, allowed, np.concatenate([tm, tw]), np.concatenate(masses), tol)
    if out is not None:
        a, out = out
        out.meta.update(outer_iterations=budget, damping=damping, method="coupled-root")
        return a, out
    log.info("joint solve failed; switching to threshold sweeps")
    tm, tw, masses, sweeps = _threshold_sweeps(
        spec, allowed, tm.copy(), tw.copy(), masses, tol=1e-12, max_sweeps=RM_MAX_SWEEPS
    )
    a, out, br_gap, m_gap = _audit(spec, allowed, tm, tw, masses)
    if not _audit_ok(out, tm, tw, br_gap, m_gap, tol):
        raise NonConvergence(
            f"random-meeting fixed point not reached (best-response gap {br_gap:.3g}, "
            f"mass gap {m_gap:.3g}); last masses {masses}"
        )
    out.meta.update(
        outer_iterations=budget, damping=damping, method="threshold-sweeps", sweeps=sweeps
    )
    return a, out


def _audit(spec, allowed, tm, tw, masses):
    # the returned profile must be a best response and reproduce its own masses
    a = random_meeting_assortment(*masses, allowed)
    out = _assemble(spec, a, tm, tw, 0, None)
    br_m, br_w = best_response_round(spec, a, tm, tw)
    br_gap = max(np.max(np.abs(br_m - tm)), np.max(np.abs(br_w - tw)))
    m_gap = max(
        np.max(np.abs(out.mass_men - masses[0])), np.max(np.abs(out.mass_women - masses[1]))
    )
    return a, out, br_gap, m_gap


def _audit_ok(out, tm, tw, br_gap, m_gap, tol) -> bool:
    scale = max(1.0, float(out.mass_men.max()), float(out.mass_women.max()))
    thr_scale = max(1.0, float(np.max(tm, initial=0.0)), float(np.max(tw, initial=0.0)))
    return br_gap <= BR_AUDIT_TOL * thr_scale and m_gap <= tol * scale


def _coupled_solve(spec, allowed, thr0, mass0, tol):
    """Levenberg-Marquardt on best-response and stationarity residuals together.

    Sweeps can cycle when two thresholds sit in point-mass bands and each
    one's move flips the other's best response; solving jointly avoids that.
    """
    M, n = spec.n_men, spec.n_men + spec.n_women
    alpha = np.concatenate([spec.alpha_men, spec.alpha_women])

    def residual(z: np.ndarray) -> np.ndarray:
        thr = np.maximum(z[:n], 0.0)
        x = np.exp(z[n:])
        a = random_meeting_assortment(x[:M], x[M:], allowed)
        bm, bw = best_response_round(spec, a, thr[:M], thr[M:])
        xm, xw = match_rate(spec, a, thr[:M], thr[M:])
        implied = np.log(alpha / (spec.delta + np.concatenate([xm, xw])))
        return np.concatenate([np.concatenate([bm, bw]) - thr, implied - z[n:]])

    z0 = np.concatenate([thr0, np.log(mass0)])
    try:
        sol = optimize.root(residual, z0, method="lm", options={"xtol": 1e-15, "ftol": 1e-15})
    except (FloatingPointError, ValueError, NonConvergence):
        return None
    thr = np.maximum(sol.x[:n], 0.0)
    x = np.exp(sol.x[n:])
    tm, tw = thr[:M], thr[M:]
    a, out, br_gap, m_gap = _audit(spec, allowed, tm, tw, (x[:M], x[M:]))
    return (a, out) if _audit_ok(out, tm, tw, br_gap, m_gap, tol) else None


def assortative_equilibrium(spec: MarketSpec) -> tuple[AssortmentSet, EquilibriumOutcome]:
    """Same-index pairing (m_k with w_k) with flow-balanced rates inside each pair."""
    allowed = np.zeros((spec.n_men, spec.n_women), dtype=bool)
    for k in range(min(spec.n_men, spec.n_women)):
        allowed[k, k] = True
    return random_meeting_equilibrium(spec, allowed=allowed)
