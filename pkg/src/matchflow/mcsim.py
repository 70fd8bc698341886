"""Agent-based Monte Carlo check of the continuum model.

Agents of one type are exchangeable (thresholds are per type and utilities
are drawn per meeting), so the state is the vector of per-type head counts.
The event loop is a Gillespie simulation over arrivals, life events and
meetings, compiled with numba. Randomness comes from a PCG64 stream per
replication; uniforms and utility draws are generated in numpy buffers that
the compiled loop consumes, so runs are bit-reproducible from the seed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .equilibrium import EquilibriumOutcome
from .errors import ValidationError
from .market import AssortmentSet, MarketSpec

log = logging.getLogger(__name__)

UNIFORM_BUFFER = 1 << 18
UTILITY_BUFFER = 1 << 12
DEFAULT_BATCHES = 20

_DONE, _NEED_UNIFORMS, _NEED_UTILITIES = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    n: int = 20_000
    horizon: float = 200.0
    burn_in: float = 50.0
    seed: int = 0
    batches: int = DEFAULT_BATCHES

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("scale n must be at least 1")
        if not 0 <= self.burn_in < self.horizon:
            raise ValidationError("burn_in must lie in [0, horizon)")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.batches < 2:
            raise ValidationError("need at least two batches for standard errors")


@dataclass
class SimReport:
    seed: int
    labels: list[str]
    mass: np.ndarray
    mass_stderr: np.ndarray
    welfare: float
    welfare_stderr: float
    arrivals: int
    matches: int
    departures: int
    final_population: int
    matched_exits_men: int
    matched_exits_women: int
    skipped_meetings: int
    meeting_asymmetry: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "mass": {lab: float(m) for lab, m in zip(self.labels, self.mass)},
            "mass_stderr": {lab: float(s) for lab, s in zip(self.labels, self.mass_stderr)},
            "welfare": self.welfare,
            "welfare_stderr": self.welfare_stderr,
            "arrivals": self.arrivals,
            "matches": self.matches,
            "departures": self.departures,
            "final_population": self.final_population,
            "matched_exits_men": self.matched_exits_men,
            "matched_exits_women": self.matched_exits_women,
            "skipped_meetings": self.skipped_meetings,
            "meeting_asymmetry": self.meeting_asymmetry,
        }


@numba.njit(cache=True, nogil=True)
def _accumulate(t0, t1, counts, burn_in, width, nb, mass_acc):
    lo = max(t0, burn_in)
    if t1 <= lo:
        return
    while lo < t1:
        b = min(int((lo - burn_in) / width), nb - 1)
        # the division can round down onto the batch that just ended
        while b < nb - 1 and burn_in + (b + 1) * width <= lo:
            b += 1
        edge = burn_in + (b + 1) * width
        hi = t1 if b == nb - 1 else min(t1, edge)
        dt = hi - lo
        for k in range(counts.shape[0]):
            mass_acc[b, k] += counts[k] * dt
        lo = hi


@numba.njit(cache=True, nogil=True)
def _run(
    state_t, horizon, burn_in, nb, counts, alpha_n, delta, pm, pw, lam_m, lam_w, thr,
    unif, upos, ubuf, ustart, mass_acc, welfare_acc, tallies, meet_from,
):
    """Advance the chain until the horizon or until a buffer runs dry.

    ``state_t[0]`` holds the clock; ``upos[0]`` the uniform cursor.
    tallies: arrivals, matches, departures, skipped, matched men, matched women.
    """
    n_types = counts.shape[0]
    n_pairs = pm.shape[0]
    width = (horizon - burn_in) / nb
    rates = np.empty(2 * n_types + 2 * n_pairs)
    t = state_t[0]
    while True:
        if upos[0] + 2 > unif.shape[0]:
            state_t[0] = t
            return _NEED_UNIFORMS, -1
        total = 0.0
        for k in range(n_types):
            rates[k] = alpha_n[k]
            rates[n_types + k] = delta * counts[k]
        base = 2 * n_types
        for p in range(n_pairs):
            rates[base + p] = 0.5 * counts[pm[p]] * lam_m[p]
            rates[base + n_pairs + p] = 0.5 * counts[pw[p]] * lam_w[p]
        for r in range(rates.shape[0]):
            total += rates[r]
        u1 = unif[upos[0]]
        u2 = unif[upos[0] + 1]
        dt = -math.log1p(-u1) / total
        if t + dt >= horizon:
            _accumulate(t, horizon, counts, burn_in, width, nb, mass_acc)
            state_t[0] = horizon
            upos[0] += 2
            return _DONE, -1
        # choose the event before consuming the draws, so a refill can retry
        target = u2 * total
        ev = rates.shape[0] - 1
        acc = 0.0
        for r in range(rates.shape[0]):
            acc += rates[r]
            if target < acc:
                ev = r
                break
        if ev >= base:
            p = ev - base if ev < base + n_pairs else ev - base - n_pairs
            if ustart[p] >= ubuf.shape[1]:
                state_t[0] = t
                return _NEED_UTILITIES, p
        upos[0] += 2
        _accumulate(t, t + dt, counts, burn_in, width, nb, mass_acc)
        t += dt
        if ev < n_types:
            counts[ev] += 1
            tallies[0] += 1
        elif ev < base:
            k = ev - n_types
            if counts[k] > 0:
                counts[k] -= 1
                tallies[2] += 1
        else:
            side = 0 if ev < base + n_pairs else 1
            meet_from[p, side] += 1
            m, w = pm[p], pw[p]
            if counts[m] == 0 or counts[w] == 0:
                tallies[3] += 1
                continue
            util = ubuf[p, ustart[p]]
            ustart[p] += 1
            if util >= thr[p]:
                counts[m] -= 1
                counts[w] -= 1
                tallies[1] += 1
                tallies[4] += 1
                tallies[5] += 1
                if t >= burn_in:
                    b = min(int((t - burn_in) / width), nb - 1)
                    welfare_acc[b] += 2.0 * util


def _thresholds(thresholds) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(thresholds, EquilibriumOutcome):
        return np.asarray(thresholds.thr_men, float), np.asarray(thresholds.thr_women, float)
    thr_m, thr_w = thresholds
    return np.asarray(thr_m, float), np.asarray(thr_w, float)


def simulate(
    spec: MarketSpec, a: AssortmentSet, thresholds, config: SimConfig
) -> SimReport:
    """Simulate one replication; ``thresholds`` is an outcome or (men, women) arrays."""
    thr_m, thr_w = _thresholds(thresholds)
    M, W = spec.n_men, spec.n_women
    pairs = [(i, j) for i in range(M) for j in range(W) if a.men[i, j] > 0 or a.women[i, j] > 0]
    pm = np.array([i for i, _ in pairs], dtype=np.int64)
    pw = np.array([M + j for _, j in pairs], dtype=np.int64)
    lam_m = np.array([a.men[i, j] for i, j in pairs], dtype=float)
    lam_w = np.array([a.women[i, j] for i, j in pairs], dtype=float)
    thr = np.array([max(thr_m[i], thr_w[j]) for i, j in pairs], dtype=float)
    alpha_n = np.array(spec.alpha_men + spec.alpha_women, dtype=float) * config.n
    n_types = M + W
    P = len(pairs)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    counts = np.zeros(n_types, dtype=np.int64)
    unif = rng.random(UNIFORM_BUFFER)
    upos = np.zeros(1, dtype=np.int64)
    ubuf = np.empty((max(P, 1), UTILITY_BUFFER))
    for p, (i, j) in enumerate(pairs):
        ubuf[p] = spec.dists[i][j].sample(rng, UTILITY_BUFFER)
    ustart = np.zeros(max(P, 1), dtype=np.int64)
    mass_acc = np.zeros((config.batches, n_types))
    welfare_acc = np.zeros(config.batches)
    tallies = np.zeros(6, dtype=np.int64)
    meet_from = np.zeros((max(P, 1), 2), dtype=np.int64)
    state_t = np.zeros(1)

    while True:
        status, p = _run(
            state_t, float(config.horizon), float(config.burn_in), config.batches, counts,
            alpha_n, float(spec.delta), pm, pw, lam_m, lam_w, thr, unif, upos, ubuf, ustart,
            mass_acc, welfare_acc, tallies, meet_from,
        )
        if status == _DONE:
            break
        if status == _NEED_UNIFORMS:
            unif = rng.random(UNIFORM_BUFFER)
            upos[0] = 0
        else:
            i, j = pairs[p]
            ubuf[p] = spec.dists[i][j].sample(rng, UTILITY_BUFFER)
            ustart[p] = 0

    width = (config.horizon - config.burn_in) / config.batches
    batch_mass = mass_acc / (width * config.n)
    batch_welfare = welfare_acc / (width * config.n)
    root_b = math.sqrt(config.batches)
    arrivals, matches, departures, skipped, exits_m, exits_w = (int(x) for x in tallies)
    asym = {}
    for p, (i, j) in enumerate(pairs):
        fm, fw = int(meet_from[p, 0]), int(meet_from[p, 1])
        if fm + fw:
            key = f"{spec.men[i].label}|{spec.women[j].label}"
            asym[key] = (fm - fw) / (fm + fw)
    if skipped:
        log.warning("skipped %d meetings that found an empty side", skipped)
    return SimReport(
        seed=config.seed,
        labels=[t.label for t in spec.men + spec.women],
        mass=batch_mass.mean(axis=0),
        mass_stderr=batch_mass.std(axis=0, ddof=1) / root_b,
        welfare=float(batch_welfare.mean()),
        welfare_stderr=float(batch_welfare.std(ddof=1) / root_b),
        arrivals=arrivals,
        matches=matches,
        departures=departures,
        final_population=int(counts.sum()),
        matched_exits_men=exits_m,
        matched_exits_women=exits_w,
        skipped_meetings=skipped,
        meeting_asymmetry=asym,
    )


def replication_seeds(seed: int, reps: int) -> list[int]:
    """Independent 64-bit child seeds derived from one root seed."""
    children = np.random.SeedSequence(seed).spawn(reps)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def replicate(
    spec: MarketSpec,
    a: AssortmentSet,
    thresholds,
    config: SimConfig,
    seeds: list[int],
    threads: int = 1,
) -> list[SimReport]:
    """Run one replication per seed; results come back in seed-list order."""
    configs = [
        SimConfig(config.n, config.horizon, config.burn_in, s, config.batches) for s in seeds
    ]
    if threads <= 1:
        return [simulate(spec, a, thresholds, c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: simulate(spec, a, thresholds, c), configs))
