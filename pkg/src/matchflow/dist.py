"""Utility distributions and the pairwise payoff-rate fixed point.

Every distribution exposes the oracles the rest of the package needs:
``cdf``, ``survival``, ``tail_expectation`` (the partial first moment
``E[u; u >= theta]``) and ``sample``. All kinds are continuous, so ties
between a draw and a threshold have probability zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .errors import NonConvergence

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

DEFAULT_NOISE = 1e-6
RHO_TOL = 1e-12
MAX_BISECT = 200


@dataclass(frozen=True)
class Normal:
    mean: float
    stddev: float

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError("normal stddev must be positive")

    def density(self, theta: float) -> float:
        z = (theta - self.mean) / self.stddev
        return _INV_SQRT_2PI * math.exp(-0.5 * z * z) / self.stddev

    def survival(self, theta: float) -> float:
        # erfc keeps full relative accuracy deep in the upper tail
        return 0.5 * math.erfc((theta - self.mean) / (self.stddev * _SQRT2))

    def cdf(self, theta: float) -> float:
        return 0.5 * math.erfc(-(theta - self.mean) / (self.stddev * _SQRT2))

    def tail_expectation(self, theta: float) -> float:
        if theta == -math.inf:
            return self.mean
        s = self.stddev
        return self.mean * self.survival(theta) + s * s * self.density(theta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, self.stddev, size)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("uniform requires lo < hi")

    def density(self, theta: float) -> float:
        return 1.0 / (self.hi - self.lo) if self.lo <= theta <= self.hi else 0.0

    def cdf(self, theta: float) -> float:
        if theta <= self.lo:
            return 0.0
        if theta >= self.hi:
            return 1.0
        return (theta - self.lo) / (self.hi - self.lo)

    def survival(self, theta: float) -> float:
        if theta <= self.lo:
            return 1.0
        if theta >= self.hi:
            return 0.0
        return (self.hi - theta) / (self.hi - self.lo)

    def tail_expectation(self, theta: float) -> float:
        t = min(max(theta, self.lo), self.hi)
        return (self.hi - t) * (self.hi + t) / (2.0 * (self.hi - self.lo))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class PointMass:
    """A point mass smoothed into a uniform of total ``width`` around ``value``."""

    value: float
    width: float = DEFAULT_NOISE

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("point-mass noise width must be positive")
        half = 0.5 * self.width
        object.__setattr__(self, "_u", Uniform(self.value - half, self.value + half))

    def density(self, theta: float) -> float:
        return self._u.density(theta)

    def cdf(self, theta: float) -> float:
        return self._u.cdf(theta)

    def survival(self, theta: float) -> float:
        return self._u.survival(theta)

    def tail_expectation(self, theta: float) -> float:
        return self._u.tail_expectation(theta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self._u.sample(rng, size)


@dataclass(frozen=True)
class Mixture:
    weights: tuple[float, ...]
    components: tuple["UtilityDist", ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.weights) != len(self.components) or not self.components:
            raise ValueError("mixture needs one weight per component")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be nonnegative and sum to 1")

    def _mix(self, name: str, theta: float) -> float:
        return sum(w * getattr(c, name)(theta) for w, c in zip(self.weights, self.components))

    def density(self, theta: float) -> float:
        return self._mix("density", theta)

    def cdf(self, theta: float) -> float:
        return self._mix("cdf", theta)

    def survival(self, theta: float) -> float:
        return self._mix("survival", theta)

    def tail_expectation(self, theta: float) -> float:
        return self._mix("tail_expectation", theta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        which = rng.choice(len(self.components), size=size, p=np.asarray(self.weights))
        out = np.empty(size)
        for k, comp in enumerate(self.components):
            idx = np.flatnonzero(which == k)
            if idx.size:
                out[idx] = comp.sample(rng, idx.size)
        return out


UtilityDist = Union[Normal, Uniform, PointMass, Mixture]


def cdf(d: UtilityDist, theta: float) -> float:
    return d.cdf(theta)


def survival(d: UtilityDist, theta: float) -> float:
    return d.survival(theta)


def tail_expectation(d: UtilityDist, theta: float) -> float:
    return d.tail_expectation(theta)


def payoff_rate(d: UtilityDist, delta: float, theta: float) -> float:
    """Steady-state payoff of accepting every draw at or above ``theta``."""
    return d.tail_expectation(theta) / (delta + d.survival(theta))


def payoff_rate_multi(
    pairs: Iterable[tuple[float, float, UtilityDist]], delta: float, theta: float
) -> float:
    """Payoff rate against several partner streams.

    ``pairs`` holds ``(rate, floor, dist)``; a draw from stream ``i`` is
    accepted iff it clears both ``theta`` and that stream's floor.
    """
    num = 0.0
    den = delta
    for lam, floor, d in pairs:
        if lam <= 0.0:
            continue
        t = theta if theta > floor else floor
        num += lam * d.tail_expectation(t)
        den += lam * d.survival(t)
    return num / den


def bisect_decreasing(
    h: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = RHO_TOL,
    max_iter: int = MAX_BISECT,
) -> tuple[float, int]:
    """Root of a function with a single + to - sign change on ``[lo, hi]``.

    Returns ``(root, iterations)``. The bracket is expanded (doubling) up to
    ``max_iter`` times when ``h(hi)`` is still positive.
    """
    expand = 0
    while h(hi) > 0.0:
        lo, hi = hi, 2.0 * hi + 1.0
        expand += 1
        if expand > max_iter:
            raise NonConvergence("bisection bracket expansion exceeded limit")
    it = 0
    while hi - lo > tol * max(1.0, hi) and it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


@dataclass(frozen=True)
class RhoResult:
    rho: float
    argmax_threshold: float
    iterations: int


def solve_rho(d: UtilityDist, delta: float) -> RhoResult:
    """Maximum over thresholds >= 0 of ``payoff_rate``; attained at its fixed point."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    top = d.tail_expectation(0.0)
    if top <= 0.0 or payoff_rate(d, delta, 0.0) <= 0.0:
        return RhoResult(0.0, 0.0, 0)
    rho, it = bisect_decreasing(
        lambda t: payoff_rate(d, delta, t) - t, 0.0, top / delta + 1.0
    )
    return RhoResult(rho, rho, it)


def stream_fixed_point(
    pairs: Sequence[tuple[float, float, UtilityDist]], delta: float
) -> float:
    """Unique ``theta >= 0`` with ``payoff_rate_multi(pairs, delta, theta) == theta``."""
    live = [(lam, max(floor, 0.0), d) for lam, floor, d in pairs if lam > 0.0]
    if not live:
        return 0.0
    top = sum(lam * d.tail_expectation(f) for lam, f, d in live)
    if top <= 0.0:
        return 0.0
    root, _ = bisect_decreasing(
        lambda t: payoff_rate_multi(live, delta, t) - t, 0.0, top / delta + 1.0
    )
    return root
