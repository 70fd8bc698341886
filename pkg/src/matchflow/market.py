"""Market domain model and generators for the standard instances."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .dist import DEFAULT_NOISE, Mixture, Normal, PointMass, Uniform, UtilityDist
from .errors import ValidationError


class Side(str, Enum):
    MEN = "men"
    WOMEN = "women"

    @property
    def other(self) -> "Side":
        return Side.WOMEN if self is Side.MEN else Side.MEN


@dataclass(frozen=True)
class TypeId:
    side: Side
    index: int
    label: str


@dataclass(frozen=True)
class MarketSpec:
    """A two-sided market.

    ``dists[i][j]`` is the shared-utility distribution of man type ``i`` and
    woman type ``j``. Arrival rates are per type, in the same order as
    ``men`` and ``women``.
    """

    men: tuple[TypeId, ...]
    women: tuple[TypeId, ...]
    alpha_men: tuple[float, ...]
    alpha_women: tuple[float, ...]
    delta: float
    dists: tuple[tuple[UtilityDist, ...], ...]

    def __post_init__(self):
        validate(self)

    @property
    def n_men(self) -> int:
        return len(self.men)

    @property
    def n_women(self) -> int:
        return len(self.women)

    @property
    def n_types(self) -> int:
        return len(self.men) + len(self.women)

    def dist(self, man: int, woman: int) -> UtilityDist:
        return self.dists[man][woman]

    def label_index(self) -> dict[str, TypeId]:
        return {t.label: t for t in self.men + self.women}

    def scaled(self, k: float) -> "MarketSpec":
        """Same market with every arrival rate multiplied by ``k``."""
        return MarketSpec(
            self.men,
            self.women,
            tuple(k * a for a in self.alpha_men),
            tuple(k * a for a in self.alpha_women),
            self.delta,
            self.dists,
        )


def validate(spec: MarketSpec) -> None:
    if not spec.delta > 0:
        raise ValidationError("delta must be positive")
    if not spec.men or not spec.women:
        raise ValidationError("both sides need at least one type")
    if len(spec.alpha_men) != len(spec.men) or len(spec.alpha_women) != len(spec.women):
        raise ValidationError("arrival rate missing for some type")
    for t, a in zip(spec.men + spec.women, spec.alpha_men + spec.alpha_women):
        if not a > 0:
            raise ValidationError(f"arrival rate of {t.label} must be positive")
    labels = [t.label for t in spec.men + spec.women]
    if len(set(labels)) != len(labels):
        raise ValidationError("type labels must be unique across both sides")
    for side, types in ((Side.MEN, spec.men), (Side.WOMEN, spec.women)):
        for k, t in enumerate(types):
            if t.side is not side or t.index != k:
                raise ValidationError(f"type {t.label} has inconsistent side/index")
    if len(spec.dists) != len(spec.men):
        raise ValidationError("distribution table has wrong number of rows")
    for i, row in enumerate(spec.dists):
        if len(row) != len(spec.women):
            raise ValidationError(f"distribution row for {spec.men[i].label} is incomplete")
        for j, d in enumerate(row):
            if d is None:
                raise ValidationError(
                    f"missing distribution for pair ({spec.men[i].label}, {spec.women[j].label})"
                )


@dataclass
class AssortmentSet:
    """Meeting rates of every type toward every opposite-side type.

    ``men[i, j]`` is the rate at which man type ``i`` meets woman type ``j``;
    ``women[i, j]`` is the rate at which woman type ``j`` meets man type ``i``.
    Both arrays are indexed (man, woman).
    """

    men: np.ndarray
    women: np.ndarray

    def __post_init__(self):
        self.men = np.asarray(self.men, dtype=float)
        self.women = np.asarray(self.women, dtype=float)
        if self.men.shape != self.women.shape or self.men.ndim != 2:
            raise ValidationError("assortment arrays must share a (men, women) shape")
        for arr in (self.men, self.women):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValidationError("meeting rates must be finite and nonnegative")

    @classmethod
    def zeros(cls, spec: MarketSpec) -> "AssortmentSet":
        shape = (spec.n_men, spec.n_women)
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def symmetric(cls, rates) -> "AssortmentSet":
        rates = np.asarray(rates, dtype=float)
        return cls(rates.copy(), rates.copy())


def _men(n: int) -> tuple[TypeId, ...]:
    return tuple(TypeId(Side.MEN, i, f"m{i + 1}") for i in range(n))


def _women(n: int) -> tuple[TypeId, ...]:
    return tuple(TypeId(Side.WOMEN, j, f"w{j + 1}") for j in range(n))


def build_market(
    men_labels: Sequence[str],
    women_labels: Sequence[str],
    alpha_men: Sequence[float],
    alpha_women: Sequence[float],
    delta: float,
    dists: Sequence[Sequence[UtilityDist]],
) -> MarketSpec:
    return MarketSpec(
        tuple(TypeId(Side.MEN, i, lab) for i, lab in enumerate(men_labels)),
        tuple(TypeId(Side.WOMEN, j, lab) for j, lab in enumerate(women_labels)),
        tuple(float(a) for a in alpha_men),
        tuple(float(a) for a in alpha_women),
        float(delta),
        tuple(tuple(row) for row in dists),
    )


def gen_horizontal(
    n: int, delta: float, d_diag: UtilityDist, noise: float = DEFAULT_NOISE
) -> MarketSpec:
    """``n`` types per side; only same-index pairs get positive utility."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    off = PointMass(0.0, noise)
    dists = tuple(tuple(d_diag if i == j else off for j in range(n)) for i in range(n))
    return MarketSpec(_men(n), _women(n), (1.0,) * n, (1.0,) * n, float(delta), dists)


INTERP_ALPHA_MEN = (1.0, 4.0, 4.0, 1.0)
INTERP_ALPHA_WOMEN = (2.0, 2.0, 3.0, 2.0)


def interpolated_mean(q: float, i: int, j: int) -> float:
    """Mean utility of pair (m_i, w_j), 1-based, at horizontal/vertical weight ``q``."""
    horizontal = 8.0 if i == j else 0.0
    vertical = float((5 - i) * (5 - j))
    return (1.0 - q) * horizontal + q * vertical


def gen_interpolated(q: float, sigma: float = 0.1, delta: float = 1.0) -> MarketSpec:
    """4x4 normal market interpolating between the horizontal and vertical extremes."""
    if not 0.0 <= q <= 1.0:
        raise ValidationError("q must lie in [0, 1]")
    dists = tuple(
        tuple(Normal(interpolated_mean(q, i, j), sigma) for j in range(1, 5))
        for i in range(1, 5)
    )
    return MarketSpec(
        _men(4), _women(4), INTERP_ALPHA_MEN, INTERP_ALPHA_WOMEN, float(delta), dists
    )


def gen_vertical_example(
    ubar: float = 100.0, eps: float = 0.01, delta: float = 0.01, noise: float = DEFAULT_NOISE
) -> MarketSpec:
    """High/low vertical market where the diagonal design beats assortative matching."""
    dists = (
        (PointMass(ubar * (1 + 2 * eps), noise), PointMass(1 + eps, noise)),
        (PointMass(ubar, noise), PointMass(1.0, noise)),
    )
    return build_market(
        ("mH", "mL"), ("wH", "wL"), (1.0, 1.0 / ubar), (1.0 / ubar, 1.0), delta, dists
    )


def gen_gap_example(eps: float, noise: float = DEFAULT_NOISE) -> MarketSpec:
    """One man type facing a rare high type and a common low type."""
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    e = eps / 3.0
    dists = ((PointMass(1.0 / e, noise), PointMass(0.5, noise)),)
    return build_market(("m",), ("wH", "wL"), (2.0,), (e, 2.0 - e), e, dists)


def gen_star(
    alpha_center: float,
    leaves: Sequence[tuple[float, UtilityDist]],
    delta: float,
) -> MarketSpec:
    """Single man type (the star center) facing one woman type per leaf."""
    dists = (tuple(d for _, d in leaves),)
    return build_market(
        ("m1",),
        tuple(f"w{j + 1}" for j in range(len(leaves))),
        (alpha_center,),
        tuple(a for a, _ in leaves),
        delta,
        dists,
    )


def random_dist(rng: np.random.Generator, point_noise: float = 1e-3) -> UtilityDist:
    kind = rng.integers(0, 4)
    if kind == 0:
        return Normal(float(rng.uniform(-1.0, 10.0)), float(rng.uniform(0.1, 3.0)))
    if kind == 1:
        lo = float(rng.uniform(-2.0, 6.0))
        return Uniform(lo, lo + float(rng.uniform(0.5, 8.0)))
    if kind == 2:
        return PointMass(float(rng.uniform(0.0, 10.0)), point_noise)
    w = float(rng.uniform(0.1, 0.9))
    return Mixture(
        (w, 1.0 - w),
        (
            Normal(float(rng.uniform(0.0, 10.0)), float(rng.uniform(0.1, 2.0))),
            Uniform(0.0, float(rng.uniform(0.5, 10.0))),
        ),
    )


def gen_random(
    seed: int,
    n_men: int | None = None,
    n_women: int | None = None,
    max_types: int = 4,
) -> MarketSpec:
    """Seeded random market used by the property and acceptance suites."""
    rng = np.random.default_rng(seed)
    n_men = n_men or int(rng.integers(1, max_types + 1))
    n_women = n_women or int(rng.integers(1, max_types + 1))
    delta = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
    alpha_m = tuple(float(a) for a in rng.uniform(0.2, 3.0, n_men))
    alpha_w = tuple(float(a) for a in rng.uniform(0.2, 3.0, n_women))
    dists = tuple(tuple(random_dist(rng) for _ in range(n_women)) for _ in range(n_men))
    return MarketSpec(_men(n_men), _women(n_women), alpha_m, alpha_w, delta, dists)
