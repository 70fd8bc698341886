"""Reduction from MAX3LIN2 to the platform's welfare problem.

Each variable x_i gets two man types (x_i=0 and x_i=1 copies) and one woman
"switch" type; each equation gets four woman types, one per satisfying
assignment of its three variables. Welfare values here are one-sided (the
women's total), which is the convention of the completeness and soundness
bounds; an equilibrium's two-sided welfare is twice as large.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dist import DEFAULT_NOISE, PointMass
from .errors import SchemaError, ValidationError
from .market import AssortmentSet, MarketSpec, build_market

PATTERNS = ((0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0))


@dataclass(frozen=True)
class Lin2Instance:
    """Equations x_i + x_j + x_k = b over GF(2); variable indices are 1-based."""

    n: int
    equations: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("instance needs at least one variable")
        for ell, (i, j, k, b) in enumerate(self.equations):
            if len({i, j, k}) != 3:
                raise ValidationError(f"equation {ell + 1} repeats a variable")
            if not all(1 <= v <= self.n for v in (i, j, k)):
                raise ValidationError(f"equation {ell + 1} has an index outside 1..{self.n}")
            if b not in (0, 1):
                raise ValidationError(f"equation {ell + 1} has right-hand side {b}, not a bit")
        occ = self.occurrences()
        unused = [i + 1 for i, c in enumerate(occ) if c == 0]
        if unused:
            raise ValidationError(f"variables {unused} appear in no equation")

    @property
    def m(self) -> int:
        return len(self.equations)

    def occurrences(self) -> list[int]:
        occ = [0] * self.n
        for i, j, k, _ in self.equations:
            for v in (i, j, k):
                occ[v - 1] += 1
        return occ

    def satisfied(self, assignment) -> int:
        return sum(
            1 for i, j, k, b in self.equations
            if assignment[i - 1] ^ assignment[j - 1] ^ assignment[k - 1] == b
        )

    def max_satisfied(self) -> int:
        return max(self.satisfied(x) for x in itertools.product((0, 1), repeat=self.n))


def pattern_assignment(pattern: tuple[int, int, int], rhs: int) -> tuple[int, int, int]:
    """Values of (x_i, x_j, x_k) that an equation type stands for."""
    return tuple(p ^ rhs for p in pattern)


@dataclass
class ReductionMarket:
    instance: Lin2Instance
    spec: MarketSpec
    delta: float
    # man index of the x_i=b copy, keyed (i, b) with 1-based i
    var_types: dict[tuple[int, int], int]
    # woman index of the switch type of x_i
    switch_types: dict[int, int]
    # woman index of equation type (ell, pattern), 0-based ell
    eq_types: dict[tuple[int, tuple[int, int, int]], int]


def reduce(inst: Lin2Instance, delta: float, noise: float = DEFAULT_NOISE) -> ReductionMarket:
    if not delta > 0:
        raise ValidationError("delta must be positive")
    occ = inst.occurrences()
    men, alpha_m, var_types = [], [], {}
    for i in range(1, inst.n + 1):
        for b in (0, 1):
            var_types[(i, b)] = len(men)
            men.append(f"x{i}_{b}")
            alpha_m.append(4.0 * occ[i - 1])
    women, alpha_w, switch_types, eq_types = [], [], {}, {}
    for i in range(1, inst.n + 1):
        switch_types[i] = len(women)
        women.append(f"s{i}")
        alpha_w.append(4.0 * occ[i - 1])
    for ell in range(inst.m):
        for pat in PATTERNS:
            eq_types[(ell, pat)] = len(women)
            women.append(f"e{ell + 1}_{''.join(map(str, pat))}")
            alpha_w.append(3.0)

    switch_pay = PointMass(2.0 * (1.0 + 2.0 * delta), noise)
    unit = PointMass(1.0, noise)
    zero = PointMass(0.0, noise)
    table = [[zero] * len(women) for _ in men]
    for i in range(1, inst.n + 1):
        for b in (0, 1):
            table[var_types[(i, b)]][switch_types[i]] = switch_pay
    for ell, (i, j, k, rhs) in enumerate(inst.equations):
        for pat in PATTERNS:
            values = pattern_assignment(pat, rhs)
            for v, val in zip((i, j, k), values):
                table[var_types[(v, val)]][eq_types[(ell, pat)]] = unit
    spec = build_market(men, women, alpha_m, alpha_w, delta, table)
    return ReductionMarket(inst, spec, float(delta), var_types, switch_types, eq_types)


def complete_bound(m: int, delta, eps=0) -> Fraction:
    """Welfare guaranteed when all but an eps fraction of equations are satisfiable."""
    d, e = Fraction(delta), Fraction(eps)
    return (36 + 48 * d - 12 * e) * m / (1 + d)


def soundness_bound(m: int, delta, eps=0) -> Fraction:
    """Welfare ceiling when at most (1/2 + eps) of the equations are satisfiable."""
    d, e = Fraction(delta), Fraction(eps)
    return (Fraction(69, 2) + 48 * d + 3 * e) * m / (1 + d)


def assignment_formula(inst: Lin2Instance, delta, satisfied: int) -> Fraction:
    d = Fraction(delta)
    return 2 * (1 + 2 * d) / (1 + d) * 4 * sum(inst.occurrences()) + 12 * satisfied / (1 + d)


@dataclass
class AssignmentDesign:
    welfare: Fraction
    satisfied: int
    flows: dict[tuple[int, int], Fraction]
    assortment: AssortmentSet


def assignment_welfare(rm: ReductionMarket, assignment) -> AssignmentDesign:
    """One-sided welfare of the design that routes flows by a variable assignment.

    The copy of x_i disagreeing with the assignment is shown only the switch
    type; for each satisfied equation, the agreeing copies serve every
    equation type whose assignment shares their value. Unsatisfied equations
    are left unserved. Every shown pair accepts, each type with a partner
    meets at total rate 1, and flows are computed exactly in rationals.
    """
    inst = rm.instance
    if len(assignment) != inst.n or any(x not in (0, 1) for x in assignment):
        raise ValidationError(f"assignment must be {inst.n} bits")
    d = Fraction(rm.delta)
    occ = inst.occurrences()
    flows: dict[tuple[int, int], Fraction] = {}
    payoff: dict[tuple[int, int], Fraction] = {}
    for i in range(1, inst.n + 1):
        pair = (rm.var_types[(i, 1 - assignment[i - 1])], rm.switch_types[i])
        flows[pair] = 4 * occ[i - 1] / (1 + d)
        payoff[pair] = 2 * (1 + 2 * d)
    for ell, (i, j, k, rhs) in enumerate(inst.equations):
        if assignment[i - 1] ^ assignment[j - 1] ^ assignment[k - 1] != rhs:
            continue
        for pat in PATTERNS:
            values = pattern_assignment(pat, rhs)
            partners = [
                rm.var_types[(v, val)]
                for v, val in zip((i, j, k), values)
                if assignment[v - 1] == val
            ]
            # an equation type with any agreeing variable copy meets at rate 1
            for man in partners:
                pair = (man, rm.eq_types[(ell, pat)])
                flows[pair] = flows.get(pair, Fraction(0)) + Fraction(3) / (1 + d) / len(partners)
                payoff[pair] = Fraction(1)
    welfare = sum(flows[p] * payoff[p] for p in flows)
    spec = rm.spec
    alpha_m = [Fraction(a) for a in spec.alpha_men]
    alpha_w = [Fraction(a) for a in spec.alpha_women]
    out_m = [Fraction(0)] * spec.n_men
    out_w = [Fraction(0)] * spec.n_women
    for (i, j), g in flows.items():
        out_m[i] += g
        out_w[j] += g

    def mass(alpha: Fraction, total: Fraction) -> Fraction:
        # accept-all stationarity: total = alpha * L / (delta + L), solved for the mass
        if total == 0:
            return alpha / d
        rate = d * total / (alpha - total)
        return alpha / (d + rate)

    mass_m = [mass(a, t) for a, t in zip(alpha_m, out_m)]
    mass_w = [mass(a, t) for a, t in zip(alpha_w, out_w)]
    lam_m = np.zeros((spec.n_men, spec.n_women))
    lam_w = np.zeros((spec.n_men, spec.n_women))
    for (i, j), g in flows.items():
        lam_m[i, j] = float(g / mass_m[i])
        lam_w[i, j] = float(g / mass_w[j])
    return AssignmentDesign(welfare, inst.satisfied(assignment), flows,
                            AssortmentSet(lam_m, lam_w))


def parse_instance(text: str, source: str = "<instance>") -> Lin2Instance:
    """One equation per line as ``i j k b``; blank lines and ``#`` comments skipped."""
    eqs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise SchemaError(f"expected 'i j k b', got {raw.strip()!r}", f"{source}:{lineno}")
        try:
            i, j, k, b = (int(p) for p in parts)
        except ValueError:
            raise SchemaError(f"non-integer field in {raw.strip()!r}", f"{source}:{lineno}") from None
        eqs.append((i, j, k, b))
    if not eqs:
        raise SchemaError("instance has no equations", source)
    n = max(max(e[:3]) for e in eqs)
    return Lin2Instance(n, tuple(eqs))


def load_instance(path: str | Path) -> Lin2Instance:
    return parse_instance(Path(path).read_text(encoding="utf-8"), str(path))


def random_instance(rng: np.random.Generator, n: int, m: int) -> Lin2Instance:
    """Random instance in which every variable occurs at least once."""
    if n < 3:
        raise ValidationError("need at least three variables")
    if 3 * m < n:
        raise ValidationError(f"{m} equations cannot use all {n} variables")
    while True:
        eqs = []
        for _ in range(m):
            i, j, k = (int(v) + 1 for v in rng.choice(n, size=3, replace=False))
            eqs.append((i, j, k, int(rng.integers(0, 2))))
        used = {v for e in eqs for v in e[:3]}
        if len(used) == n:
            return Lin2Instance(n, tuple(eqs))
