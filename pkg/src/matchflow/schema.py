"""JSON file formats for markets and assortments."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticError

from .dist import DEFAULT_NOISE, Mixture, Normal, PointMass, Uniform, UtilityDist
from .errors import SchemaError, ValidationError
from .market import AssortmentSet, MarketSpec, build_market

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NormalLit(_Strict):
    kind: Literal["normal"]
    mean: float
    stddev: float


class UniformLit(_Strict):
    kind: Literal["uniform"]
    lo: float
    hi: float


class PointMassLit(_Strict):
    kind: Literal["point_mass"]
    value: float
    width: float = DEFAULT_NOISE


class MixtureLit(_Strict):
    kind: Literal["mixture"]
    weights: list[float]
    components: list["DistLit"]


DistLit = Annotated[
    Union[NormalLit, UniformLit, PointMassLit, MixtureLit], Field(discriminator="kind")
]
MixtureLit.model_rebuild()


class TypeLit(_Strict):
    label: str
    arrival: float


class PairLit(_Strict):
    man: str
    woman: str
    d: DistLit


class MarketFile(_Strict):
    version: Literal[1]
    delta: float
    men: list[TypeLit]
    women: list[TypeLit]
    dist: list[PairLit]


class RateLit(_Strict):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    from_: str = Field(alias="from")
    to: str
    rate: float


class AssortmentFile(_Strict):
    version: Literal[1]
    rates: list[RateLit]


def _path(loc: tuple) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def _parse(model: type[BaseModel], data: Any) -> BaseModel:
    try:
        return model.model_validate(data)
    except PydanticError as exc:
        err = exc.errors()[0]
        # drop the discriminator tag pydantic inserts into union paths
        loc = tuple(p for p in err["loc"] if p not in ("normal", "uniform", "point_mass", "mixture"))
        raise SchemaError(err["msg"], _path(loc)) from None


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "<root>") from None


def dist_from_lit(lit) -> UtilityDist:
    try:
        if lit.kind == "normal":
            return Normal(lit.mean, lit.stddev)
        if lit.kind == "uniform":
            return Uniform(lit.lo, lit.hi)
        if lit.kind == "point_mass":
            return PointMass(lit.value, lit.width)
        return Mixture(tuple(lit.weights), tuple(dist_from_lit(c) for c in lit.components))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def dist_to_dict(d: UtilityDist) -> dict:
    if isinstance(d, Normal):
        return {"kind": "normal", "mean": d.mean, "stddev": d.stddev}
    if isinstance(d, Uniform):
        return {"kind": "uniform", "lo": d.lo, "hi": d.hi}
    if isinstance(d, PointMass):
        return {"kind": "point_mass", "value": d.value, "width": d.width}
    return {
        "kind": "mixture",
        "weights": list(d.weights),
        "components": [dist_to_dict(c) for c in d.components],
    }


def market_from_dict(data: Any) -> MarketSpec:
    mf: MarketFile = _parse(MarketFile, data)
    if not mf.delta > 0:
        raise ValidationError("delta must be positive")
    men = [t.label for t in mf.men]
    women = [t.label for t in mf.women]
    mi = {lab: i for i, lab in enumerate(men)}
    wi = {lab: j for j, lab in enumerate(women)}
    table: list[list[UtilityDist | None]] = [[None] * len(women) for _ in men]
    for k, p in enumerate(mf.dist):
        if p.man not in mi:
            raise SchemaError(f"unknown man type {p.man!r}", f"dist.{k}.man")
        if p.woman not in wi:
            raise SchemaError(f"unknown woman type {p.woman!r}", f"dist.{k}.woman")
        if table[mi[p.man]][wi[p.woman]] is not None:
            raise ValidationError(f"duplicate distribution for pair ({p.man}, {p.woman})")
        table[mi[p.man]][wi[p.woman]] = dist_from_lit(p.d)
    return build_market(
        men, women, [t.arrival for t in mf.men], [t.arrival for t in mf.women], mf.delta, table
    )


def market_to_dict(spec: MarketSpec) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "delta": spec.delta,
        "men": [{"label": t.label, "arrival": a} for t, a in zip(spec.men, spec.alpha_men)],
        "women": [
            {"label": t.label, "arrival": a} for t, a in zip(spec.women, spec.alpha_women)
        ],
        "dist": [
            {"man": m.label, "woman": w.label, "d": dist_to_dict(spec.dists[i][j])}
            for i, m in enumerate(spec.men)
            for j, w in enumerate(spec.women)
        ],
    }


def dumps(obj: Any) -> str:
    # json uses repr for floats, which round-trips every double exactly
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def load_market(path: str | Path) -> MarketSpec:
    return market_from_dict(_read_json(path))


def save_market(spec: MarketSpec, path: str | Path) -> None:
    Path(path).write_text(dumps(market_to_dict(spec)), encoding="utf-8")


def assortment_from_dict(data: Any, spec: MarketSpec) -> AssortmentSet:
    af: AssortmentFile = _parse(AssortmentFile, data)
    mi = {t.label: t.index for t in spec.men}
    wi = {t.label: t.index for t in spec.women}
    out = AssortmentSet.zeros(spec)
    for k, r in enumerate(af.rates):
        if r.from_ in mi and r.to in wi:
            out.men[mi[r.from_], wi[r.to]] = r.rate
        elif r.from_ in wi and r.to in mi:
            out.women[mi[r.to], wi[r.from_]] = r.rate
        else:
            raise SchemaError(
                f"rate must connect a man type and a woman type, got {r.from_!r} -> {r.to!r}",
                f"rates.{k}",
            )
        if not (np.isfinite(r.rate) and r.rate >= 0):
            raise ValidationError(f"rate {r.from_} -> {r.to} must be finite and nonnegative")
    return out


def assortment_to_dict(spec: MarketSpec, a: AssortmentSet) -> dict:
    rates = []
    for i, m in enumerate(spec.men):
        for j, w in enumerate(spec.women):
            if a.men[i, j] > 0:
                rates.append({"from": m.label, "to": w.label, "rate": float(a.men[i, j])})
    for j, w in enumerate(spec.women):
        for i, m in enumerate(spec.men):
            if a.women[i, j] > 0:
                rates.append({"from": w.label, "to": m.label, "rate": float(a.women[i, j])})
    return {"version": SCHEMA_VERSION, "rates": rates}


def load_assortment(path: str | Path, spec: MarketSpec) -> AssortmentSet:
    data = _read_json(path)
    # design outputs embed the assortment under a key; accept both layouts
    if isinstance(data, dict) and "assortment" in data and "rates" not in data:
        data = data["assortment"]
    return assortment_from_dict(data, spec)


def save_assortment(spec: MarketSpec, a: AssortmentSet, path: str | Path) -> None:
    Path(path).write_text(dumps(assortment_to_dict(spec, a)), encoding="utf-8")
