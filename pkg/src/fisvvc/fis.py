"""Mamdani fuzzy inference: fuzzification, rule firing, min-clip, max-aggregation
and centroid defuzzification.

Everything here is immutable after construction, so a :class:`RuleBase` can be
shared freely between controllers and threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError

DEFAULT_RESOLUTION = 1001


@dataclass(frozen=True)
class MembershipFunction:
    """Trapezoid ``a <= b <= c <= d``.

    Triangles have ``b == c``; crisp singletons have all four equal.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        pts = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(p) for p in pts):
            raise ConfigError(f"non-finite breakpoint in {pts}")
        if not (self.a <= self.b <= self.c <= self.d):
            raise ConfigError(f"breakpoints must satisfy a <= b <= c <= d, got {pts}")

    @classmethod
    def trapezoid(cls, a: float, b: float, c: float, d: float) -> "MembershipFunction":
        return cls(float(a), float(b), float(c), float(d))

    @classmethod
    def triangle(cls, a: float, b: float, c: float) -> "MembershipFunction":
        return cls(float(a), float(b), float(b), float(c))

    @classmethod
    def singleton(cls, x: float) -> "MembershipFunction":
        x = float(x)
        return cls(x, x, x, x)

    @property
    def points(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    @property
    def is_singleton(self) -> bool:
        return self.a == self.d

    @property
    def center(self) -> float:
        return 0.5 * (self.b + self.c)

    def degree(self, x: float) -> float:
        a, b, c, d = self.a, self.b, self.c, self.d
        if x < a or x > d:
            return 0.0
        if b <= x <= c:
            return 1.0
        if x < b:
            return (x - a) / (b - a)
        return (d - x) / (d - c)

    def degrees(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        a, b, c, d = self.a, self.b, self.c, self.d
        out = np.zeros_like(xs)
        out[(xs >= b) & (xs <= c)] = 1.0
        if b > a:
            m = (xs > a) & (xs < b)
            out[m] = (xs[m] - a) / (b - a)
        if d > c:
            m = (xs > c) & (xs < d)
            out[m] = (d - xs[m]) / (d - c)
        return out

    def segments(self, height: float = 1.0) -> list[tuple[float, float, float, float]]:
        """Linear pieces ``(x0, x1, y0, y1)`` of ``min(height, mu(x))`` over the support."""
        a, b, c, d = self.a, self.b, self.c, self.d
        h = min(max(height, 0.0), 1.0)
        if h == 0.0 or a == d:
            return []
        x_up = a + h * (b - a)
        x_down = d - h * (d - c)
        segs = []
        if x_up > a:
            segs.append((a, x_up, 0.0, h))
        if x_down > x_up:
            segs.append((x_up, x_down, h, h))
        if d > x_down:
            segs.append((x_down, d, h, 0.0))
        return segs


def membership(mf: MembershipFunction, x: float) -> float:
    return mf.degree(x)


@dataclass(frozen=True)
class LinguisticVariable:
    name: str
    universe: tuple[float, float]
    sets: Mapping[str, MembershipFunction]
    unit: str = ""
    role: str = "input"
    aliases: tuple[str, ...] = ()
    # value returned for an output when no rule fires
    neutral: float | None = None

    def __post_init__(self):
        lo, hi = self.universe
        if not lo < hi:
            raise ConfigError(f"variable {self.name}: empty universe {self.universe}")
        if not self.sets:
            raise ConfigError(f"variable {self.name}: no fuzzy sets declared")
        for set_name, mf in self.sets.items():
            if mf.a < lo or mf.d > hi:
                raise ConfigError(
                    f"variable {self.name}: set {set_name} support [{mf.a}, {mf.d}] "
                    f"outside universe [{lo}, {hi}]", token=set_name)
        if self.neutral is not None and not lo <= self.neutral <= hi:
            raise ConfigError(f"variable {self.name}: neutral value outside universe")
        object.__setattr__(self, "sets", dict(self.sets))

    def clamp(self, x: float) -> float:
        lo, hi = self.universe
        return min(max(float(x), lo), hi)

    @property
    def width(self) -> float:
        return self.universe[1] - self.universe[0]

    @property
    def neutral_value(self) -> float:
        if self.neutral is not None:
            return self.neutral
        lo, hi = self.universe
        return min(max(0.0, lo), hi)


def fuzzify(var: LinguisticVariable, x: float) -> dict[str, float]:
    """Degree of ``x`` in every set of ``var``; ``x`` is clamped to the universe first."""
    x = var.clamp(x)
    return {name: mf.degree(x) for name, mf in var.sets.items()}


@dataclass(frozen=True)
class Clause:
    variable: str
    term: str
    negated: bool = False


@dataclass(frozen=True)
class Rule:
    antecedents: tuple[Clause, ...]
    consequents: tuple[Clause, ...]
    line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(self.antecedents))
        object.__setattr__(self, "consequents", tuple(self.consequents))
        if not self.antecedents:
            raise ConfigError("rule needs at least one antecedent", line=self.line)
        if not self.consequents:
            raise ConfigError("rule needs at least one consequent", line=self.line)


def evaluate_rule(rule: Rule, fuzzified: Mapping[str, Mapping[str, float]]) -> float:
    """Firing strength: min over clauses, a negated clause contributing ``1 - degree``."""
    strength = 1.0
    for clause in rule.antecedents:
        try:
            deg = fuzzified[clause.variable][clause.term]
        except KeyError:
            raise ConfigError(
                f"no degree for ({clause.variable} is {clause.term})",
                line=rule.line, token=clause.term if clause.variable in fuzzified else clause.variable,
            ) from None
        if clause.negated:
            deg = 1.0 - deg
        strength = min(strength, deg)
    return strength


@dataclass(frozen=True)
class RuleBase:
    inputs: Mapping[str, LinguisticVariable]
    outputs: Mapping[str, LinguisticVariable]
    rules: tuple[Rule, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", dict(self.inputs))
        object.__setattr__(self, "outputs", dict(self.outputs))
        object.__setattr__(self, "rules", tuple(self.rules))

    def input_named(self, name: str) -> LinguisticVariable | None:
        return _lookup(self.inputs, name)

    def output_named(self, name: str) -> LinguisticVariable | None:
        return _lookup(self.outputs, name)


def _lookup(variables: Mapping[str, LinguisticVariable], name: str) -> LinguisticVariable | None:
    if name in variables:
        return variables[name]
    for var in variables.values():
        if name in var.aliases:
            return var
    return None


# -- defuzzification ---------------------------------------------------------

def centroid_grid(var: LinguisticVariable, clipped: Iterable[tuple[MembershipFunction, float]],
                  resolution: int = DEFAULT_RESOLUTION) -> float | None:
    """Centroid of the max-aggregated clipped sets on a uniform grid.

    Returns None when the aggregate has no area on the grid.
    """
    lo, hi = var.universe
    xs = np.linspace(lo, hi, resolution)
    agg = np.zeros_like(xs)
    for mf, alpha in clipped:
        np.maximum(agg, np.minimum(alpha, mf.degrees(xs)), out=agg)
    # trapezoidal weights: shoulders ending on the universe bounds count half
    w = np.ones_like(xs)
    w[0] = w[-1] = 0.5
    total = np.dot(w, agg)
    if total <= 0.0:
        return None
    return float(np.dot(w * xs, agg) / total)


def centroid_exact(clipped: Iterable[tuple[MembershipFunction, float]]) -> float | None:
    """Centroid of the max-aggregated clipped sets by exact piecewise-linear integration.

    The upper envelope of clipped trapezoids is piecewise linear; splitting at every
    vertex and at every pairwise crossing leaves intervals on which one line dominates.
    """
    lines_by_set = [mf.segments(alpha) for mf, alpha in clipped]
    lines_by_set = [s for s in lines_by_set if s]
    if not lines_by_set:
        return None
    knots = sorted({x for segs in lines_by_set for seg in segs for x in seg[:2]})
    area = 0.0
    moment = 0.0
    for x0, x1 in zip(knots[:-1], knots[1:]):
        if x1 <= x0:
            continue
        mid = 0.5 * (x0 + x1)
        lines = []
        for segs in lines_by_set:
            for sx0, sx1, sy0, sy1 in segs:
                if sx0 <= mid <= sx1:
                    slope = (sy1 - sy0) / (sx1 - sx0)
                    lines.append((slope, sy0 - slope * sx0))
                    break
        if not lines:
            continue
        cuts = {x0, x1}
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                ds = lines[i][0] - lines[j][0]
                if ds != 0.0:
                    xc = (lines[j][1] - lines[i][1]) / ds
                    if x0 < xc < x1:
                        cuts.add(xc)
        pts = sorted(cuts)
        for u0, u1 in zip(pts[:-1], pts[1:]):
            um = 0.5 * (u0 + u1)
            slope, icpt = max(lines, key=lambda ln: ln[0] * um + ln[1])
            y0 = slope * u0 + icpt
            y1 = slope * u1 + icpt
            h = u1 - u0
            area += 0.5 * (y0 + y1) * h
            moment += h * (u0 * (2 * y0 + y1) + u1 * (y0 + 2 * y1)) / 6.0
    if area <= 0.0:
        return None
    return moment / area


@dataclass(frozen=True)
class Inference:
    fuzzified: dict[str, dict[str, float]]
    activations: tuple[float, ...]
    outputs: dict[str, float]
    fired: dict[str, bool]


def explain(rb: RuleBase, inputs: Mapping[str, float], resolution: int | None = None) -> Inference:
    """Run the full Mamdani pipeline and keep the intermediate values.

    ``resolution=None`` integrates the aggregate exactly; an integer uses a uniform
    grid of that many points.
    """
    if not rb.rules:
        raise ConfigError("rulebase has no rules")
    fuzzified: dict[str, dict[str, float]] = {}
    for name, var in rb.inputs.items():
        value = _input_value(inputs, var)
        fuzzified[name] = fuzzify(var, value)
    for name, var in rb.inputs.items():
        for alias in var.aliases:
            fuzzified.setdefault(alias, fuzzified[name])

    activations = tuple(evaluate_rule(rule, fuzzified) for rule in rb.rules)
    outputs: dict[str, float] = {}
    fired: dict[str, bool] = {}
    for name, var in rb.outputs.items():
        clipped = []
        for rule, alpha in zip(rb.rules, activations):
            if alpha <= 0.0:
                continue
            for clause in rule.consequents:
                if _lookup(rb.outputs, clause.variable) is var:
                    try:
                        clipped.append((var.sets[clause.term], alpha))
                    except KeyError:
                        raise ConfigError(f"output {name} has no set {clause.term}",
                                          line=rule.line, token=clause.term) from None
        value = None
        if clipped:
            if resolution is None:
                value = centroid_exact(clipped)
            else:
                value = centroid_grid(var, clipped, resolution)
            if value is None:
                # only zero-area consequents (singletons) fired
                weight = sum(a for _, a in clipped)
                value = sum(mf.center * a for mf, a in clipped) / weight
        fired[name] = value is not None
        outputs[name] = var.neutral_value if value is None else value
    return Inference(fuzzified, activations, outputs, fired)


def infer(rb: RuleBase, inputs: Mapping[str, float], resolution: int | None = None) -> dict[str, float]:
    return explain(rb, inputs, resolution).outputs


def _input_value(inputs: Mapping[str, float], var: LinguisticVariable) -> float:
    for key in (var.name, *var.aliases):
        if key in inputs:
            value = float(inputs[key])
            if not math.isfinite(value):
                raise ConfigError(f"input {var.name} is not finite", token=var.name)
            return value
    raise ConfigError(f"missing crisp value for input {var.name}", token=var.name)
