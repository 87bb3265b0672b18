"""Built-in problem families and their lower/upper solutions.

* pendulum with curvature:  ``(x'/sqrt(1+x'^2))' + mu sin x - ell(t,x) x' = e``
* singular attractive:      ``x'' + p x^(-lambda) = e``
* Duffing type:             ``x'' + p g(x) - q h(x') = e``

Each builder returns a :class:`BuiltProblem`: the standard-form
right-hand side, the bracket (alpha, beta) on a grid and the shift
parameters the construction prescribes.  Problems can also be described
by JSON (see :func:`build_problem`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .conditions import Bracket
from .expr import Expression, ExpressionError
from .funcspace import GridFunction, cumulative_integral, differentiate_array, interp, nodes, check_n
from .operator import ProblemDef

Coef = Callable[[np.ndarray], np.ndarray]

FINE = np.linspace(0.0, 1.0, 4097)  # where coefficient extrema are sampled


class ProblemSpecError(ValueError):
    """A problem description is malformed or violates the family's hypotheses."""


# ---------------------------------------------------------------------------
# coefficients


def coefficient(value, name: str = "coefficient", variables=("t",)) -> Callable:
    """Turn a number, an expression string or grid samples into a callable."""
    if isinstance(value, bool):
        raise ProblemSpecError(f"{name}: boolean is not a coefficient")
    if isinstance(value, (int, float)):
        v = float(value)
        return lambda *args: np.full(np.broadcast(*[np.asarray(a) for a in args]).shape, v)
    if isinstance(value, str):
        try:
            return Expression(value, variables)
        except ExpressionError as exc:
            raise ProblemSpecError(f"{name}: {exc}") from None
    if callable(value):
        return value
    if isinstance(value, (list, tuple, np.ndarray)) and variables == ("t",):
        arr = np.asarray(value, dtype=float)
        try:
            check_n(arr.size - 1)
        except ValueError as exc:
            raise ProblemSpecError(f"{name}: grid samples need n+1 values with n >= 16 even ({exc})") from None
        g = GridFunction(arr)
        return lambda t: interp(g, np.clip(t, 0.0, 1.0))
    raise ProblemSpecError(f"{name}: cannot interpret {value!r}")


def mean(fn: Coef) -> float:
    """``int_0^1 fn``, accurate to rounding for smooth ``fn``."""
    return float(cumulative_integral(fn, 256)[-1])


def fine_max(fn: Coef) -> float:
    return float(np.max(fn(FINE)))


def fine_min(fn: Coef) -> float:
    return float(np.min(fn(FINE)))


def _constant_bracket(value: float, n: int) -> GridFunction:
    z = np.zeros(n + 1)
    return GridFunction(np.full(n + 1, value), z, z, periodic=True)


@dataclass
class BuiltProblem:
    """A problem in standard form with its bracket and prescribed shift."""

    family: str
    prob: ProblemDef
    bracket: Bracket
    a: Optional[float] = None
    b: Optional[float] = None
    delta: float = 0.0
    Delta: float = 0.0
    invariance_check: Optional[str] = None  # "E1", "E1'" or None
    growth_variant: Optional[int] = None
    c_fun: Any = 0.0
    exact: Optional[Callable] = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.bracket.n


# ---------------------------------------------------------------------------
# pendulum with curvature operator


@dataclass(frozen=True)
class PendulumSpec:
    mu: Coef
    ell: Callable  # (t, x) -> values
    e: Coef
    r: Optional[float] = None
    d: Optional[float] = None

    def ell_bounds(self, points: int = 257):
        t = FINE[::16][:, None]
        x = np.linspace(np.pi / 2, 3 * np.pi / 2, 65)[None, :]
        vals = np.asarray(self.ell(t, x), dtype=float) * np.ones((t.size, x.size))
        return vals.min(axis=1), float(vals.max())

    def resolved(self) -> "PendulumSpec":
        t = FINE[::16]
        mu, e = self.mu(t), self.e(t)
        if np.any(mu < np.abs(e) - 1e-12):
            raise ProblemSpecError("pendulum needs mu(t) >= |e(t)|")
        ell0, ell_max = self.ell_bounds()
        r = self.r
        if r is None:
            if np.any((ell0 <= 0) & (mu > 0)):
                raise ProblemSpecError("no r exists: ell0(t) <= 0 where mu(t) > 0")
            r = float(np.max(np.where(mu > 0, mu / np.where(ell0 > 0, ell0, 1.0), 0.0)))
            r = max(r, 1e-12)
        if r <= 0:
            raise ProblemSpecError("r must be positive")
        if np.any(r * ell0 - mu < -1e-12 * (1 + np.abs(mu))):
            raise ProblemSpecError(f"r * ell0(t) >= mu(t) fails for r={r}")
        d_min = (1.0 + np.pi**2 * r**2) ** 1.5 * ell_max
        d = self.d if self.d is not None else max(d_min, 1e-12)
        if d < d_min - 1e-12 * abs(d_min) or d <= 0:
            raise ProblemSpecError(f"d={d} below (1+pi^2 r^2)^(3/2) ell_max = {d_min}")
        return PendulumSpec(self.mu, self.ell, self.e, float(r), float(d))


def pendulum_to_standard(spec: PendulumSpec, n: int = 256) -> BuiltProblem:
    spec = spec.resolved()
    mu, ell, e = spec.mu, spec.ell, spec.e

    def f(t, x, y):
        return (1.0 + y * y) ** 1.5 * (mu(t) * np.sin(x) - ell(t, x) * y - e(t))

    prob = ProblemDef(f, label="pendulum")
    bracket = Bracket(_constant_bracket(np.pi / 2, n), _constant_bracket(3 * np.pi / 2, n))
    return BuiltProblem(
        "pendulum", prob, bracket, a=spec.r * spec.d, b=-spec.d, invariance_check="E1",
        info={"r": spec.r, "d": spec.d, "slope_bound": np.pi * spec.r},
    )


# ---------------------------------------------------------------------------
# singular attractive nonlinearity


@dataclass(frozen=True)
class SingularSpec:
    p: Coef
    e: Coef
    lam: float
    C: Optional[float] = None

    def resolved(self) -> "SingularSpec":
        if not self.lam > 0:
            raise ProblemSpecError("lambda must be positive")
        if not mean(self.e) > 0:
            raise ProblemSpecError("singular problem needs int e > 0")
        p, e = self.p(FINE), self.e(FINE)
        C = self.C
        if C is None:
            if np.any((p <= 0) & (e > 0)):
                raise ProblemSpecError("no C > 0 with C p(t) >= e(t)")
            ratios = np.where(p > 0, e / np.where(p > 0, p, 1.0), 0.0)
            C = max(float(np.max(ratios)), 1e-12)
        if C <= 0 or np.any(C * p - e < -1e-12 * (1 + np.abs(e))):
            raise ProblemSpecError(f"C p(t) >= e(t) fails for C={C}")
        return SingularSpec(self.p, self.e, float(self.lam), float(C))

    @property
    def c(self) -> float:
        return self.C ** (-1.0 / self.lam)

    @property
    def p_max(self) -> float:
        return float(np.max(np.abs(self.p(FINE))))


def _beta_parts_example1(e: Coef, n: int):
    """Non-constant part of the upper solution for the singular family, with derivatives."""
    t = nodes(n)
    half = 0.5 * mean(e)
    A = cumulative_integral(e, n, weight=lambda s: s)  # int_0^t s e
    W = cumulative_integral(e, n, weight=lambda s: 1.0 - s)
    B = W[-1] - W  # int_t^1 (1-s) e
    values = half * t * (1.0 - t) - ((1.0 - t) * A + t * B)
    first = half * (1.0 - 2.0 * t) + A - B
    second = -2.0 * half + e(t)
    values[0] = values[-1] = 0.0
    return values, first, second


def build_beta_example1(spec: SingularSpec | Coef, m: float, n: int = 256) -> GridFunction:
    e = spec.e if isinstance(spec, SingularSpec) else spec
    v, d1, d2 = _beta_parts_example1(e, n)
    return GridFunction(m + v, d1, d2)


def choose_m_example1(spec: SingularSpec, n: int = 256) -> float:
    spec = spec.resolved()
    two_n = mean(spec.e)
    d = max(spec.c, (spec.p_max / two_n) ** (1.0 / spec.lam))
    v, _, _ = _beta_parts_example1(spec.e, n)
    return float(d - np.min(v))


def singular_to_standard(spec: SingularSpec, n: int = 256, m: float | None = None) -> BuiltProblem:
    spec = spec.resolved()
    p, e, lam, c = spec.p, spec.e, spec.lam, spec.c

    def f(t, x, y):
        return p(t) * x ** (-lam) - e(t)

    def fx(t, x, y):
        return -lam * p(t) * x ** (-lam - 1.0)

    def fy(t, x, y):
        return np.zeros(np.shape(x))

    prob = ProblemDef(f, fx, fy, domain_floor=c, label="singular")
    m = choose_m_example1(spec, n) if m is None else float(m)
    beta = build_beta_example1(spec, m, n)
    bracket = Bracket(_constant_bracket(c, n), beta)
    a = lam * spec.p_max / c ** (lam + 1.0)
    return BuiltProblem(
        "singular", prob, bracket, a=a, b=0.0, invariance_check="E1'",
        info={"c": c, "C": spec.C, "m": m, "p_max": spec.p_max},
    )


# ---------------------------------------------------------------------------
# Duffing type


@dataclass(frozen=True)
class DuffingSpec:
    p: Coef
    q: Coef
    e: Coef
    g: Callable  # x -> values, on (0, inf)
    h: Callable  # y -> values
    c: float
    variant: str = "example3"
    n1: Optional[float] = None
    growth_variant: Optional[int] = None

    def validate(self):
        if self.variant not in ("example2", "example3"):
            raise ProblemSpecError(f"unknown Duffing variant {self.variant!r}")
        if not self.c > 0:
            raise ProblemSpecError("Duffing problems need c > 0")
        p, q, e = self.p(FINE), self.q(FINE), self.e(FINE)
        if np.any(q < 0):
            raise ProblemSpecError("q(t) must be non-negative")
        if abs(float(self.h(np.array(0.0)))) > 1e-12:
            raise ProblemSpecError("h(0) must be 0")
        if np.any(float(self.g(np.array(self.c))) * p - e < -1e-12 * (1 + np.abs(e))):
            raise ProblemSpecError("g(c) p(t) >= e(t) fails")
        e_bar = mean(self.e)
        if not e_bar > 0:
            raise ProblemSpecError("Duffing problems need int e > 0")
        if self.variant == "example2":
            ys = np.linspace(-50, 50, 2001)
            if np.any(self.h(ys) < -1e-12):
                raise ProblemSpecError("example2 needs h >= 0")
        else:
            if np.any(p < 0) or np.any(q < 0) or np.any(e < 0):
                raise ProblemSpecError("example3 needs p, q, e >= 0")
            if not mean(self.q) > 0:
                raise ProblemSpecError("example3 needs int q > 0")
            if not mean(self.p) > 0:
                raise ProblemSpecError("example3 needs int p > 0")
            if not self.h_negative_part() < e_bar / mean(self.q):
                raise ProblemSpecError("example3 needs h(y) > -e_bar/q_bar for |y| <= 2 e_bar")

    def h_negative_part(self) -> float:
        """``max(-h(y))`` over ``|y| <= 2 e_bar``."""
        e_bar = mean(self.e)
        ys = np.linspace(-2 * e_bar, 2 * e_bar, 4001)
        return float(np.max(-np.asarray(self.h(ys), dtype=float)))

    def default_n1(self) -> float:
        e_bar, q_bar = mean(self.e), mean(self.q)
        hneg = self.h_negative_part()
        half = e_bar / (2.0 * q_bar)
        if hneg <= half and half > 0:
            return half
        return 0.5 * (max(hneg, 0.0) + e_bar / q_bar)

    def detect_growth_variant(self) -> int:
        """1 if ``y h(y) >= 0`` far out (so ``y f1 <= 0``), else 2."""
        ys = np.array([-1e4, -1e3, 1e3, 1e4])
        return 1 if np.all(ys * self.h(ys) >= 0) else 2


def _threshold(fn: Callable, target: float, start: float) -> float:
    """Smallest scanned ``d >= start`` with ``fn(x) <= target`` on ``[d, 1e6 (1 + d)]``."""
    d = start
    for _ in range(200):
        xs = np.geomspace(d, 1e6 * (1.0 + d), 512)
        if np.all(np.asarray(fn(xs), dtype=float) <= target):
            return d
        d *= 1.25
    raise ProblemSpecError("could not find a threshold where the upper solution inequality holds")


def build_beta_example3(spec: DuffingSpec, n1: float, m: float, n: int = 256) -> GridFunction:
    e_bar, q_bar, p_bar = mean(spec.e), mean(spec.q), mean(spec.p)
    if not p_bar > 0:
        raise ProblemSpecError("need int p > 0")
    if not (0 < n1 < e_bar / q_bar):
        raise ProblemSpecError(f"need 0 < n1 < e_bar/q_bar = {e_bar / q_bar}")
    if spec.h_negative_part() > n1 + 1e-12:
        raise ProblemSpecError("need -h(y) <= n1 for |y| <= 2 e_bar")
    n2 = (e_bar - q_bar * n1) / p_bar
    p, q, e = spec.p, spec.q, spec.e

    def w(s):
        return n1 * q(s) + n2 * p(s) - e(s)

    t = nodes(n)
    A = cumulative_integral(w, n, weight=lambda s: s)
    Wc = cumulative_integral(w, n, weight=lambda s: 1.0 - s)
    B = Wc[-1] - Wc
    values = m + (1.0 - t) * A + t * B
    values[0] = values[-1] = m
    first = -A + B
    second = -w(t)
    if np.max(np.abs(first)) > 2 * e_bar * (1 + 1e-9):
        raise ProblemSpecError("|beta'| <= 2 e_bar violated")
    return GridFunction(values, first, second)


def duffing_to_standard(spec: DuffingSpec, n: int = 256, m: float | None = None) -> BuiltProblem:
    spec.validate()
    p, q, e, g, h, c = spec.p, spec.q, spec.e, spec.g, spec.h, spec.c

    def f1(t, x, y):
        return -q(t) * h(y)

    def f2(t, x, y):
        return p(t) * g(np.maximum(x, c)) - e(t) + 0.0 * y

    def f(t, x, y):
        return p(t) * g(x) - q(t) * h(y) - e(t)

    prob = ProblemDef(f, domain_floor=c, label=f"duffing-{spec.variant}", f1=f1, f2=f2)
    p_max = float(np.max(p(FINE)))
    e_bar = mean(e)
    info: dict = {"c": c, "e_bar": e_bar}
    if spec.variant == "example2":
        nonm, _, _ = _beta_parts_example1(e, n)
        if m is None:
            d = _threshold(lambda x: p_max * g(x), e_bar, c) if p_max > 0 else c
            m = float(max(d, c) - np.min(nonm))
        beta = build_beta_example1(e, m, n)
    else:
        n1 = spec.n1 if spec.n1 is not None else spec.default_n1()
        n2 = (e_bar - mean(q) * n1) / mean(p)
        if m is None:
            zero = build_beta_example3(spec, n1, 0.0, n).values
            d = _threshold(g, n2, c)
            m = float(max(d, c) - np.min(zero))
        beta = build_beta_example3(spec, n1, m, n)
        info.update(n1=n1, n2=n2)
    info["m"] = m
    bracket = Bracket(_constant_bracket(c, n), beta)
    variant = spec.growth_variant or spec.detect_growth_variant()
    return BuiltProblem(
        f"duffing-{spec.variant}", prob, bracket, growth_variant=variant, c_fun=0.0, info=info
    )


# ---------------------------------------------------------------------------
# custom problems


def _curve(doc: dict, key: str, n: int) -> GridFunction:
    """Bracket curve from an expression/number, with optional derivative expressions."""
    t = nodes(n)
    spec = doc[key]
    if isinstance(spec, str) and spec.endswith(".csv"):
        g = GridFunction.from_csv(spec)
        if g.n != n:
            raise ProblemSpecError(f"{key}: CSV grid n={g.n} does not match n={n}")
        values = g.values
        first = g.derivative
    else:
        values = coefficient(spec, key)(t)
        first = None
    if f"{key}_prime" in doc:
        first = coefficient(doc[f"{key}_prime"], f"{key}_prime")(t)
    elif first is None:
        first = differentiate_array(values)
    if f"{key}_second" in doc:
        second = coefficient(doc[f"{key}_second"], f"{key}_second")(t)
    else:
        second = differentiate_array(first)
    return GridFunction(values, first, second)


def custom_to_standard(doc: dict, n: int = 256) -> BuiltProblem:
    try:
        f = Expression(doc["f"], ("t", "x", "y"))
        fx = Expression(doc["fx"], ("t", "x", "y")) if "fx" in doc else None
        fy = Expression(doc["fy"], ("t", "x", "y")) if "fy" in doc else None
    except ExpressionError as exc:
        raise ProblemSpecError(str(exc)) from None
    prob = ProblemDef(f, fx, fy, domain_floor=doc.get("domain_floor"), label=doc.get("label", "custom"))
    bracket = Bracket(_curve(doc, "alpha", n), _curve(doc, "beta", n))
    return BuiltProblem(
        "custom", prob, bracket, a=doc.get("a"), b=doc.get("b"),
        delta=float(doc.get("delta", 0.0)), Delta=float(doc.get("Delta", 0.0)),
        invariance_check=doc.get("check", "E1"), growth_variant=doc.get("growth_variant"),
        c_fun=doc.get("c_fun", 0.0),
    )


# ---------------------------------------------------------------------------
# JSON documents


def _g_from_doc(value) -> Callable:
    if isinstance(value, dict):
        kind = value.get("preset")
        if kind == "power":
            lam = float(value["lambda"])
            return lambda x: np.asarray(x, dtype=float) ** (-lam)
        raise ProblemSpecError(f"unknown g preset {kind!r}")
    return coefficient(value, "g", ("x",))


def _h_from_doc(value) -> Callable:
    if isinstance(value, dict):
        kind = value.get("preset")
        if kind == "cubic":
            mu, nu, k = float(value["mu"]), float(value["nu"]), int(value.get("k", 1))
            return lambda y: mu * np.asarray(y, dtype=float) ** (2 * k + 1) - nu * np.asarray(y, dtype=float)
        if kind == "two_branch":
            l1, l2 = float(value["lambda1"]), float(value["lambda2"])

            def h(y):
                y = np.asarray(y, dtype=float)
                return np.where(y < 0, np.abs(y) ** l1, np.abs(y) ** l2)

            return h
        raise ProblemSpecError(f"unknown h preset {kind!r}")
    return coefficient(value, "h", ("y",))


def _require(doc: dict, *keys):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ProblemSpecError(f"{doc.get('family')} problem is missing {', '.join(missing)}")


def build_problem(doc: dict, n: int = 256) -> BuiltProblem:
    """Build a problem from its JSON description."""
    if not isinstance(doc, dict) or "family" not in doc:
        raise ProblemSpecError("problem document needs a 'family' field")
    n = check_n(n)
    family = doc["family"]
    if family == "pendulum":
        _require(doc, "mu", "e", "ell")
        spec = PendulumSpec(
            coefficient(doc["mu"], "mu"), coefficient(doc["ell"], "ell", ("t", "x")),
            coefficient(doc["e"], "e"), doc.get("r"), doc.get("d"),
        )
        built = pendulum_to_standard(spec, n)
        if "exact" in doc:
            built.exact = coefficient(doc["exact"], "exact")
    elif family == "singular":
        _require(doc, "p", "e", "lambda")
        spec = SingularSpec(coefficient(doc["p"], "p"), coefficient(doc["e"], "e"), float(doc["lambda"]), doc.get("C"))
        built = singular_to_standard(spec, n, doc.get("m"))
    elif family == "duffing":
        _require(doc, "p", "q", "e", "g", "h", "c")
        spec = DuffingSpec(
            coefficient(doc["p"], "p"), coefficient(doc["q"], "q"), coefficient(doc["e"], "e"),
            _g_from_doc(doc["g"]), _h_from_doc(doc["h"]), float(doc["c"]),
            doc.get("variant", "example3"), doc.get("n1"), doc.get("growth_variant"),
        )
        built = duffing_to_standard(spec, n, doc.get("m"))
    elif family == "custom":
        _require(doc, "f", "alpha", "beta")
        built = custom_to_standard(doc, n)
    else:
        raise ProblemSpecError(f"unknown family {family!r}")
    for key in ("a", "b"):
        if key in doc and family != "custom":
            setattr(built, key, float(doc[key]))
    if "exact" in doc and built.exact is None:
        built.exact = coefficient(doc["exact"], "exact")
    built.info["name"] = doc.get("name", family)
    return built


def preset_names() -> list[str]:
    folder = resources.files("pbvp") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_problem(source: str | Path) -> dict:
    """Read a problem document from a path or a preset name.

    Raises ``json.JSONDecodeError`` (with line/column) on malformed JSON.
    """
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        name = path.name[:-5] if path.name.endswith(".json") else path.name
        res = resources.files("pbvp") / "presets" / f"{name}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no problem file or preset named {source!r}")
        text = res.read_text()
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc.setdefault("name", path.stem)
    return doc
