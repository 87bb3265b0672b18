"""Numerical checks of the lower/upper-solution hypotheses.

Every check returns a :class:`MarginRecord`: the minimal slack of the
inequality over the sampled set, where it was attained, and whether it
passed (``margin >= -atol``).  Checks over infinite-dimensional sets
(the invariant set ``A_Delta``) or over asymptotic limits are sampled and
say so in ``kind``; they can falsify a hypothesis but never prove it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import kernel
from .funcspace import GridError, GridFunction, _exp_moments, nodes
from .kernel import LinearParams
from .operator import ProblemDef

EXACT = "grid"
SAMPLED = "sampled"
ASYMPTOTIC = "sampled asymptotic"


def tolerance(*arrays) -> float:
    scale = 0.0
    for arr in arrays:
        a = np.asarray(arr, dtype=float)
        finite = a[np.isfinite(a)]
        if finite.size:
            scale = max(scale, float(np.max(np.abs(finite))))
    return 1e-8 * (1.0 + scale)


class EnvelopeError(RuntimeError):
    """The envelope is empty or inconsistent (negative slope slack)."""


@dataclass
class MarginRecord:
    name: str
    passed: bool
    margin: float
    witness: dict = field(default_factory=dict)
    kind: str = EXACT
    atol: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _record(name, margin, atol, witness=None, kind=EXACT, **details) -> MarginRecord:
    margin = float(margin)
    return MarginRecord(name, bool(margin >= -atol), margin, witness or {}, kind, float(atol), details)


def _argmin_witness(slack: np.ndarray, t: np.ndarray, **axes) -> dict:
    idx = np.unravel_index(int(np.nanargmin(slack)), slack.shape)
    w = {"t": float(np.broadcast_to(t, slack.shape)[idx])}
    for key, arr in axes.items():
        w[key] = _jsonable(np.broadcast_to(arr, slack.shape)[idx])
    return w


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


@dataclass
class Certificate:
    records: list[MarginRecord] = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    def add(self, rec: MarginRecord) -> MarginRecord:
        self.records.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def __getitem__(self, name: str) -> MarginRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "checks": [r.to_dict() for r in self.records],
            "parameters": {k: _jsonable(v) for k, v in self.parameters.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), allow_nan=True, **kw)


# ---------------------------------------------------------------------------
# bracket


@dataclass(frozen=True)
class Bracket:
    """Lower solution ``alpha`` and upper solution ``beta`` on a common grid."""

    alpha: GridFunction
    beta: GridFunction

    def __post_init__(self):
        for name in ("alpha", "beta"):
            g = getattr(self, name)
            if g.derivative is None or g.second is None:
                raise ValueError(f"{name} needs first and second derivatives")
            dv, _ = g.periodicity_defect()
            if dv > tolerance(g.values):
                raise ValueError(f"{name}(0) != {name}(1) (defect {dv:.3g})")
        if self.alpha.n != self.beta.n:
            raise GridError("alpha and beta live on different grids")

    @property
    def n(self) -> int:
        return self.alpha.n

    @property
    def t(self) -> np.ndarray:
        return self.alpha.t

    @property
    def r1(self) -> float:
        d = self.alpha.derivative
        return float(d[0] - d[-1])

    @property
    def r2(self) -> float:
        d = self.beta.derivative
        return float(d[-1] - d[0])

    @property
    def ordered(self) -> bool:
        return bool(np.all(self.alpha.values <= self.beta.values + tolerance(self.alpha.values, self.beta.values)))

    def reversed(self) -> "Bracket":
        return Bracket(self.alpha.reversed(), self.beta.reversed())


def reverse_problem(prob: ProblemDef) -> ProblemDef:
    """``F(t, y, p) = f(1 - t, y, -p)``: the time-reversed problem."""
    f = prob.f
    fx, fy = prob.fx, prob.fy
    return ProblemDef(
        f=lambda t, x, y: f(1.0 - t, x, -y),
        fx=None if fx is None else (lambda t, x, y: fx(1.0 - t, x, -y)),
        fy=None if fy is None else (lambda t, x, y: -fy(1.0 - t, x, -y)),
        domain_floor=prob.domain_floor,
        label=f"{prob.label} (reversed)",
    )


# ---------------------------------------------------------------------------
# lower / upper solutions and (E0)


def _fold_periodicity(margin: float, defect: float, atol: float) -> float:
    # an endpoint mismatch beyond atol caps the margin at -defect
    return margin if defect <= atol else min(margin, -defect)


def check_lower(prob: ProblemDef, alpha: GridFunction) -> MarginRecord:
    if alpha.second is None:
        raise ValueError("check_lower needs alpha''")
    t = alpha.t
    fa = prob(t, alpha.values, alpha.derivative)
    slack = fa + alpha.second
    dv, _ = alpha.periodicity_defect()
    atol = tolerance(fa, alpha.second, alpha.values)
    margin = _fold_periodicity(float(np.min(slack)), dv, atol)
    return _record("lower", margin, atol, _argmin_witness(slack, t), periodicity_defect=dv)


def check_upper(prob: ProblemDef, beta: GridFunction) -> MarginRecord:
    if beta.second is None:
        raise ValueError("check_upper needs beta''")
    t = beta.t
    fb = prob(t, beta.values, beta.derivative)
    slack = -beta.second - fb
    dv, _ = beta.periodicity_defect()
    atol = tolerance(fb, beta.second, beta.values)
    margin = _fold_periodicity(float(np.min(slack)), dv, atol)
    return _record("upper", margin, atol, _argmin_witness(slack, t), periodicity_defect=dv)


def e0_slack(prob: ProblemDef, bracket: Bracket, a: float, b: float, delta: float) -> np.ndarray:
    al, be, t = bracket.alpha, bracket.beta, bracket.t
    fa = prob(t, al.values, al.derivative)
    fb = prob(t, be.values, be.derivative)
    return fb - fa + a * (be.values - al.values) - b * (be.derivative - al.derivative) + delta


def verify_E0(prob: ProblemDef, bracket: Bracket, p: LinearParams, delta: float) -> MarginRecord:
    slack = e0_slack(prob, bracket, p.a, p.b, delta)
    atol = tolerance(slack, bracket.alpha.values, bracket.beta.values)
    return _record("E0", np.min(slack), atol, _argmin_witness(slack, bracket.t), a=p.a, b=p.b, delta=delta)


def gap_slack(bracket: Bracket, p: LinearParams, delta: float) -> np.ndarray:
    """``(beta - alpha) - (r1 + r2) h + delta/a``, non-negative under (E0)."""
    h = kernel.h_eval(p, bracket.t)
    return bracket.beta.values - bracket.alpha.values - (bracket.r1 + bracket.r2) * h + delta / p.a


def slope_slack(bracket: Bracket, p: LinearParams, delta: float) -> np.ndarray:
    """``(beta' - alpha') + k0 (beta - alpha) - (r1 + r2)(k0 h + h') + k0 delta/a``, non-negative under (E0)."""
    t = bracket.t
    h = kernel.h_eval(p, t)
    hp = kernel.h_prime_eval(p, t)
    al, be = bracket.alpha, bracket.beta
    k0 = p.k0
    return (
        (be.derivative - al.derivative)
        + k0 * (be.values - al.values)
        - (bracket.r1 + bracket.r2) * (k0 * h + hp)
        + k0 * delta / p.a
    )


# ---------------------------------------------------------------------------
# the invariant set A_Delta


@dataclass(frozen=True)
class Envelope:
    """Band ``alpha1bar <= eta <= beta1bar`` with slope bounds ``psi1 <= eta' <= psi2``."""

    alpha1bar: GridFunction
    beta1bar: GridFunction
    k0: float
    Delta: float
    a: float

    @property
    def t(self) -> np.ndarray:
        return self.alpha1bar.t

    def psi1(self, eta) -> np.ndarray:
        lo = self.alpha1bar
        return lo.derivative - self.k0 * (np.asarray(eta) - lo.values)

    def psi2(self, eta) -> np.ndarray:
        hi = self.beta1bar
        return hi.derivative + self.k0 * (hi.values - np.asarray(eta))

    def slack(self, eta: GridFunction) -> np.ndarray:
        """Pointwise min slack of the four constraints defining membership."""
        v, d = eta.values, eta.derivative
        return np.minimum.reduce(
            [
                v - self.alpha1bar.values,
                self.beta1bar.values - v,
                d - self.psi1(v),
                self.psi2(v) - d,
            ]
        )

    def atol(self) -> float:
        return tolerance(
            self.alpha1bar.values, self.beta1bar.values, self.alpha1bar.derivative, self.beta1bar.derivative
        )

    def contains(self, eta: GridFunction, atol: float | None = None) -> bool:
        atol = self.atol() if atol is None else atol
        return bool(np.min(self.slack(eta)) >= -atol)

    def slope_range(self) -> tuple[float, float]:
        """Extreme admissible slopes over the band (min psi1, max psi2)."""
        return float(np.min(self.psi1(self.beta1bar.values))), float(np.max(self.psi2(self.alpha1bar.values)))


def build_envelope(bracket: Bracket, p: LinearParams, Delta: float, delta: float = 0.0) -> Envelope:
    if Delta < delta / 2.0:
        raise ValueError(f"Delta={Delta} must be at least delta/2={delta / 2.0}")
    t = bracket.t
    h = kernel.h_eval(p, t)
    hp = kernel.h_prime_eval(p, t)
    al, be = bracket.alpha, bracket.beta
    r1, r2 = bracket.r1, bracket.r2
    lo = GridFunction(al.values + r1 * h - Delta / p.a, al.derivative + r1 * hp)
    hi = GridFunction(be.values - r2 * h + Delta / p.a, be.derivative - r2 * hp)
    return Envelope(lo, hi, p.k0, float(Delta), p.a)


def _relax(k0: float, rho: np.ndarray, phi0: float) -> np.ndarray:
    """Solve ``phi' + k0 phi = rho`` exactly for piecewise-linear ``rho``.

    Both cell weights are positive, so non-negative data give a
    non-negative solution.
    """
    n = rho.size - 1
    h = 1.0 / n
    e0, e1 = _exp_moments(k0 * h)[:2]
    w_old, w_new = h * e1, h * (e0 - e1)
    decay = math.exp(-k0 * h)
    phi = np.empty_like(rho)
    phi[0] = phi0
    for i in range(n):
        phi[i + 1] = decay * phi[i] + w_old * rho[i] + w_new * rho[i + 1]
    return phi


def _smooth_profile(rng: np.random.Generator, t: np.ndarray) -> np.ndarray:
    """Random smooth periodic profile with values in (0, 1)."""
    s = rng.normal(0.0, 1.0)
    for k in range(1, 4):
        a, b = rng.normal(0.0, 1.0 / k, size=2)
        s = s + a * np.cos(2 * np.pi * k * t) + b * np.sin(2 * np.pi * k * t)
    sharp = rng.uniform(1.0, 8.0)
    return 1.0 / (1.0 + np.exp(-sharp * s))


def sample_envelope(env: Envelope, count: int, seed: int = 0) -> list[GridFunction]:
    """Deterministic members of ``A_Delta``.

    Members are written ``eta = alpha1bar + phi`` with ``phi' + k0 phi = rho``
    and ``0 <= rho <= Theta := D' + k0 D`` (``D = beta1bar - alpha1bar``).
    This makes the slope constraints hold by construction, and a
    comparison argument keeps ``0 <= phi <= D``.  The list starts with
    ``beta1bar``, ``alpha1bar``, the two extremal-slope members and convex
    combinations, then fills up with random members.
    """
    if count < 1:
        return []
    lo, hi = env.alpha1bar, env.beta1bar
    D = hi.values - lo.values
    Dp = hi.derivative - lo.derivative
    Theta = Dp + env.k0 * D
    atol = env.atol()
    if np.min(D) < -atol or np.min(Theta) < -atol:
        raise EnvelopeError(
            f"empty envelope: min(beta1-alpha1)={np.min(D):.3g}, min Theta={np.min(Theta):.3g}"
        )
    D = np.maximum(D, 0.0)
    Theta = np.maximum(Theta, 0.0)
    t = env.t
    k0 = env.k0

    def member(rho, phi0):
        phi = np.clip(_relax(k0, rho, phi0), 0.0, D)
        at_top = phi >= D
        at_bottom = phi <= 0.0
        dphi = np.where(at_top, Dp, np.where(at_bottom, 0.0, rho - k0 * phi))
        return GridFunction(lo.values + phi, lo.derivative + dphi)

    def periodic_phi0(rho):
        return _relax(k0, rho, 0.0)[-1] / -math.expm1(-k0)

    out = [GridFunction(hi.values, hi.derivative), GridFunction(lo.values, lo.derivative)]
    out.append(member(np.zeros_like(D), D[0]))
    out.append(member(Theta.copy(), 0.0))
    for w in (0.5, 0.25, 0.75):
        out.append(GridFunction(lo.values + w * D, lo.derivative + w * Dp))
    for eta in out:
        if not env.contains(eta, atol):
            raise EnvelopeError("constructed extreme member violates the envelope")
    rng = np.random.default_rng(seed)
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 10 * count + 100:
            raise EnvelopeError("could not generate admissible random members")
        rho = _smooth_profile(rng, t) * Theta
        if rng.random() < 0.5:
            phi0 = min(periodic_phi0(rho), D[0])
        else:
            phi0 = rng.uniform(0.0, 1.0) * D[0]
        eta = member(rho, phi0)
        if env.contains(eta, atol):
            out.append(eta)
    return out[:count]


def verify_E1(prob, bracket: Bracket, p: LinearParams, Delta: float, samples) -> MarginRecord:
    al, be, t = bracket.alpha, bracket.beta, bracket.t
    a, b = p.a, p.b
    best, witness, scale = math.inf, {}, []
    for i, eta in enumerate(samples):
        fe = prob(t, eta.values, eta.derivative)
        s1 = fe + al.second + a * (eta.values - al.values) - b * (eta.derivative - al.derivative) + Delta
        s2 = a * (be.values - eta.values) - b * (be.derivative - eta.derivative) + Delta - fe - be.second
        slack = np.minimum(s1, s2)
        scale.append(fe)
        j = int(np.argmin(slack))
        if slack[j] < best:
            best = float(slack[j])
            witness = {"t": float(t[j]), "eta_index": i, "side": "lower" if s1[j] <= s2[j] else "upper"}
    atol = tolerance(al.values, be.values, al.second, be.second, *scale)
    return _record("E1", best, atol, witness, SAMPLED, samples=len(samples), a=a, b=b, Delta=Delta)


def verify_E1prime(prob, bracket: Bracket, p: LinearParams, Delta: float, samples) -> MarginRecord:
    al, be, t = bracket.alpha, bracket.beta, bracket.t
    a, b = p.a, p.b
    fa = prob(t, al.values, al.derivative)
    fb = prob(t, be.values, be.derivative)
    best, witness, scale = math.inf, {}, [fa, fb]
    for i, eta in enumerate(samples):
        fe = prob(t, eta.values, eta.derivative)
        s1 = fe - fa + a * (eta.values - al.values) - b * (eta.derivative - al.derivative) + Delta
        s2 = fb - fe + a * (be.values - eta.values) - b * (be.derivative - eta.derivative) + Delta
        slack = np.minimum(s1, s2)
        scale.append(fe)
        j = int(np.argmin(slack))
        if slack[j] < best:
            best = float(slack[j])
            witness = {"t": float(t[j]), "eta_index": i, "side": "lower" if s1[j] <= s2[j] else "upper"}
    atol = tolerance(al.values, be.values, *scale)
    return _record("E1'", best, atol, witness, SAMPLED, samples=len(samples), a=a, b=b, Delta=Delta)


# ---------------------------------------------------------------------------
# (E2): local Lipschitz tube


def default_mu(bracket: Bracket, prob: ProblemDef | None = None) -> float:
    """``0.1 min(beta - alpha)``, kept inside ``x > domain_floor`` where possible."""
    gap = float(np.min(bracket.beta.values - bracket.alpha.values))
    mu = 0.1 * gap if gap > 0 else 0.1
    if prob is not None and prob.domain_floor is not None:
        room = float(np.min(bracket.alpha.values)) - prob.domain_floor
        if room > 0:
            mu = min(mu, 0.99 * room)
    return mu


def _slopes(prob: ProblemDef, t, x, y, step: float = 1e-5):
    """Absolute partial slopes; one-sided differences also flag kinks."""
    if prob.fx is not None and prob.fy is not None:
        fx, fy = prob.partials(t, x, y)
        return np.abs(fx), np.abs(fy), False
    hx = step * (1.0 + np.abs(x))
    hy = step * (1.0 + np.abs(y))
    f0 = prob(t, x, y)
    fxp = (prob(t, x + hx, y) - f0) / hx
    fxm = (f0 - prob(t, x - hx, y)) / hx
    fyp = (prob(t, x, y + hy) - f0) / hy
    fym = (f0 - prob(t, x, y - hy)) / hy
    kink_tol = 1e-3 * (1.0 + np.abs(fxp) + np.abs(fxm) + np.abs(fyp) + np.abs(fym))
    kink = bool(np.any(np.abs(fxp - fxm) > kink_tol) or np.any(np.abs(fyp - fym) > kink_tol))
    sx = np.maximum(np.abs(fxp), np.abs(fxm))
    sy = np.maximum(np.abs(fyp), np.abs(fym))
    return sx, sy, kink


def estimate_E2(prob: ProblemDef, bracket: Bracket, mu: float | None = None, points: int = 9):
    """Lipschitz constant of ``f`` on the tubes around both bracket curves.

    Returns ``(ell, record)``; the record also carries the structural
    requirements ``alpha <= beta``, ``r1 >= 0`` and ``r2 >= 0``.
    """
    mu = default_mu(bracket, prob) if mu is None else float(mu)
    if mu <= 0:
        raise ValueError("mu must be positive")
    t = bracket.t[:, None, None]
    off = np.linspace(-mu, mu, points)
    ell, kink, where = 0.0, False, {}
    for name, g in (("alpha", bracket.alpha), ("beta", bracket.beta)):
        x = g.values[:, None, None] + off[None, :, None]
        y = g.derivative[:, None, None] + off[None, None, :]
        with np.errstate(all="ignore"):
            sx, sy, k = _slopes(prob, t, x, y)
            fvals = prob(t, x, y)
        if not (np.all(np.isfinite(fvals)) and np.all(np.isfinite(sx)) and np.all(np.isfinite(sy))):
            return math.inf, _record(
                "E2", -math.inf, 0.0, {"tube": name}, EXACT, mu=mu, ell=math.inf,
                message="f not finite in the tube; shrink mu",
            )
        total = sx + sy
        idx = np.unravel_index(int(np.argmax(total)), total.shape)
        if total[idx] > ell:
            ell = float(total[idx])
            where = {"t": float(bracket.t[idx[0]]), "tube": name}
        kink = kink or k
    gap = bracket.beta.values - bracket.alpha.values
    margin = min(float(np.min(gap)), bracket.r1, bracket.r2)
    atol = tolerance(bracket.alpha.values, bracket.beta.values, bracket.alpha.derivative, bracket.beta.derivative)
    rec = _record(
        "E2", margin, atol, where, EXACT, mu=mu, ell=ell, nonsmooth=kink, r1=bracket.r1, r2=bracket.r2
    )
    return ell, rec


# ---------------------------------------------------------------------------
# (E3) / (E3'): one-sided quadratic growth in x'


def symmetric_indices(n: int, count: int) -> np.ndarray:
    """``count`` node indices spread over 0..n, mirror-symmetric under i -> n-i."""
    count = min(count, n + 1)
    half = np.rint(np.linspace(0, n, count)[: (count + 1) // 2]).astype(int)
    idx = np.concatenate([half, n - half[::-1]])
    return np.unique(idx)


def _as_array(c_fun, n: int) -> np.ndarray:
    if isinstance(c_fun, GridFunction):
        return c_fun.values
    arr = np.asarray(c_fun, dtype=float)
    return np.full(n + 1, float(arr)) if arr.ndim == 0 else arr


def default_z_max(bracket: Bracket, L: float, c: float) -> float:
    amax = float(np.max(np.abs(bracket.alpha.derivative)))
    bmax = float(np.max(np.abs(bracket.beta.derivative)))
    return 10.0 * (1.0 + amax + bmax + L / (1.0 - c))


def _growth_check(name, prob, bracket, c_fun, L, K, z_max, grid, primed: bool) -> MarginRecord:
    n = bracket.n
    c_arr = _as_array(c_fun, n)
    if np.any(c_arr < 0):
        raise ValueError("c(t) must be non-negative")
    gap = bracket.beta.values - bracket.alpha.values
    c_att = float(np.max(c_arr * gap))
    nt, nx, nz = grid
    if z_max is None:
        z_max = default_z_max(bracket, L, min(c_att, 0.5) if c_att >= 1 else c_att)
    idx = symmetric_indices(n, nt)
    t = bracket.t[idx][:, None, None]
    al = bracket.alpha.values[idx][:, None, None]
    ga = gap[idx][:, None, None]
    x = al + ga * np.linspace(0.0, 1.0, nx)[None, :, None]
    z = np.linspace(0.0, z_max, nz)[None, None, :]
    c = c_arr[idx][:, None, None]
    bound = c * z * z + L * z + K
    ap = bracket.alpha.derivative[idx][:, None, None]
    bp = bracket.beta.derivative[idx][:, None, None]
    if not primed:
        s1 = (prob(t, x, ap - z) - prob(t, x, ap)) + bound
        s2 = (prob(t, x, bp) - prob(t, x, bp + z)) + bound
    else:
        s1 = (prob(t, x, ap + z) - prob(t, x, ap)) + bound
        s2 = (prob(t, x, bp) - prob(t, x, bp - z)) + bound
    slack = np.minimum(s1, s2)
    atol = tolerance(bound, prob(t, x, ap), prob(t, x, bp))
    if c_att < 1.0:
        band = 1.0 - c_att
    else:  # strict inequality c < 1: force a failure beyond atol
        band = -(c_att - 1.0) - 2.0 * atol
    margin = min(float(np.min(slack)), band)
    witness = _argmin_witness(slack, t, x=x, z=z)
    return _record(name, margin, atol, witness, EXACT, c=c_att, L=L, K=K, z_max=float(z_max), band_slack=band)


def verify_E3(prob, bracket: Bracket, c_fun, L: float, K: float, z_max: float | None = None,
              grid: Sequence[int] = (64, 64, 64)) -> MarginRecord:
    return _growth_check("E3", prob, bracket, c_fun, L, K, z_max, grid, primed=False)


def verify_E3prime(prob, bracket: Bracket, c_fun, L: float, K: float, z_max: float | None = None,
                   grid: Sequence[int] = (64, 64, 64)) -> MarginRecord:
    return _growth_check("E3'", prob, bracket, c_fun, L, K, z_max, grid, primed=True)


def _limit_estimate(e1, e2, e3):
    """Aitken extrapolation of three samples at |y|, 2|y|, 4|y|.

    Power-law tails are geometric under doubling, which Aitken's delta^2
    resolves exactly.  Samples that do not contract are left as is.
    """
    d1, d2 = e2 - e1, e3 - e2
    denom = d2 - d1
    contracting = np.abs(d2) < np.abs(d1)
    safe = contracting & (np.abs(denom) > 1e-300)
    with np.errstate(all="ignore"):
        aitken = e3 - d2 * d2 / np.where(safe, denom, 1.0)
    return np.where(safe, aitken, e3)


def check_growth_condition(f1: Callable, f2: Callable, bracket: Bracket, c_fun, variant: int,
                           y_probe: float = 1e3, x_points: int = 9, y_points: int = 81) -> MarginRecord:
    """Sampled version of the split growth condition for ``f = f1 + f2``.

    variant 1: ``limsup y f1 / |y|^3 <= c(t)`` and ``f2`` nonincreasing in y;
    variant 2: ``liminf y f1 / |y|^3 >= -c(t)`` and ``f2`` nondecreasing in y.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    n = bracket.n
    c_arr = _as_array(c_fun, n)
    t = bracket.t[:, None]
    x = bracket.alpha.values[:, None] + (bracket.beta.values - bracket.alpha.values)[:, None] * np.linspace(
        0.0, 1.0, x_points
    )[None, :]
    c = c_arr[:, None]
    limits = []
    for sign in (1.0, -1.0):
        ex = []
        for k in range(3):
            y = sign * y_probe * 2.0**k
            ratio = y * np.asarray(f1(t, x, np.full_like(x, y)), dtype=float) / abs(y) ** 3
            ex.append(ratio - c if variant == 1 else -c - ratio)
        limits.append(_limit_estimate(*ex))
    excess = np.maximum(limits[0], limits[1])
    ys = np.linspace(-y_probe, y_probe, y_points)
    f2v = np.asarray(f2(t[:, :, None], x[:, :, None], ys[None, None, :]), dtype=float)
    f2v = np.broadcast_to(f2v, x.shape + ys.shape)
    diffs = np.diff(f2v, axis=-1)
    mono = -diffs if variant == 1 else diffs
    growth_margin = float(np.min(-excess))
    mono_margin = float(np.min(mono))
    atol = tolerance(c_arr, f2v)
    margin = min(growth_margin, mono_margin)
    witness = _argmin_witness(-excess, t, x=x) if growth_margin <= mono_margin else {"t": None, "part": "f2"}
    return _record(
        f"growth{variant}", margin, atol, witness, ASYMPTOTIC,
        growth_margin=growth_margin, monotonicity_margin=mono_margin, y_probe=y_probe,
    )


class GrowthConstants(NamedTuple):
    L: float
    K: float
    y0: float
    c: np.ndarray  # the c(t) actually used, possibly raised by a small epsilon


def _growth_threshold(f1, t, x, c, base: float, y_max: float) -> float | None:
    for k in range(60):
        cand = base * 1.25**k
        if cand > y_max:
            return None
        ys = np.geomspace(cand * (1 + 1e-9), y_max, 64)[None, None, :]
        ok = True
        for sign in (1.0, -1.0):
            y = sign * ys
            if np.any(sign * np.asarray(f1(t, x, y), dtype=float) > c * y * y + 1e-12 * (1 + y * y)):
                ok = False
                break
        if ok:
            return cand
    return None


def e3_constants(f1: Callable, bracket: Bracket, c_fun, y_max: float = 1e4, x_points: int = 9) -> GrowthConstants:
    """``(L, K, y0, c)`` built from a growth bound on ``f1``.

    ``y0`` is the smallest threshold (above ``|alpha'| + |beta'|``) past
    which ``sign(y) f1 <= c(t) y^2`` on the sampled range.  When the limit
    is only reached asymptotically (``y f1 / |y|^3 -> c`` from above), ``c``
    is raised by a small constant while keeping ``c (beta - alpha) < 1``.
    """
    n = bracket.n
    c_arr = _as_array(c_fun, n)
    ap, bp = bracket.alpha.derivative, bracket.beta.derivative
    gap = bracket.beta.values - bracket.alpha.values
    t = bracket.t[:, None, None]
    x = (bracket.alpha.values[:, None] + gap[:, None] * np.linspace(0.0, 1.0, x_points)[None, :])[:, :, None]
    base = float(np.max(np.abs(ap) + np.abs(bp))) + 1e-9
    room = 1.0 - float(np.max(c_arr * gap))
    gmax = float(np.max(gap))
    eps_list = [0.0]
    if room > 0 and gmax > 0:
        eps_list += [frac * room / gmax for frac in (0.01, 0.1, 0.5)]
    for eps in eps_list:
        c_use = c_arr + eps
        y0 = _growth_threshold(f1, t, x, c_use[:, None, None], base, y_max)
        if y0 is not None:
            break
    else:
        raise ValueError("no growth threshold y0 found below y_max")
    c = c_use[:, None, None]
    ys = np.linspace(-y0, y0, 129)[None, None, :]
    f1v = np.abs(np.asarray(f1(t, x, ys), dtype=float))
    K = 2.0 * float(np.max(f1v + c * (ap[:, None, None] ** 2 + bp[:, None, None] ** 2)))
    L = 2.0 * float(np.max(np.abs(ap) + np.abs(bp)))
    return GrowthConstants(L, K, y0, c_use)


def k_hat(prob: ProblemDef, bracket: Bracket, K: float, x_points: int = 33) -> float:
    """``K`` plus the largest x-variation of ``f`` along both bracket slopes."""
    t = bracket.t[:, None]
    al, be = bracket.alpha, bracket.beta
    x = al.values[:, None] + (be.values - al.values)[:, None] * np.linspace(0.0, 1.0, x_points)[None, :]
    ap = al.derivative[:, None]
    bp = be.derivative[:, None]
    da = np.abs(prob(t, x, ap) - prob(t, al.values[:, None], ap))
    db = np.abs(prob(t, x, bp) - prob(t, be.values[:, None], bp))
    return float(K + np.max(da + db))
