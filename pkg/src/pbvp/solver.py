"""Solvers for the periodic problem ``-x'' = f(t, x, x')``.

* :func:`solve_fixed_point` iterates the Green's-function map ``T``
  (optionally relaxed);
* :func:`solve_newton` runs damped Newton on a collocation system;
* :func:`solve_continuation` follows truncated, perturbed problems
  ``f(t, clamp(x), y) + gamma_eps(t, x)`` down to ``eps = 0``;
* :func:`solve` chains them: fixed point with a relaxation scan, then
  Newton, then continuation.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import conditions, kernel
from .conditions import Bracket
from .funcspace import GridFunction, check_n, differentiation_matrix, interp, nodes
from .kernel import LinearParams
from .operator import EvaluationError, ProblemDef, apply_T, residual, second_derivative

log = logging.getLogger(__name__)

MODES = ("auto", "fixed_point", "newton", "continuation")
RELAXATIONS = (1.0, 0.5, 0.25)


class SolveError(RuntimeError):
    def __init__(self, message: str, history: Sequence[float] = ()):
        super().__init__(message)
        self.history = list(history)


class DivergenceError(SolveError):
    """Residual grew ten-fold over the best iterate."""


class NewtonError(SolveError):
    """Singular Jacobian or failed line search."""


class ShiftError(ValueError):
    """No admissible N or a was found by the scans."""


@dataclass(frozen=True)
class SolveConfig:
    n: int = 256
    tol: float = 1e-8
    max_iter: int = 500
    relaxation: float = 1.0
    mode: str = "auto"
    a: Optional[float] = None
    b: Optional[float] = None
    eps_schedule: tuple = (1e-1, 1e-2, 1e-3, 0.0)

    def __post_init__(self):
        check_n(self.n)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        eps = list(self.eps_schedule)
        if not eps or eps[-1] != 0 or any(e1 <= e2 for e1, e2 in zip(eps, eps[1:])) or eps[0] < 0:
            raise ValueError("eps_schedule must be strictly decreasing and end at 0")
        if (self.a is None) != (self.b is None):
            raise ValueError("give both a and b or neither")


@dataclass
class SolveResult:
    x: GridFunction
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    envelope_membership: dict = field(default_factory=dict)
    method: str = ""
    converged: bool = False
    warnings: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "residual": self.residual,
            "iterations": self.iterations,
            "history": [float(h) for h in self.history],
            "envelope_membership": self.envelope_membership,
            "warnings": list(self.warnings),
            "params": {k: (None if v is None else float(v)) for k, v in self.params.items()},
            "n": self.x.n,
            "x_min": float(np.min(self.x.values)),
            "x_max": float(np.max(self.x.values)),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# shift selection


@dataclass(frozen=True)
class ShiftChoice:
    a: float
    b: float
    N: float
    N0: float
    a0: float
    C_N: float


def _scan_N0(bracket: Bracket, limit: float = 1e8) -> float:
    gap = bracket.beta.values - bracket.alpha.values
    dgap = bracket.beta.derivative - bracket.alpha.derivative
    N = 1.0
    while N <= limit:
        if np.min(gap + dgap / N) > 0:
            return N
        N = math.ceil(N * 1.25)
    raise ShiftError(f"no N <= {limit:g} makes beta - alpha + (beta' - alpha')/N positive; "
                     f"last margin {float(np.min(gap + dgap / N)):.3g}")


def _lipschitz_on_E_N(prob: ProblemDef, bracket: Bracket, N: float, points: int = 32) -> float:
    idx = conditions.symmetric_indices(bracket.n, points)
    al, be = bracket.alpha, bracket.beta
    t = bracket.t[idx][:, None, None]
    a0, b0 = al.values[idx][:, None, None], be.values[idx][:, None, None]
    s = np.linspace(0.0, 1.0, points)
    x = a0 + (b0 - a0) * s[None, :, None]
    lo = al.derivative[idx][:, None, None] - N * (x - a0)
    hi = be.derivative[idx][:, None, None] + N * (b0 - x)
    y = lo + (hi - lo) * s[None, None, :]
    fx, fy = prob.partials(t, x, y)
    total = np.abs(fx) + np.abs(fy)
    return float(np.max(total[np.isfinite(total)])) if np.any(np.isfinite(total)) else math.inf


def pick_shift(prob: ProblemDef, bracket: Bracket, ell: float, mu: float, c: float, L: float,
               K_hat: float) -> ShiftChoice:
    """``N`` and ``(a, b = -a/N + N)`` following the existence construction.

    ``a0`` solves the invariance inequality
    ``a(beta-alpha) - b(beta'-alpha') + f(beta) - f(alpha) >= 0`` in
    closed form (it is affine in ``a`` once ``b`` is tied to ``a``).
    """
    if not c < 1:
        raise ShiftError("growth constant c must be < 1")
    N0 = _scan_N0(bracket)
    N = max(N0, ell + 1.0, (K_hat + L * mu) / ((1.0 - c) * mu))
    al, be, t = bracket.alpha, bracket.beta, bracket.t
    gap = be.values - al.values
    dgap = be.derivative - al.derivative
    df = prob(t, be.values, be.derivative) - prob(t, al.values, al.derivative)
    S = gap + dgap / N
    if np.min(S) <= 0:
        raise ShiftError("N below N0")
    a0 = max(float(np.max((N * dgap - df) / S)), 1e-12)
    C_N = _lipschitz_on_E_N(prob, bracket, N)
    a = max(a0, (N + C_N + ell) * N)
    b = -a / N + N
    return ShiftChoice(float(a), float(b), float(N), float(N0), a0, C_N)


def shift_inputs(prob: ProblemDef, bracket: Bracket, c_fun=0.0) -> dict:
    """``ell, mu, c, L, K, K_hat`` estimated from the bracket and ``f``."""
    mu = conditions.default_mu(bracket, prob)
    ell, _ = conditions.estimate_E2(prob, bracket, mu)
    f1 = prob.f1 if prob.f1 is not None else prob
    c_arr = conditions._as_array(c_fun, bracket.n)
    try:
        L, K, _, c_arr = conditions.e3_constants(f1, bracket, c_fun)
    except ValueError:
        L, K = 0.0, 0.0
    c_att = float(np.max(c_arr * (bracket.beta.values - bracket.alpha.values)))
    return {"ell": ell, "mu": mu, "c": c_att, "L": L, "K": K,
            "K_hat": conditions.k_hat(prob, bracket, K)}


# ---------------------------------------------------------------------------
# fixed point iteration


def _blend(eta: GridFunction, x: GridFunction, w: float) -> GridFunction:
    if w == 1.0:
        return x
    mix = lambda u, v: None if u is None or v is None else (1.0 - w) * u + w * v  # noqa: E731
    return GridFunction(mix(eta.values, x.values), mix(eta.derivative, x.derivative),
                        mix(eta.second, x.second), periodic=True)


def solve_fixed_point(prob: ProblemDef, p: LinearParams, eta0: GridFunction, cfg: SolveConfig,
                      relaxation: float | None = None) -> SolveResult:
    """Relaxed Picard iteration ``eta <- (1-w) eta + w T(eta)``."""
    w = cfg.relaxation if relaxation is None else relaxation
    eta = eta0
    best, best_res = eta0, residual(prob, eta0)
    history: list[float] = []
    for it in range(1, cfg.max_iter + 1):
        x = apply_T(prob, p, eta)
        step = float(np.max(np.abs(x.values - eta.values)) + np.max(np.abs(x.derivative - eta.derivative)))
        eta = _blend(eta, x, w)
        res = residual(prob, eta)
        history.append(res)
        if not math.isfinite(res) or (it > 3 and res > 10.0 * best_res):
            raise DivergenceError(f"fixed-point iteration diverged (w={w}) at iteration {it}", history)
        if res < best_res:
            best, best_res = eta, res
        if res <= cfg.tol:
            return SolveResult(eta, res, it, history, method="fixed_point", converged=True,
                               params={"a": p.a, "b": p.b, "relaxation": w})
        scale = 1.0 + float(np.max(np.abs(eta.values)) + np.max(np.abs(eta.derivative)))
        if step <= 1e-14 * scale:
            break  # stationary: the residual has reached its discretization floor
    return SolveResult(best, best_res, len(history), history, method="fixed_point", converged=False,
                       warnings=[f"fixed point stopped at residual {best_res:.3g} > tol"],
                       params={"a": p.a, "b": p.b, "relaxation": w})


# ---------------------------------------------------------------------------
# Newton collocation


def _collocation_residual(prob: ProblemDef, D, t, x, v):
    fx = prob(t, x, v)
    r1 = v - D @ x
    r2 = (D @ v + fx)[1:-1]
    return np.concatenate([r1, r2, [x[0] - x[-1], v[0] - v[-1]]])


def _collocation_jacobian(prob: ProblemDef, D, t, x, v):
    n1 = x.size
    dfx, dfy = prob.partials(t, x, v)
    eye = sparse.identity(n1, format="csr")
    inner = sparse.identity(n1, format="csr")[1:-1]
    top = sparse.hstack([-D, eye])
    mid = sparse.hstack([inner @ sparse.diags(dfx), inner @ (D + sparse.diags(dfy))])
    per = np.zeros((2, 2 * n1))
    per[0, 0], per[0, n1 - 1] = 1.0, -1.0
    per[1, n1], per[1, 2 * n1 - 1] = 1.0, -1.0
    return sparse.vstack([top, mid, sparse.csr_matrix(per)], format="csc")


def _initial_state(eta0: GridFunction | None, n: int, D):
    if eta0 is None:
        return np.zeros(n + 1), np.zeros(n + 1)
    if eta0.n != n:
        raise ValueError("initial guess lives on a different grid")
    x = np.array(eta0.values, dtype=float)
    v = np.array(eta0.derivative if eta0.derivative is not None else D @ x, dtype=float)
    return x, v


def _finish(prob, x, v, history, method) -> SolveResult:
    gf = GridFunction(x, v, periodic=True)
    res = residual(prob, gf)
    x_out = gf.with_derivatives(second=second_derivative(gf))
    return SolveResult(x_out, res, len(history), history, method=method, converged=True)


def _pseudo_transient(prob: ProblemDef, cfg: SolveConfig, eta0, limit: int, tau0: float = 0.1):
    """Implicit pseudo-time stepping of ``x_tau = x'' + f`` with growing steps.

    Steps grow as the residual falls (switched evolution relaxation), so
    the iteration turns into plain Newton near a stable solution.
    """
    n = cfg.n
    t = nodes(n)
    D = differentiation_matrix(n)
    x, v = _initial_state(eta0, n, D)
    E = sparse.csr_matrix((np.ones(n - 1), (np.arange(n + 1, 2 * n), np.arange(1, n))),
                          shape=(2 * n + 2, 2 * n + 2))
    with np.errstate(all="ignore"):
        R = _collocation_residual(prob, D, t, x, v)
    norm = float(np.linalg.norm(R))
    tau = tau0
    history: list[float] = []
    rejects = 0
    for it in range(1, limit + 1):
        J = _collocation_jacobian(prob, D, t, x, v)
        with np.errstate(all="ignore"):
            dz = spsolve((J - E / tau).tocsc(), -R)
            xn, vn = x + dz[: n + 1], v + dz[n + 1:]
            Rn = _collocation_residual(prob, D, t, xn, vn)
        nn = float(np.linalg.norm(Rn))
        if not (np.all(np.isfinite(dz)) and math.isfinite(nn)) or nn > 10.0 * norm:
            tau *= 0.25
            rejects += 1
            if rejects > 40:
                break
            continue
        tau = min(tau * max(norm / max(nn, 1e-300), 0.1), 1e15)
        x, v, R, norm = xn, vn, Rn, nn
        res = residual(prob, GridFunction(x, v, periodic=True))
        history.append(res)
        if res <= 1e-3 * cfg.tol or (res <= cfg.tol and float(np.max(np.abs(dz))) <= 1e-9 * (1 + float(np.max(np.abs(x))))):
            return _finish(prob, x, v, history, "newton")
    res = history[-1] if history else math.inf
    if res <= cfg.tol:
        return _finish(prob, x, v, history, "newton")
    raise NewtonError(f"pseudo-transient Newton stalled (residual {res:.3g})", history)


def solve_newton(prob: ProblemDef, cfg: SolveConfig, eta0: GridFunction | None = None,
                 max_iter: int | None = None) -> SolveResult:
    """Newton on the collocation system ``{v = Dx, Dv + f(t,x,v) = 0 inside, x, v periodic}``.

    ``D`` is the fourth-order differentiation matrix, so the converged
    ``(x, v)`` has (up to rounding) zero residual in the sense of
    :func:`pbvp.operator.residual`.  Damped Newton is tried first; if its
    line search stalls, pseudo-transient continuation restarts from
    ``eta0``.
    """
    limit = max_iter if max_iter is not None else min(cfg.max_iter, 100)
    try:
        return _damped_newton(prob, cfg, eta0, limit)
    except NewtonError as exc:
        log.info("damped Newton failed (%s); switching to pseudo-transient steps", exc)
        try:
            return _pseudo_transient(prob, cfg, eta0, max(limit, 200))
        except NewtonError as exc2:
            raise NewtonError(f"{exc}; {exc2}", exc.history + exc2.history) from exc2


def _damped_newton(prob: ProblemDef, cfg: SolveConfig, eta0, limit: int) -> SolveResult:
    n = cfg.n
    t = nodes(n)
    D = differentiation_matrix(n)
    x, v = _initial_state(eta0, n, D)
    history: list[float] = []
    with np.errstate(all="ignore"):
        R = _collocation_residual(prob, D, t, x, v)
    norm = float(np.linalg.norm(R))
    if not math.isfinite(norm):
        raise NewtonError("f is not finite at the initial guess")

    def trial(dz, lam):
        xn, vn = x + lam * dz[: n + 1], v + lam * dz[n + 1:]
        with np.errstate(all="ignore"):
            Rn = _collocation_residual(prob, D, t, xn, vn)
        return xn, vn, Rn, float(np.linalg.norm(Rn))

    def accepted(nn, lam):
        return math.isfinite(nn) and (nn <= (1.0 - 1e-4 * lam) * norm or nn <= 1e-13 * (1 + norm))

    for it in range(1, limit + 1):
        J = _collocation_jacobian(prob, D, t, x, v)
        with np.errstate(all="ignore"):
            dz = spsolve(J, -R)
        ok = False
        lam = 1.0
        if np.all(np.isfinite(dz)):
            while lam >= 1.0 / 64:
                xn, vn, Rn, nn = trial(dz, lam)
                if accepted(nn, lam):
                    ok = True
                    break
                lam *= 0.5
        if not ok:
            raise NewtonError(f"line search failed at iteration {it} (residual {norm:.3g})", history)
        x, v, R, norm = xn, vn, Rn, nn
        gf = GridFunction(x, v, periodic=True)
        res = residual(prob, gf)
        history.append(res)
        step = float(np.max(np.abs(lam * dz)))
        if res <= cfg.tol and (step <= 1e-9 * (1 + float(np.max(np.abs(x)))) or res <= 1e-3 * cfg.tol):
            return _finish(prob, x, v, history, "newton")
    if history and history[-1] <= cfg.tol:
        return _finish(prob, x, v, history, "newton")
    raise NewtonError(f"Newton did not reach tol in {limit} iterations", history)


# ---------------------------------------------------------------------------
# continuation through truncated, perturbed problems


def _curve(g: GridFunction, t):
    t = np.asarray(t, dtype=float)
    if t.shape == (g.n + 1,):
        return g.values
    return interp(g, np.broadcast_to(t, np.shape(t)))


def _gamma(lo, hi, eps, x):
    # linear in x, +eps at the lower curve and -eps at the upper one
    return (1.0 - 2.0 * (x - lo) / (hi - lo)) * eps


def truncated_problem(prob: ProblemDef, bracket: Bracket, eps: float) -> ProblemDef:
    """``f(t, clamp(x, alpha, beta), y) + gamma_eps(t, x)`` with ``alpha_eps = alpha - eps``."""
    al, be = bracket.alpha, bracket.beta

    def clamp(t, x):
        return np.clip(x, _curve(al, t), np.maximum(_curve(al, t), _curve(be, t)))

    def gamma(t, x):
        if eps == 0:
            return np.zeros(np.shape(x))
        return _gamma(_curve(al, t) - eps, _curve(be, t), eps, x)

    def F(t, x, y):
        return prob(t, clamp(t, x), y) + gamma(t, x)

    def Fx(t, x, y):
        xc = clamp(t, x)
        dfx, _ = prob.partials(t, xc, y)
        inside = (x == xc)
        slope = 0.0 if eps == 0 else -2.0 * eps / (_curve(be, t) - _curve(al, t) + eps)
        return np.where(inside, dfx, 0.0) + slope

    def Fy(t, x, y):
        _, dfy = prob.partials(t, clamp(t, x), y)
        return dfy

    return ProblemDef(F, Fx, Fy, label=f"{prob.label} truncated eps={eps:g}")


def gamma_eps(bracket: Bracket, eps: float, t, x):
    """The perturbation ``gamma_eps(t, x)`` between ``alpha`` and ``beta`` of ``bracket``."""
    return _gamma(_curve(bracket.alpha, t), _curve(bracket.beta, t), eps, np.asarray(x, dtype=float))


def solve_continuation(prob: ProblemDef, bracket: Bracket, cfg: SolveConfig,
                       eta0: GridFunction | None = None) -> SolveResult:
    if not bracket.ordered:
        raise SolveError("continuation needs alpha <= beta")
    if eta0 is None:
        mid = 0.5 * (bracket.alpha.values + bracket.beta.values)
        dmid = 0.5 * (bracket.alpha.derivative + bracket.beta.derivative)
        eta0 = GridFunction(mid, dmid)
    history: list[float] = []
    stages = []
    x = eta0
    for eps in cfg.eps_schedule:
        # the last stage drops the clamp: where alpha == beta the clamped problem
        # does not depend on x and its Jacobian is singular.  It starts from the
        # previous stage pulled back into the band; leaving the band is still
        # reported through the clamp activity below.
        if eps > 0:
            F = truncated_problem(prob, bracket, eps)
        else:
            F = prob
            x = GridFunction(np.clip(x.values, bracket.alpha.values, bracket.beta.values), x.derivative,
                             periodic=True)
        try:
            res = solve_newton(F, cfg, x)
        except NewtonError as exc:
            raise SolveError(f"continuation stage eps={eps:g} failed: {exc}", history + exc.history) from exc
        x = res.x
        history.extend(res.history)
        stages.append({"eps": eps, "iterations": res.iterations, "residual": res.residual})
    atol = conditions.tolerance(bracket.alpha.values, bracket.beta.values)
    outside = (x.values < bracket.alpha.values - atol) | (x.values > bracket.beta.values + atol)
    activity = float(np.mean(outside))
    warnings = []
    if activity > 0:
        warnings.append(f"truncation active at {activity:.1%} of nodes")
    final = residual(prob, x)
    return SolveResult(x, final, len(history), history, method="continuation",
                       converged=final <= cfg.tol, warnings=warnings,
                       params={"clamp_activity": activity})


# ---------------------------------------------------------------------------
# envelope membership and the auto policy


def membership(x: GridFunction, bracket: Bracket | None, N: float | None = None) -> dict:
    """``alpha <= x <= beta`` and, given ``N``, the slope bounds of the invariant set."""
    if bracket is None or not bracket.ordered:
        return {"band": None, "slope": None}
    al, be = bracket.alpha, bracket.beta
    atol = conditions.tolerance(al.values, be.values, al.derivative, be.derivative)
    band = bool(np.all(x.values >= al.values - atol) and np.all(x.values <= be.values + atol))
    slope = None
    if N is not None and x.derivative is not None:
        lo = al.derivative - N * (x.values - al.values)
        hi = be.derivative + N * (be.values - x.values)
        slope = bool(np.all(x.derivative >= lo - atol) and np.all(x.derivative <= hi + atol))
    return {"band": band, "slope": slope}


def default_start(bracket: Bracket, p: LinearParams) -> GridFunction:
    """The upper envelope member ``beta1bar``, made exactly periodic."""
    env = conditions.build_envelope(bracket, p, 0.0)
    hi = env.beta1bar
    v = hi.values.copy()
    d = hi.derivative.copy()
    v[-1] = v[0]
    d[-1] = d[0]
    return GridFunction(v, d, periodic=True)


def solve(prob: ProblemDef, bracket: Bracket | None, cfg: SolveConfig, a: float | None = None,
          b: float | None = None, c_fun=0.0) -> SolveResult:
    """Fixed point with relaxation scan, then Newton, then continuation.

    The shift is ``cfg.a, cfg.b`` if given, else ``a, b``, else
    :func:`pick_shift`.  An explicit ``cfg.mode`` other than ``auto``
    runs only that method.
    """
    if bracket is not None and bracket.n != cfg.n:
        raise ValueError(f"bracket grid n={bracket.n} differs from cfg.n={cfg.n}")
    N = None
    if cfg.a is not None:
        a, b = cfg.a, cfg.b
    if a is None and bracket is not None:
        try:
            inputs = shift_inputs(prob, bracket, c_fun)
            choice = pick_shift(prob, bracket, inputs["ell"], inputs["mu"], inputs["c"], inputs["L"],
                                inputs["K_hat"])
            a, b, N = choice.a, choice.b, choice.N
        except (ShiftError, ValueError) as exc:
            log.info("shift scan failed (%s); using a = ell + 1, b = 0", exc)
            ell, _ = conditions.estimate_E2(prob, bracket)
            a, b = (ell + 1.0 if math.isfinite(ell) else 1.0), 0.0
    if a is None:
        a, b = 1.0, 0.0
    p = kernel.make_params(a, b)
    if N is None:
        N = -p.lambda2
    eta0 = default_start(bracket, p) if bracket is not None else GridFunction(np.zeros(cfg.n + 1), np.zeros(cfg.n + 1))
    notes: list[str] = []
    result: SolveResult | None = None
    tried_fp = cfg.mode in ("auto", "fixed_point")
    if tried_fp:
        omegas = [cfg.relaxation] + [w for w in RELAXATIONS if w < cfg.relaxation]
        for w in omegas:
            try:
                r = solve_fixed_point(prob, p, eta0, cfg, relaxation=w)
            except DivergenceError as exc:
                notes.append(f"fixed point w={w}: {exc}")
                continue
            except EvaluationError as exc:
                notes.append(f"fixed point w={w}: {exc}")
                break
            result = r
            if r.converged:
                break
            notes.extend(r.warnings)
        if cfg.mode == "fixed_point" and (result is None or not result.converged):
            raise DivergenceError("fixed-point iteration failed: " + "; ".join(notes),
                                  result.history if result else [])
    if (result is None or not result.converged) and cfg.mode in ("auto", "newton"):
        try:
            result = solve_newton(prob, cfg, eta0)
        except (NewtonError, EvaluationError) as exc:
            notes.append(f"newton: {exc}")
            if cfg.mode == "newton":
                raise
    if (result is None or not result.converged) and cfg.mode in ("auto", "continuation"):
        if bracket is None:
            raise SolveError("continuation needs a bracket; " + "; ".join(notes))
        result = solve_continuation(prob, bracket, cfg)
    if result is None or not result.converged:
        raise DivergenceError("no method converged: " + "; ".join(notes), result.history if result else [])
    result.params.update({"a": p.a, "b": p.b, "N": N})
    if result.method != "fixed_point":
        result.warnings = notes + result.warnings
    result.envelope_membership = membership(result.x, bracket, N)
    return result
