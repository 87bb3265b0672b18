"""Independent reference solutions.

Nothing here uses the Green's-function quadrature or the sparse
collocation of :mod:`pbvp.solver`:

* :func:`integrate_ivp` is a fixed-step classical RK4 integrator;
* :func:`shoot_periodic` runs Newton on the periodicity map;
* :func:`verify_h_by_ivp` rebuilds the Green's function from a
  fundamental system;
* :func:`collocation_oracle` is a dense wrap-around finite-difference
  Newton solve, used when shooting is unreliable.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import kernel
from .funcspace import GridFunction, check_n, nodes
from .kernel import LinearParams
from .operator import ProblemDef, residual
from .solver import SolveResult


class OracleError(RuntimeError):
    pass


STEPS_PER_INTERVAL = 16


def integrate_ivp(prob, x0, v0, steps: int, record_every: int = 1):
    """RK4 for ``x' = v, v' = -f(t, x, v)`` on [0, 1].

    ``x0``/``v0`` may be arrays (independent trajectories integrated in
    lockstep).  Returns ``(x1, v1, (t, X, V))`` with the trajectory
    recorded every ``record_every`` steps.
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    h = 1.0 / steps
    ts, xs, vs = [0.0], [x.copy()], [v.copy()]

    def acc(t, x, v):
        return -np.asarray(prob(np.full(x.shape, t), x, v), dtype=float)

    with np.errstate(all="ignore"):
        for k in range(steps):
            t = k * h
            k1x, k1v = v, acc(t, x, v)
            k2x, k2v = v + 0.5 * h * k1v, acc(t + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = v + 0.5 * h * k2v, acc(t + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = v + h * k3v, acc(t + h, x + h * k3x, v + h * k3v)
            x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                raise OracleError(f"trajectory blew up at t={t + h:.6g}")
            if (k + 1) % record_every == 0:
                ts.append((k + 1) * h)
                xs.append(x.copy())
                vs.append(v.copy())
    return x, v, (np.array(ts), np.array(xs), np.array(vs))


def shoot_periodic(prob: ProblemDef, guess: Sequence[float], n: int = 256, steps: int | None = None,
                   tol: float = 1e-11, max_iter: int = 40) -> SolveResult:
    """Newton on ``(x0, v0) -> (x(1) - x0, x'(1) - v0)`` with a difference Jacobian.

    With ``prob.domain_floor`` set, line-search trials whose trajectory
    dips below the floor are rejected.
    """
    n = check_n(n)
    steps = STEPS_PER_INTERVAL * n if steps is None else int(steps)
    if steps % n:
        raise ValueError("steps must be a multiple of n")
    z = np.array(guess, dtype=float)
    history: list[float] = []
    floor = getattr(prob, "domain_floor", None)

    def defect_batch(zs):
        x1, v1, _ = integrate_ivp(prob, zs[:, 0], zs[:, 1], steps, record_every=steps)
        return np.stack([x1 - zs[:, 0], v1 - zs[:, 1]], axis=1)

    for it in range(max_iter):
        dz = 1e-7 * (1.0 + np.abs(z))
        batch = np.array([z, z + [dz[0], 0.0], z + [0.0, dz[1]]])
        try:
            F = defect_batch(batch)
        except OracleError:
            raise OracleError(f"shooting trajectory blew up at iteration {it}")
        r = F[0]
        norm = float(np.max(np.abs(r)))
        history.append(norm)
        if norm <= tol:
            break
        J = np.column_stack([(F[1] - r) / dz[0], (F[2] - r) / dz[1]])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise OracleError("singular shooting Jacobian") from None
        lam = 1.0
        while lam > 1e-4:
            trial = z + lam * step
            try:
                rt = defect_batch(trial[None, :])[0]
                if floor is not None:
                    # below the floor f is only an extension; periodic orbits there are spurious
                    _, _, (_, X, _) = integrate_ivp(prob, trial[0], trial[1], steps, record_every=steps // n)
                    if np.min(X) < floor:
                        rt = np.array([np.inf, np.inf])
            except OracleError:
                rt = np.array([np.inf, np.inf])
            if np.max(np.abs(rt)) < (1 - 1e-4 * lam) * norm:
                break
            lam *= 0.5
        else:
            raise OracleError(f"shooting line search failed (defect {norm:.3g})")
        z = trial
    else:
        raise OracleError(f"shooting did not converge (defect {history[-1]:.3g})")
    _, _, (t, X, V) = integrate_ivp(prob, z[0], z[1], steps, record_every=steps // n)
    x = GridFunction(X, V)
    return SolveResult(x, residual(prob, x), len(history), history, method="shooting",
                       converged=True, params={"x0": float(z[0]), "v0": float(z[1])})


def ivp_green_function(p: LinearParams, steps: int | None = None):
    """Green's function from the fundamental system of ``h'' = a h - b h'``.

    The interval is cut into segments short enough that no mode grows
    by more than ``e^4`` across one; the segment start values are found
    from a block linear system (multiple shooting), which stays well
    conditioned even when ``e^lambda1`` overflows.  Returns ``(t, h, h')``.
    """
    rate = max(p.lambda1, -p.lambda2)
    segments = max(1, int(math.ceil(rate / 4.0)))
    if steps is None:
        steps = max(4096, 64 * int(math.ceil(rate)))
    steps = segments * int(math.ceil(steps / segments))
    per = steps // segments
    M = np.array([[0.0, 1.0], [p.a, -p.b]])
    hM = M / steps
    # one RK4 step of a linear system is multiplication by a fixed matrix
    I = np.eye(2)
    step = I + hM + hM @ hM / 2 + hM @ hM @ hM / 6 + hM @ hM @ hM @ hM / 24
    P = np.linalg.matrix_power(step, per)
    K = segments
    A = np.zeros((2 * K, 2 * K))
    rhs = np.zeros(2 * K)
    for k in range(K - 1):
        A[2 * k:2 * k + 2, 2 * k:2 * k + 2] = P
        A[2 * k:2 * k + 2, 2 * k + 2:2 * k + 4] = -I
    A[2 * K - 2:, 2 * K - 2:] += P
    A[2 * K - 2:, 0:2] -= I
    rhs[-1] = 1.0  # h(1) - h(0) = 0, h'(1) - h'(0) = 1
    starts = np.linalg.solve(A, rhs).reshape(K, 2)
    out = np.empty((steps + 1, 2))
    for k in range(K):
        z = starts[k]
        out[k * per] = z
        for j in range(1, per + 1):
            z = step @ z
            if k == K - 1 or j < per:
                out[k * per + j] = z
    return np.linspace(0.0, 1.0, steps + 1), out[:, 0], out[:, 1]


def verify_h_by_ivp(p: LinearParams, steps: int | None = None) -> float:
    """Max deviation between the closed-form ``h`` and the IVP reconstruction."""
    t, h, _ = ivp_green_function(p, steps)
    return float(np.max(np.abs(h - kernel.h_eval(p, t))))


def _periodic_matrices(m: int):
    """Dense wrap-around fourth-order first and second derivative matrices."""
    h = 1.0 / m
    D1 = np.zeros((m, m))
    D2 = np.zeros((m, m))
    for off, w1, w2 in ((-2, 1 / 12, -1 / 12), (-1, -8 / 12, 16 / 12), (0, 0.0, -30 / 12),
                        (1, 8 / 12, 16 / 12), (2, -1 / 12, -1 / 12)):
        idx = (np.arange(m) + off) % m
        D1[np.arange(m), idx] += w1 / h
        D2[np.arange(m), idx] += w2 / h**2
    return D1, D2


def collocation_oracle(prob: ProblemDef, guess: GridFunction, n: int, tol: float = 1e-11,
                       max_iter: int = 60) -> SolveResult:
    """Dense periodic finite-difference Newton solve of ``x'' + f(t, x, x') = 0`` on ``n`` points."""
    n = check_n(n)
    t = np.arange(n) / n
    D1, D2 = _periodic_matrices(n)
    src = guess
    x = np.interp(t, src.t, src.values)
    history: list[float] = []

    def F(x):
        return D2 @ x + prob(t, x, D1 @ x)

    r = F(x)
    for it in range(max_iter):
        norm = float(np.max(np.abs(r)))
        history.append(norm)
        if norm <= tol * (1 + n):
            break
        y = D1 @ x
        hx = 1e-7 * (1 + np.abs(x))
        hy = 1e-7 * (1 + np.abs(y))
        fx = (prob(t, x + hx, y) - prob(t, x - hx, y)) / (2 * hx)
        fy = (prob(t, x, y + hy) - prob(t, x, y - hy)) / (2 * hy)
        J = D2 + np.diag(fx) + fy[:, None] * D1
        dx = np.linalg.solve(J, -r)
        lam = 1.0
        while lam > 1e-6:
            xt = x + lam * dx
            rt = F(xt)
            if np.all(np.isfinite(rt)) and np.max(np.abs(rt)) < (1 - 1e-4 * lam) * norm:
                break
            lam *= 0.5
        else:
            break
        x, r = xt, rt
    norm = float(np.max(np.abs(r)))
    if not norm <= 1e-6:
        raise OracleError(f"collocation oracle did not converge (defect {norm:.3g})")
    y = D1 @ x
    gf = GridFunction(np.append(x, x[0]), np.append(y, y[0]), periodic=True)
    return SolveResult(gf, residual(prob, gf), len(history), history, method="collocation", converged=True)


def compare(primary: GridFunction, reference: GridFunction) -> float:
    """Sup-norm distance on the coarser of the two grids."""
    if primary.n == reference.n:
        return float(np.max(np.abs(primary.values - reference.values)))
    coarse, fine = (primary, reference) if primary.n < reference.n else (reference, primary)
    ratio = fine.n // coarse.n
    if fine.n != ratio * coarse.n:
        raise ValueError("grids are not nested")
    return float(np.max(np.abs(coarse.values - fine.values[::ratio])))
