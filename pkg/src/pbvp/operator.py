"""The fixed-point map ``T`` and residuals for ``-x'' = f(t, x, x')``.

``T(eta)`` is the periodic solution ``x`` of the shifted linear problem

    -x'' + a x - b x' = f(t, eta, eta') + a eta - b eta',

obtained by convolving the right-hand side with the periodic Green's
function ``h`` (and ``h'`` for the derivative).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernel
from .funcspace import (
    GridError,
    GridFunction,
    differentiate_array,
    nodes,
    periodic_convolution_matrix,
)
from .kernel import LinearParams

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

FD_STEP = 1e-6


class EvaluationError(ArithmeticError):
    """``f`` returned non-finite values."""


@dataclass(frozen=True)
class ProblemDef:
    """Right-hand side ``f(t, x, y)`` of ``-x'' = f(t, x, x')``.

    ``f`` must accept numpy arrays.  When ``domain_floor`` is set, ``f``
    is only ever queried at ``x >= domain_floor``: smaller ``x`` are
    clamped, which realises the constant extension below the floor.
    ``f1``/``f2`` optionally record a split ``f = f1 + f2``.
    """

    f: Evaluator
    fx: Optional[Evaluator] = None
    fy: Optional[Evaluator] = None
    domain_floor: Optional[float] = None
    label: str = "custom"
    f1: Optional[Evaluator] = None
    f2: Optional[Evaluator] = None
    meta: dict = field(default_factory=dict, compare=False)

    def _clamp(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.domain_floor is None else np.maximum(x, self.domain_floor)

    def __call__(self, t, x, y):
        t, x, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, y)))
        out = np.asarray(self.f(t, self._clamp(x), y), dtype=float)
        return np.broadcast_to(out, t.shape) if out.shape != t.shape else out

    def partials(self, t, x, y):
        """``(df/dx, df/dy)``, analytic when supplied, else central differences."""
        t, x, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, y)))
        below = np.zeros(t.shape, bool) if self.domain_floor is None else x < self.domain_floor
        xc = self._clamp(x)
        if self.fx is not None:
            dfx = np.broadcast_to(np.asarray(self.fx(t, xc, y), dtype=float), t.shape)
        else:
            hx = FD_STEP * (1.0 + np.abs(x))
            dfx = (self(t, x + hx, y) - self(t, x - hx, y)) / (2 * hx)
        dfx = np.where(below, 0.0, dfx)
        if self.fy is not None:
            dfy = np.broadcast_to(np.asarray(self.fy(t, xc, y), dtype=float), t.shape)
        else:
            hy = FD_STEP * (1.0 + np.abs(y))
            dfy = (self(t, x, y + hy) - self(t, x, y - hy)) / (2 * hy)
        return dfx, dfy


def evaluate_checked(prob: ProblemDef, t, x, y) -> np.ndarray:
    out = prob(t, x, y)
    if not np.all(np.isfinite(out)):
        bad = np.flatnonzero(~np.isfinite(out))[0]
        raise EvaluationError(
            f"f not finite at t={np.ravel(t)[bad]}, x={np.ravel(x)[bad]}, y={np.ravel(y)[bad]}"
        )
    return out


@functools.lru_cache(maxsize=32)
def kernel_matrices(p: LinearParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature matrices for ``h`` and ``h'`` (reused across iterations)."""
    Wh = periodic_convolution_matrix(kernel.h_terms(p, 0), n)
    Whp = periodic_convolution_matrix(kernel.h_terms(p, 1), n)
    Wh.setflags(write=False)
    Whp.setflags(write=False)
    return Wh, Whp


def convolve(p: LinearParams, g: np.ndarray) -> GridFunction:
    """Periodic solution of ``-x'' + a x - b x' = g`` with its derivative."""
    g = np.asarray(g, dtype=float)
    Wh, Whp = kernel_matrices(p, g.size - 1)
    return GridFunction(Wh @ g, Whp @ g, periodic=True)


def apply_T(prob: ProblemDef, p: LinearParams, eta: GridFunction) -> GridFunction:
    if eta.derivative is None:
        raise ValueError("apply_T needs eta with derivative values")
    t = eta.t
    g = evaluate_checked(prob, t, eta.values, eta.derivative) + p.a * eta.values - p.b * eta.derivative
    x = convolve(p, g)
    # x'' from the linear equation itself, exact given x and x'
    second = -g + p.a * x.values - p.b * x.derivative
    return x.with_derivatives(second=second)


def second_derivative(x: GridFunction) -> np.ndarray:
    """``x''`` from one differentiation of the derivative samples."""
    return differentiate_array(x.derivative, periodic=False)


def residual(prob: ProblemDef, x: GridFunction) -> float:
    """Max of the interior ODE defect and the two periodicity defects."""
    if x.derivative is None:
        raise ValueError("residual needs derivative values")
    xpp = second_derivative(x)
    f = prob(x.t, x.values, x.derivative)
    ode = np.abs(xpp + f)[1:-1]
    dv, dd = x.periodicity_defect()
    ode_max = float(np.max(ode)) if np.all(np.isfinite(ode)) else float("inf")
    return max(ode_max, dv, dd)


@dataclass
class IdentityReport:
    """Max deviations of the four quadrature identities (m, M, n, N)."""

    m: float
    M: float
    n: float
    N: float

    def max(self) -> float:
        return max(self.m, self.M, self.n, self.N)


def mMnN_identity_check(bracket, p: LinearParams, Delta: float) -> IdentityReport:
    """Compare the kernel-quadrature bounds against their closed forms.

    ``m, M`` are the images of the shifted lower/upper forcing under the
    ``h`` convolution; ``n, N`` use the kernel ``h' + k0 h``.
    """
    alpha, beta = bracket.alpha, bracket.beta
    for g in (alpha, beta):
        if g.derivative is None or g.second is None:
            raise ValueError("bracket functions need first and second derivatives")
    if alpha.n != beta.n:
        raise GridError("alpha and beta live on different grids")
    n = alpha.n
    t = nodes(n)
    a, b, k0 = p.a, p.b, p.k0
    Wh, _ = kernel_matrices(p, n)
    Wk = periodic_convolution_matrix(kernel.h_k0_terms(p), n)
    g_lo = -alpha.second + a * alpha.values - b * alpha.derivative - Delta
    g_hi = -beta.second + a * beta.values - b * beta.derivative + Delta
    h = kernel.h_eval(p, t)
    hk = kernel.h_prime_eval(p, t) + k0 * h
    r1, r2 = bracket.r1, bracket.r2
    m_cf = alpha.values + r1 * h - Delta / a
    M_cf = beta.values - r2 * h + Delta / a
    n_cf = alpha.derivative + k0 * alpha.values + r1 * hk - k0 * Delta / a
    N_cf = beta.derivative + k0 * beta.values - r2 * hk + k0 * Delta / a
    dev = lambda u, v: float(np.max(np.abs(u - v)))  # noqa: E731
    return IdentityReport(
        m=dev(Wh @ g_lo, m_cf),
        M=dev(Wh @ g_hi, M_cf),
        n=dev(Wk @ g_lo, n_cf),
        N=dev(Wk @ g_hi, N_cf),
    )
