"""Closed-form periodic Green's function of ``-h'' = -a h + b h'``.

``h`` is the unique solution with ``h(1) = h(0)`` and ``h'(1) - h'(0) = 1``.
With ``lambda1 > 0 > lambda2`` the roots of ``l^2 + b l - a = 0`` it is a
sum of two exponentials, written here as

    h(t) = c1 * exp(lambda1 * (t - 1)) + c2 * exp(lambda2 * t)

so that neither exponent is ever positive on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .funcspace import GridFunction, GridError, periodic_convolution_matrix


class ParameterError(ValueError):
    """Shift parameters outside the admissible range (a <= 0, t outside [0,1], ...)."""


@dataclass(frozen=True)
class LinearParams:
    a: float
    b: float
    lambda1: float
    lambda2: float
    k0: float

    @property
    def c1(self) -> float:
        return 1.0 / ((self.lambda1 - self.lambda2) * -math.expm1(-self.lambda1))

    @property
    def c2(self) -> float:
        return 1.0 / ((self.lambda1 - self.lambda2) * -math.expm1(self.lambda2))

    @property
    def system_matrix(self) -> np.ndarray:
        """Coefficient matrix of ``(theta, theta1)' = M (theta, theta1)``."""
        k0, a, b = self.k0, self.a, self.b
        return np.array([[-k0, 1.0], [a - k0 * (k0 - b), k0 - b]])


def roots(a: float, b: float) -> tuple[float, float]:
    """Positive and negative roots of ``l^2 + b l - a``, cancellation-free."""
    s = math.sqrt(b * b + 4.0 * a)
    if b >= 0:
        lam2 = (-b - s) / 2.0
        lam1 = -a / lam2
    else:
        lam1 = (-b + s) / 2.0
        lam2 = -a / lam1
    return lam1, lam2


def make_params(a: float, b: float) -> LinearParams:
    a = float(a)
    b = float(b)
    if not (a > 0.0) or not math.isfinite(a) or not math.isfinite(b):
        raise ParameterError(f"need a > 0 and finite b, got a={a}, b={b}")
    lam1, lam2 = roots(a, b)
    # -(l1 (1 - e^l2) + l2 (e^l1 - 1)) / (e^l1 - e^l2), divided through by e^l1
    num = lam1 * -math.expm1(lam2) * math.exp(-lam1) + lam2 * -math.expm1(-lam1)
    k0 = -num / -math.expm1(lam2 - lam1)
    return LinearParams(a, b, lam1, lam2, k0)


def _check_t(t):
    arr = np.asarray(t, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or not np.all(np.isfinite(arr)):
        raise ParameterError("t must lie in [0, 1]")
    return arr


def _eval(p: LinearParams, t, order: int):
    e1 = p.c1 * np.exp(p.lambda1 * (t - 1.0))
    e2 = p.c2 * np.exp(p.lambda2 * t)
    return p.lambda1**order * e1 + p.lambda2**order * e2


def _out(x, t):
    return float(x) if np.ndim(t) == 0 else x


def h_eval(p: LinearParams, t):
    return _out(_eval(p, _check_t(t), 0), t)


def h_prime_eval(p: LinearParams, t):
    return _out(_eval(p, _check_t(t), 1), t)


def h_second_eval(p: LinearParams, t):
    return _out(_eval(p, _check_t(t), 2), t)


def h1_eval(p: LinearParams, t):
    """Logarithmic derivative ``h'/h``; increasing, equal to ``-k0`` at 0."""
    tt = _check_t(t)
    return _out(_eval(p, tt, 1) / _eval(p, tt, 0), t)


def fundamental_matrix(p: LinearParams, t: float) -> np.ndarray:
    """``A(t) = exp(t M)`` for the (theta, theta1) system, in closed form."""
    t = float(_check_t(t))
    l1, l2, k0 = p.lambda1, p.lambda2, p.k0
    e1, e2 = math.exp(l1 * t), math.exp(l2 * t)
    return np.array(
        [
            [(l1 + k0) * e2 - (l2 + k0) * e1, e1 - e2],
            [-(l1 + k0) * (l2 + k0) * (e1 - e2), (l1 + k0) * e1 - (l2 + k0) * e2],
        ]
    ) / (l1 - l2)


def periodicity_resolvent(p: LinearParams) -> np.ndarray:
    """Closed form of ``(I - A(1))^{-1}``."""
    l1, l2 = p.lambda1, p.lambda2
    em1 = math.expm1(l1)  # e^l1 - 1
    om2 = -math.expm1(l2)  # 1 - e^l2
    diff = math.exp(l1) - math.exp(l2)
    return np.array(
        [
            [(em1 - om2) / (em1 * om2), -diff / ((l1 - l2) * em1 * om2)],
            [-(l1 - l2) / diff, 0.0],
        ]
    )


# ---------------------------------------------------------------------------
# kernels as exponential sums for funcspace.periodic_convolution_matrix


def h_terms(p: LinearParams, order: int = 0):
    return ((p.c1 * p.lambda1**order, p.lambda1), (p.c2 * p.lambda2**order, p.lambda2))


def h_k0_terms(p: LinearParams):
    """``h' + k0 h``, the kernel of the n/N bounds."""
    return (
        (p.c1 * (p.lambda1 + p.k0), p.lambda1),
        (p.c2 * (p.lambda2 + p.k0), p.lambda2),
    )


def theta1_terms(p: LinearParams):
    # -(e^{l1 tau} - e^{l2 tau}) / (e^l1 - e^l2), normalised by e^l1
    denom = -math.expm1(p.lambda2 - p.lambda1)
    return ((-1.0 / denom, p.lambda1), (math.exp(-p.lambda1) / denom, p.lambda2))


def theta1_from_u(p: LinearParams, u: GridFunction | np.ndarray, n: int | None = None) -> GridFunction:
    """Second component of the periodic solution of the (theta, theta1) system.

    ``u`` is the forcing of the theta1 equation; for ``u <= 0`` the
    result is non-negative.
    """
    values = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    if n is not None and values.size != n + 1:
        raise GridError(f"forcing has {values.size} samples, grid expects {n + 1}")
    W = periodic_convolution_matrix(theta1_terms(p), values.size - 1)
    return GridFunction(W @ values, periodic=True)
