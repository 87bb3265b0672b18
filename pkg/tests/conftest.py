import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pbvp import problems
from pbvp.conditions import Bracket
from pbvp.funcspace import sample_vectorized
from pbvp.operator import ProblemDef

settings.register_profile("pbvp", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pbvp")

TWO_PI = 2 * np.pi

# PASS/FAIL lines of the acceptance criteria, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def built(name: str, n: int = 256):
    return problems.build_problem(problems.load_problem(name), n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def trig(coef):
    """Periodic trig polynomial ``sum A_k sin(2 pi k t + phi_k)`` with derivatives."""
    coef = [(float(A), int(k), float(ph)) for A, k, ph in coef]

    def f(t):
        return sum(A * np.sin(TWO_PI * k * t + ph) for A, k, ph in coef) + 0 * t

    def df(t):
        return sum(A * TWO_PI * k * np.cos(TWO_PI * k * t + ph) for A, k, ph in coef) + 0 * t

    def d2f(t):
        return sum(-A * (TWO_PI * k) ** 2 * np.sin(TWO_PI * k * t + ph) for A, k, ph in coef) + 0 * t

    return f, df, d2f


def random_smooth_bracket(rng, n=256, gap=1.0, amp=0.5):
    """Smooth periodic ``alpha < beta`` built from two Fourier modes."""
    fa = trig([(rng.uniform(-amp, amp), k, rng.uniform(0, 6.3)) for k in (1, 2)])
    fw = trig([(rng.uniform(-0.2, 0.2) * gap, k, rng.uniform(0, 6.3)) for k in (1, 2)])
    c = gap + rng.uniform(0, 1)
    alpha = sample_vectorized(fa[0], n, fa[1], fa[2])
    beta = sample_vectorized(lambda t: fa[0](t) + c + fw[0](t), n,
                             lambda t: fa[1](t) + fw[1](t), lambda t: fa[2](t) + fw[2](t))
    return Bracket(alpha, beta)


def random_kinked_instance(rng, n=128):
    """Linear problem ``f = -kappa x + b y + e(t)`` with a bracket whose
    derivatives jump at the period boundary (``r1, r2 >= 0``) and a shift
    ``(a, b, delta)`` that satisfies the half-Lipschitz bound.
    """
    kappa = rng.uniform(0.5, 20.0)
    b = rng.uniform(-5.0, 5.0)
    s1, s2 = rng.uniform(0, 3, size=2)
    s = s1 + s2  # beta inherits alpha's kink, so w carries both
    fa = trig([(rng.uniform(-1, 1), k, rng.uniform(0, 6.3)) for k in (1, 2)])
    B, ph = rng.uniform(-0.5, 0.5), rng.uniform(0, 6.3)
    # L w = -w'' + kappa w - b w' >= 0 for w = beta - alpha once c is large enough
    c = (4 * np.pi**2 * abs(B) + s + kappa * (abs(B) + s / 8) + abs(b) * (TWO_PI * abs(B) + s / 2)) / kappa
    c *= 1 + rng.uniform(0.01, 1.0)

    def al(t):
        return fa[0](t) + s1 * t * (1 - t) / 2

    def dal(t):
        return fa[1](t) + s1 * (1 - 2 * t) / 2

    def d2al(t):
        return fa[2](t) - s1 + 0 * t

    def w(t):
        return c + B * np.sin(TWO_PI * t + ph) - s * t * (1 - t) / 2

    def dw(t):
        return B * TWO_PI * np.cos(TWO_PI * t + ph) - s * (1 - 2 * t) / 2

    def d2w(t):
        return -B * TWO_PI**2 * np.sin(TWO_PI * t + ph) + s + 0 * t

    def e(t):
        return -d2al(t) + kappa * al(t) - b * dal(t)

    prob = ProblemDef(lambda t, x, y: -kappa * x + b * y + e(t),
                      fx=lambda t, x, y: -kappa + 0 * x, fy=lambda t, x, y: b + 0 * y)
    alpha = sample_vectorized(al, n, dal, d2al)
    beta = sample_vectorized(lambda t: al(t) + w(t), n, lambda t: dal(t) + dw(t), lambda t: d2al(t) + d2w(t))
    a = kappa * (1 + rng.uniform(0, 1))
    delta = rng.uniform(0, 1)
    return prob, Bracket(alpha, beta), a, b, delta
