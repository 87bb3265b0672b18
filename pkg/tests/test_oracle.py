import numpy as np
import pytest
from conftest import built
from hypothesis import given
from hypothesis import strategies as st

from pbvp import kernel, oracle, problems
from pbvp.funcspace import GridFunction, nodes
from pbvp.kernel import make_params
from pbvp.operator import ProblemDef

TWO_PI = 2 * np.pi
# x'' = x as -x'' = f with f = -x
LINEAR_GROWTH = ProblemDef(lambda t, x, y: -x)
# x'' = x - cos(2 pi t): unique periodic solution cos(2 pi t) / (1 + 4 pi^2)
FORCED = ProblemDef(lambda t, x, y: np.cos(TWO_PI * t) - x)


def test_rk4_cosh():
    x1, v1, _ = oracle.integrate_ivp(LINEAR_GROWTH, 1.0, 0.0, 1000)
    assert abs(x1 - np.cosh(1.0)) <= 1e-8
    assert abs(v1 - np.sinh(1.0)) <= 1e-8


def test_rk4_fourth_order():
    err = [abs(oracle.integrate_ivp(LINEAR_GROWTH, 1.0, 0.0, s)[0] - np.cosh(1.0)) for s in (10, 20)]
    assert 16 * 0.75 <= err[0] / err[1] <= 16 * 1.25


def test_rk4_vectorized_lockstep():
    x1, v1, _ = oracle.integrate_ivp(LINEAR_GROWTH, np.array([1.0, 0.0]), np.array([0.0, 1.0]), 200)
    a, _, _ = oracle.integrate_ivp(LINEAR_GROWTH, 0.0, 1.0, 200)
    assert x1[1] == a


def test_rk4_blow_up_reported():
    prob = ProblemDef(lambda t, x, y: -(x**3))
    with pytest.raises(oracle.OracleError):
        oracle.integrate_ivp(prob, 1e3, 0.0, 10)


def test_rk4_record_every():
    _, _, (t, X, V) = oracle.integrate_ivp(LINEAR_GROWTH, 1.0, 0.0, 64, record_every=16)
    assert np.allclose(t, [0, 0.25, 0.5, 0.75, 1.0])
    assert X.shape == (5,)


def test_shooting_forced_linear_orbit():
    r = oracle.shoot_periodic(FORCED, [0.0, 0.0], 64)
    ref = np.cos(TWO_PI * nodes(64)) / (1 + 4 * np.pi**2)
    assert np.max(np.abs(r.x.values - ref)) <= 1e-10
    assert r.method == "shooting" and r.converged


def test_rk4_cos_orbit_returns():
    prob = ProblemDef(lambda t, x, y: 4 * np.pi**2 * x)
    x1, v1, _ = oracle.integrate_ivp(prob, 1.0, 0.0, 1000)
    assert abs(x1 - 1.0) <= 1e-6 and abs(v1) <= 1e-6


def test_rk4_pendulum_equilibrium():
    b = problems.build_problem({"family": "pendulum", "mu": 2, "e": 0, "ell": 8, "r": 0.25}, 64)
    x1, v1, (_, X, V) = oracle.integrate_ivp(b.prob, np.pi, 0.0, 256)
    assert np.max(np.abs(X - np.pi)) <= 1e-12 and np.max(np.abs(V)) <= 1e-12


def test_shooting_singular_unit_data():
    b = built("singular_constant", 64)
    r = oracle.shoot_periodic(b.prob, [1.2, 0.0], 64)
    assert np.max(np.abs(r.x.values - 1.0)) <= 1e-9


@pytest.mark.parametrize("name", ["pendulum", "pendulum_forced"])
def test_shooting_agrees_with_newton(name):
    from pbvp import solver

    b = built(name)
    r = solver.solve(b.prob, b.bracket, solver.SolveConfig(mode="newton"), a=b.a, b=b.b)
    sh = oracle.shoot_periodic(b.prob, [r.x.values[0] + 1e-6, r.x.derivative[0]], 256)
    assert oracle.compare(r.x, sh.x) <= 1e-6


def test_shooting_rejects_bad_steps():
    with pytest.raises(ValueError):
        oracle.shoot_periodic(FORCED, [0.0, 0.0], 64, steps=100)


def test_collocation_oracle_matches_shooting():
    b = built("lazer_solimini", 128)
    guess = GridFunction(b.bracket.beta.values, b.bracket.beta.derivative)
    col = oracle.collocation_oracle(b.prob, guess, 128)
    sh = oracle.shoot_periodic(b.prob, [col.x.values[0], col.x.derivative[0]], 128)
    assert oracle.compare(col.x, sh.x) <= 1e-6


@pytest.mark.parametrize("ab", [(1.0, 0.0), (2.0, 1.0)])
def test_green_function_ivp_reconstruction(ab):
    assert oracle.verify_h_by_ivp(make_params(*ab)) <= 1e-8


@given(st.floats(0.05, 400), st.floats(-30, 30))
def test_green_function_jump_and_periodicity(a, b):
    p = make_params(a, b)
    t, h, dh = oracle.ivp_green_function(p)
    scale = np.max(np.abs(h))
    assert abs(h[-1] - h[0]) <= 1e-8 * scale
    assert abs(dh[-1] - dh[0] - 1.0) <= 1e-8 * max(1.0, np.max(np.abs(dh)))
    assert np.max(np.abs(h - kernel.h_eval(p, t))) <= 1e-7 * scale


def test_compare_nested_grids():
    t64, t128 = nodes(64), nodes(128)
    a = GridFunction(np.sin(t64))
    b = GridFunction(np.sin(t128) + 1e-3 * (np.arange(129) % 2))
    assert oracle.compare(a, b) <= 1e-15
    with pytest.raises(ValueError):
        oracle.compare(GridFunction(np.zeros(49)), GridFunction(np.zeros(129)))
