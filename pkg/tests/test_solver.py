import json

import numpy as np
import pytest
from conftest import built

from pbvp import oracle, pipeline, problems, solver
from pbvp.conditions import Bracket
from pbvp.funcspace import GridFunction, nodes
from pbvp.kernel import make_params
from pbvp.operator import ProblemDef, residual
from pbvp.solver import DivergenceError, SolveConfig, SolveError


def solve_preset(name, mode="auto", n=256, **kw):
    b = built(name, n)
    return b, solver.solve(b.prob, b.bracket, SolveConfig(n=n, mode=mode, **kw), a=b.a, b=b.b)


def const_bracket(lo, hi, n=64):
    z = np.zeros(n + 1)
    return Bracket(GridFunction(np.full(n + 1, lo), z, z), GridFunction(np.full(n + 1, hi), z, z))


# ---------------------------------------------------------------- config


def test_config_validation():
    for bad in ({"tol": 0}, {"relaxation": 0}, {"relaxation": 1.5}, {"mode": "nope"},
                {"eps_schedule": (0.1, 0.2, 0.0)}, {"eps_schedule": (0.1, 0.01)}, {"a": 1.0}, {"n": 33}):
        with pytest.raises(ValueError):
            SolveConfig(**bad)
    assert SolveConfig().eps_schedule == (1e-1, 1e-2, 1e-3, 0.0)


# ---------------------------------------------------------------- shift selection


def test_pick_shift_constant_bracket():
    prob = ProblemDef(lambda t, x, y: 1.0 - x)
    ch = solver.pick_shift(prob, const_bracket(0.5, 2.0), ell=1.0, mu=1.0, c=0.0, L=0.0, K_hat=0.0)
    assert ch.N0 == 1.0
    assert ch.N == 2.0
    assert ch.b == pytest.approx(-ch.a / ch.N + ch.N)
    assert ch.a >= (ch.N + ch.C_N + 1.0) * ch.N
    # a0 makes the invariance margin nonnegative
    assert ch.a0 * 1.5 + (1.0 - 2.0) - (1.0 - 0.5) >= -1e-12


def test_pick_shift_rejects_c_one():
    prob = ProblemDef(lambda t, x, y: 1.0 - x)
    with pytest.raises(solver.ShiftError):
        solver.pick_shift(prob, const_bracket(0.5, 2.0), 1.0, 1.0, 1.0, 0.0, 0.0)


@pytest.mark.parametrize("name", ["pendulum", "pendulum_forced", "lazer_solimini"])
def test_pick_shift_kernel_rate_within_N(name):
    b = built(name)
    inp = solver.shift_inputs(b.prob, b.bracket)
    ch = solver.pick_shift(b.prob, b.bracket, inp["ell"], inp["mu"], inp["c"], inp["L"], inp["K_hat"])
    p = make_params(ch.a, ch.b)
    assert p.lambda2 == pytest.approx(-ch.N, rel=1e-9)
    assert p.k0 <= ch.N * (1 + 1e-12)


def test_pick_shift_dominates_singular_slope():
    b = built("lazer_solimini")
    inp = solver.shift_inputs(b.prob, b.bracket)
    ch = solver.pick_shift(b.prob, b.bracket, inp["ell"], inp["mu"], inp["c"], inp["L"], inp["K_hat"])
    c = b.prob.domain_floor
    assert ch.a >= 1.0 / c**2


# ---------------------------------------------------------------- fixed point


def test_fixed_point_pendulum():
    b, r = solve_preset("pendulum", "fixed_point")
    assert r.method == "fixed_point" and r.residual <= 1e-8
    assert np.all(r.x.values >= np.pi / 2 - 1e-6) and np.all(r.x.values <= 3 * np.pi / 2 + 1e-6)


def test_fixed_point_singular_exact():
    _, r = solve_preset("singular_constant", "fixed_point")
    assert np.max(np.abs(r.x.values - 1.0)) <= 1e-12


def test_fixed_point_lazer_matches_shooting():
    b, r = solve_preset("lazer_solimini", "fixed_point")
    ref = oracle.shoot_periodic(b.prob, [r.x.values[0], r.x.derivative[0]], 256)
    assert r.residual <= 1e-8
    assert oracle.compare(r.x, ref.x) <= 1e-6
    assert np.min(r.x.values) > 0


@pytest.mark.parametrize("name", ["pendulum", "lazer_solimini"])
def test_fixed_point_and_newton_agree(name):
    _, r1 = solve_preset(name, "fixed_point")
    _, r2 = solve_preset(name, "newton")
    assert np.max(np.abs(r1.x.values - r2.x.values)) <= 1e-6


def test_fixed_point_divergence_carries_history():
    prob = ProblemDef(lambda t, x, y: 60.0 * x + np.cos(2 * np.pi * t))
    p = make_params(1.0, 0.0)
    eta = GridFunction(np.full(65, 0.1), np.zeros(65), periodic=True)
    with pytest.raises(DivergenceError) as info:
        solver.solve_fixed_point(prob, p, eta, SolveConfig(n=64))
    assert len(info.value.history) >= 1


def test_fixed_point_only_mode_raises():
    prob = ProblemDef(lambda t, x, y: 60.0 * x + np.cos(2 * np.pi * t))
    with pytest.raises(DivergenceError):
        solver.solve(prob, None, SolveConfig(n=64, mode="fixed_point"), a=1.0, b=0.0)


# ---------------------------------------------------------------- Newton


def test_newton_exact_guess_one_iteration():
    b = problems.build_problem({"family": "pendulum", "mu": 2, "e": 0, "ell": 8, "r": 0.25}, 128)
    eta = GridFunction(np.full(129, np.pi), np.zeros(129), periodic=True)
    r = solver.solve_newton(b.prob, SolveConfig(n=128), eta)
    assert r.iterations == 1 and r.residual <= 1e-10


def test_newton_duffing_matches_oracle():
    b, r = solve_preset("duffing3", "newton")
    assert r.converged and r.residual <= 1e-8
    dev, _ = pipeline.cross_check(b, r)
    assert dev <= 1e-6


def test_newton_quadratic_tail():
    _, r = solve_preset("pendulum_forced", "newton")
    h = [v for v in r.history if v > 1e-13]
    # once in the basin, each step at least squares the (scaled) residual
    assert len(h) >= 3
    assert h[-1] <= 1e-3 * h[-2] or h[-1] <= 1e-10


# ---------------------------------------------------------------- continuation


def test_gamma_eps_endpoint_values():
    b = built("lazer_solimini")
    al, be = b.bracket.alpha.values, b.bracket.beta.values
    t = nodes(256)
    for eps in (0.5, 1e-3):
        assert np.allclose(solver.gamma_eps(b.bracket, eps, t, al), eps, atol=1e-15)
        assert np.allclose(solver.gamma_eps(b.bracket, eps, t, be), -eps, atol=1e-15)
        mid = solver.gamma_eps(b.bracket, eps, t, 0.5 * (al + be))
        assert np.all(np.abs(mid) <= eps)


def test_truncation_clamps_below_alpha():
    b = built("pendulum")
    t = nodes(256)
    al, be = b.bracket.alpha.values, b.bracket.beta.values
    y = np.sin(2 * np.pi * t)
    F = solver.truncated_problem(b.prob, b.bracket, 0.0)
    assert np.array_equal(F(t, al - 1.0, y), b.prob(t, al, y))
    assert np.array_equal(F(t, be + 1.0, y), b.prob(t, be, y))
    Fe = solver.truncated_problem(b.prob, b.bracket, 0.1)
    assert np.allclose(Fe(t, al - 0.1, y) - b.prob(t, al, y), 0.1)


@pytest.mark.parametrize("name", ["pendulum_forced", "lazer_solimini", "duffing3"])
def test_continuation_matches_direct(name):
    b, direct = solve_preset(name, "newton")
    _, cont = solve_preset(name, "continuation")
    assert cont.method == "continuation" and cont.params["clamp_activity"] == 0.0
    assert np.max(np.abs(cont.x.values - direct.x.values)) <= 1e-7


def test_continuation_degenerate_bracket():
    _, r = solve_preset("singular_constant", "continuation", n=64)
    assert np.max(np.abs(r.x.values - 1.0)) <= 1e-12
    assert r.envelope_membership["band"]


def test_continuation_needs_ordered_bracket():
    prob = ProblemDef(lambda t, x, y: 1.0 - x)
    with pytest.raises(SolveError):
        solver.solve_continuation(prob, const_bracket(2.0, 0.5), SolveConfig(n=64))


# ---------------------------------------------------------------- result invariants


@pytest.mark.parametrize("name", problems.preset_names())
def test_solve_result_invariants(name):
    b, r = solve_preset(name)
    assert r.converged and r.residual <= 1e-8
    assert abs(residual(b.prob, r.x) - r.residual) <= 1e-12
    dv, dd = r.x.periodicity_defect()
    assert dv <= 1e-7 and dd <= 1e-7
    # certified presets: solution inside the band with the slope bounds of the invariant set
    assert r.envelope_membership == {"band": True, "slope": True}


def test_auto_falls_back_to_newton():
    _, r = solve_preset("duffing3")
    assert r.method == "newton"
    assert any("fixed point" in w for w in r.warnings)


def test_auto_shift_without_ab():
    b = built("pendulum", 128)
    r = solver.solve(b.prob, b.bracket, SolveConfig(n=128))
    assert r.converged and r.params["N"] > 0
    assert r.params["b"] == pytest.approx(-r.params["a"] / r.params["N"] + r.params["N"])


def test_bracket_grid_mismatch():
    b = built("pendulum", 128)
    with pytest.raises(ValueError):
        solver.solve(b.prob, b.bracket, SolveConfig(n=256))


def test_solve_deterministic_and_json():
    _, r1 = solve_preset("lazer_solimini", n=128)
    _, r2 = solve_preset("lazer_solimini", n=128)
    assert np.array_equal(r1.x.values, r2.x.values)
    d = json.loads(r1.to_json())
    assert d["residual"] == r1.residual and d["n"] == 128 and d["method"] == r1.method


@pytest.mark.parametrize("name", ["lazer_solimini", "pendulum_forced"])
def test_refinement_fourth_order(name):
    xs = {n: solve_preset(name, "newton", n=n)[1].x for n in (128, 256, 512)}
    c1 = oracle.compare(xs[128], xs[256])
    c2 = oracle.compare(xs[256], xs[512])
    assert 10 <= c1 / c2 <= 22
