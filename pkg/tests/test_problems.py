import json

import numpy as np
import pytest
from conftest import built
from hypothesis import given
from hypothesis import strategies as st

from pbvp import conditions as cd
from pbvp import problems
from pbvp.funcspace import GridFunction, nodes
from pbvp.kernel import make_params
from pbvp.operator import residual
from pbvp.problems import DuffingSpec, PendulumSpec, ProblemSpecError, SingularSpec, coefficient

# beta(t) - m for e = 1 + 0.5 sin(2 pi t) and its derivative, by mpmath quadrature (30 digits)
BETA_LAZER = {0.3: (-0.012045271492722907536, 0.024590791077086649184),
              0.75: (0.01266514795529222143, 0.0)}


@pytest.mark.parametrize("name", problems.preset_names())
def test_presets_bracket_valid(name):
    b = built(name)
    assert b.bracket.ordered
    assert cd.check_lower(b.prob, b.bracket.alpha).passed
    assert cd.check_upper(b.prob, b.bracket.beta).passed


def test_preset_names():
    assert {"singular_constant", "lazer_solimini", "pendulum", "pendulum_forced", "duffing3"} <= set(
        problems.preset_names())


# ---------------------------------------------------------------- pendulum


def test_pendulum_zero_forcing_exact():
    b = problems.build_problem({"family": "pendulum", "mu": 2, "e": 0, "ell": 8, "r": 0.25}, 256)
    x = GridFunction(np.full(257, np.pi), np.zeros(257))
    assert residual(b.prob, x) <= 1e-12


def test_pendulum_shift_and_k0():
    b = built("pendulum")
    r, d = b.info["r"], b.info["d"]
    assert (b.a, b.b) == (r * d, -d)
    assert make_params(b.a, b.b).k0 <= r


def test_pendulum_rejects_inadmissible():
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"family": "pendulum", "mu": 1, "e": 2, "ell": 8, "r": 0.25})
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"family": "pendulum", "mu": 2, "e": 1, "ell": 4, "r": 0.25})
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"family": "pendulum", "mu": 2, "e": 1, "ell": 8, "r": 0.25, "d": 1.0})


@given(st.floats(0.5, 3), st.floats(0, 1), st.floats(0, 6.2), st.floats(1.0, 3.0), st.floats(0, 0.5),
       st.floats(1.0, 1.5), st.integers(0, 2**31))
def test_pendulum_random_admissible(mu0, ef, ph, ell_scale, ell_wiggle, d_factor, seed):
    mu = coefficient(mu0)
    e = coefficient(lambda t: ef * mu0 * np.sin(2 * np.pi * t + ph))
    ell0 = 4.0 * ell_scale
    r = mu0 / (ell0 * (1 - ell_wiggle))

    def ell(t, x):
        return ell0 * (1 + ell_wiggle * np.cos(x + 2 * np.pi * t))

    spec = PendulumSpec(mu, ell, e, r=r).resolved()
    spec = PendulumSpec(mu, ell, e, r=r, d=spec.d * d_factor)
    b = problems.pendulum_to_standard(spec, 64)
    p = make_params(b.a, b.b)
    assert cd.verify_E0(b.prob, b.bracket, p, 0.0).passed
    env = cd.build_envelope(b.bracket, p, 0.0)
    assert cd.verify_E1(b.prob, b.bracket, p, 0.0, cd.sample_envelope(env, 40, seed)).passed


# ---------------------------------------------------------------- singular


@given(st.floats(0.2, 4))
def test_singular_unit_data_exact(lam):
    b = problems.singular_to_standard(SingularSpec(coefficient(1), coefficient(1), lam), 64)
    assert b.bracket.alpha.values[0] == pytest.approx(1.0)
    assert residual(b.prob, GridFunction(np.ones(65), np.zeros(65))) <= 1e-12


def test_singular_continuous_at_floor():
    b = built("lazer_solimini")
    c = b.prob.domain_floor
    t = np.linspace(0, 1, 11)
    left = b.prob(t, np.full(11, c * (1 - 1e-12)), 0 * t)
    right = b.prob(t, np.full(11, c * (1 + 1e-12)), 0 * t)
    assert np.allclose(left, right, atol=1e-10)


def test_singular_lipschitz_bound():
    b = built("lazer_solimini")
    c = b.prob.domain_floor
    x = np.linspace(c, 20 * c, 400)
    t = np.linspace(0, 1, 400)
    f = b.prob(t[:, None], x[None, :], 0.0)
    slopes = np.abs(np.diff(f, axis=1)) / np.diff(x)[None, :]
    assert np.max(slopes) <= b.a * (1 + 1e-12)


def test_beta_example1_constant_forcing():
    beta = problems.build_beta_example1(coefficient(1), 3.0, 128)
    assert np.allclose(beta.values, 3.0, atol=1e-14)
    assert np.allclose(beta.derivative, 0.0, atol=1e-14)


def test_beta_example1_reference_values():
    beta = problems.build_beta_example1(coefficient("1 + 0.5*sin(2*pi*t)"), 0.0, 320)
    t = nodes(320)
    for tt, (v, d) in BETA_LAZER.items():
        i = int(round(tt * 320))
        assert t[i] == pytest.approx(tt, abs=1e-15)
        assert beta.values[i] == pytest.approx(v, abs=1e-13)
        assert beta.derivative[i] == pytest.approx(d, abs=1e-13)
    assert beta.values[0] == beta.values[-1] == 0.0
    assert abs(beta.derivative[-1] - beta.derivative[0]) <= 1e-10


def test_choose_m_example1():
    spec = SingularSpec(coefficient(1), coefficient(1), 1.0).resolved()
    m = problems.choose_m_example1(spec, 64)
    assert m == pytest.approx(max(spec.c, 1.0))
    b = built("singular_constant")
    for mm in (m, 2 * m):
        beta = problems.build_beta_example1(spec, mm, 256)
        assert cd.check_upper(b.prob, beta).passed


def test_singular_certificate_checks():
    b = built("lazer_solimini")
    p = make_params(b.a, b.b)
    assert b.b == 0.0 and b.invariance_check == "E1'"
    assert cd.verify_E0(b.prob, b.bracket, p, 0.0).passed
    env = cd.build_envelope(b.bracket, p, 0.0)
    assert cd.verify_E1prime(b.prob, b.bracket, p, 0.0, cd.sample_envelope(env, 200, 7)).passed


def test_singular_rejects_bad_data():
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"family": "singular", "p": 1, "e": "sin(2*pi*t)", "lambda": 1})
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"family": "singular", "p": 1, "e": 1, "lambda": -1})


# ---------------------------------------------------------------- Duffing


def _duffing(p=1, q=1, e=1, n1=None, h=None):
    return DuffingSpec(coefficient(p), coefficient(q), coefficient(e), lambda x: np.asarray(x, float) ** -1.0,
                       h or (lambda y: 0.1 * np.asarray(y, float) ** 3 - 0.4 * np.asarray(y, float)), c=1.0,
                       n1=n1)


def test_duffing_beta_unit_data():
    beta = problems.build_beta_example3(_duffing(), 0.5, 4.0, 64)
    assert np.allclose(beta.values, 4.0, atol=1e-14)
    assert np.allclose(beta.second, 0.0, atol=1e-14)


def test_duffing_beta_properties():
    b = built("duffing3")
    beta = b.bracket.beta
    assert abs(beta.derivative[-1] - beta.derivative[0]) <= 1e-10
    assert np.max(np.abs(beta.derivative)) <= 2 * problems.mean(coefficient("1 + 0.5*sin(2*pi*t)"))


def test_duffing_f1_vanishes_at_zero_slope():
    b = built("duffing3")
    t = np.linspace(0, 1, 9)
    assert np.all(b.prob.f1(t, 1.0 + t, 0 * t) == 0.0)


def test_duffing_zero_q_matches_singular():
    doc = {"family": "duffing", "variant": "example2", "p": 1, "q": 0, "e": "1 + 0.5*sin(2*pi*t)",
           "g": {"preset": "power", "lambda": 1}, "h": {"preset": "two_branch", "lambda1": 1.5, "lambda2": 1},
           "c": 0.6666666666666666}
    d = problems.build_problem(doc, 64)
    s = built("lazer_solimini", 64)
    t = nodes(64)[:, None]
    x = np.linspace(0.7, 3, 7)[None, :]
    assert np.allclose(d.prob(t, x, 0.3 + 0 * x), s.prob(t, x, 0.3 + 0 * x), atol=1e-14)


def test_duffing_remark_bounds_hold_for_preset():
    doc = problems.load_problem("duffing3")
    mu, nu, k = doc["h"]["mu"], doc["h"]["nu"], doc["h"]["k"]
    e_bar = problems.mean(coefficient(doc["e"]))
    q_bar = problems.mean(coefficient(doc["q"]))
    assert 0 < mu <= 1 / ((2 * e_bar) ** (2 * k) * 2 * q_bar)
    assert 0 < nu <= 1 / (2 * q_bar)


def test_duffing_rejects_h_too_negative():
    with pytest.raises(ProblemSpecError):
        _duffing(h=lambda y: -2.0 * np.asarray(y, float) ** 2).validate()


def test_duffing_default_n1():
    spec = _duffing()
    n1 = spec.default_n1()
    e_bar, q_bar = 1.0, 1.0
    assert spec.h_negative_part() <= n1 < e_bar / q_bar


# ---------------------------------------------------------------- documents


def test_custom_problem_document(tmp_path):
    doc = {"family": "custom", "f": "1/x - 1 - 0.5*sin(2*pi*t)", "alpha": "0.5", "beta": "3",
           "a": 4, "b": 0, "check": "E1'"}
    b = problems.build_problem(doc, 64)
    assert b.a == 4 and b.invariance_check == "E1'"
    assert cd.check_lower(b.prob, b.bracket.alpha).passed


def test_load_problem_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"family": "pendulum",\n "mu": }')
    with pytest.raises(json.JSONDecodeError) as info:
        problems.load_problem(bad)
    assert info.value.lineno == 2
    with pytest.raises(FileNotFoundError):
        problems.load_problem(tmp_path / "missing.json")
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"mu": 1})
    with pytest.raises(ProblemSpecError):
        problems.build_problem({"family": "nope"})


def test_load_problem_by_path_or_name():
    doc = problems.load_problem("examples/pendulum.json")
    assert doc["family"] == "pendulum" and doc["name"] == "pendulum"


def test_coefficient_forms():
    t = np.linspace(0, 1, 5)
    assert np.all(coefficient(2)(t) == 2)
    assert np.allclose(coefficient("2*t^2")(t), 2 * t**2)
    assert np.allclose(coefficient(lambda s: s + 1)(t), t + 1)
    grid = coefficient(list(np.cos(nodes(16))))
    assert np.allclose(grid(nodes(16)), np.cos(nodes(16)))
    with pytest.raises(ProblemSpecError):
        coefficient("import os")
