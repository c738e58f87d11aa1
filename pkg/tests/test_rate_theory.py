import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regflow import rate_theory as rt
from regflow.flow_filters import FlowFilter
from regflow.problems import diagonal_problem
from regflow.rate_theory import MonotoneRate, RateFunction, StepRate
from regflow.spectral_core import SpectralDecomposition, decompose, spectral_tail


def test_evaluate_examples():
    assert RateFunction.hoelder(1).evaluate(0.25) == 0.25
    assert RateFunction.hoelder(2).evaluate(3.0) == 9.0
    r = RateFunction.logarithmic(2.0, 0.5)
    k = r.kink
    assert r.evaluate(k) == pytest.approx((2.0 / 0.5) ** -2.0, rel=1e-15)
    assert r.evaluate(k * (1 - 1e-12)) == pytest.approx((2.0 / 0.5) ** -2.0, rel=1e-9)
    assert r.evaluate(10.0) == (2.0 / 0.5) ** -2.0


def test_constructor_validation():
    with pytest.raises(ValueError):
        RateFunction.hoelder(0.0)
    with pytest.raises(ValueError):
        RateFunction("logarithmic", 1.0)
    with pytest.raises(ValueError):
        RateFunction("hoelder", 1.0, 1.0)
    with pytest.raises(ValueError):
        RateFunction.hoelder(1).evaluate(0.0)


def test_generalized_inverse_examples():
    assert rt.generalized_inverse(RateFunction.hoelder(1), 0.01) == pytest.approx(0.01, rel=1e-12)
    assert rt.generalized_inverse(RateFunction.hoelder(1), 4.0) == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(ValueError, match="noise level out of range"):
        RateFunction.logarithmic(1, 1).generalized_inverse(1e9)


@pytest.mark.parametrize("r", [RateFunction.hoelder(0.5), RateFunction.hoelder(3), RateFunction.logarithmic(1, 1)])
def test_inverse_roundtrip(r):
    for d in np.logspace(-8, -1, 20):
        assert r.hat(r.generalized_inverse(d)) == pytest.approx(d, rel=1e-8)


def test_phi_transform_closed_form():
    assert rt.phi_transform(RateFunction.hoelder(1), 0.01).value == pytest.approx(0.01, rel=1e-12)
    d = np.logspace(-9, 0, 20)
    for mu in (0.5, 1.0, 2.0, 4.0):
        np.testing.assert_allclose(RateFunction.hoelder(mu).transform(d), d ** (2 * mu / (mu + 1)), rtol=1e-8)


@given(st.floats(1e-8, 1.0), st.floats(1e-8, 1.0))
def test_phi_monotone(d1, d2):
    d1, d2 = min(d1, d2), max(d1, d2)
    r = RateFunction.logarithmic(1.0, 2.0)
    assert r.phi_transform(d1).value <= r.phi_transform(d2).value * (1 + 1e-12)


def test_transform_monotone_in_rate():
    # alpha^2 <= alpha^1 on (0, 1]; both inversions stay in (0, 1] for delta <= 1
    lo, hi = RateFunction.hoelder(2.0), RateFunction.hoelder(1.0)
    for d in np.logspace(-8, 0, 30):
        assert lo.phi_transform(d).value <= hi.phi_transform(d).value + 1e-12


@pytest.mark.parametrize("C,c", [(2, 1), (1, 3), (5, 5)])
def test_transform_scaling(C, c):
    phi = RateFunction.hoelder(1.5)
    psi = MonotoneRate(lambda a: C ** 2 * phi.evaluate(c ** 2 * a))
    for d in np.logspace(-6, -1, 10):
        assert psi.phi_transform(d).value == pytest.approx(C ** 2 * phi.phi_transform(c / C * d).value, rel=1e-8)


def test_transform_submultiplicative():
    rng = np.random.default_rng(0)
    for mu in (0.5, 2.0):
        phi = RateFunction.hoelder(mu)
        G = MonotoneRate(lambda g, mu=mu: g ** mu)
        for _ in range(100):
            s, d = 10 ** rng.uniform(0, 2), 10 ** rng.uniform(-8, -3)
            assert phi.phi_transform(s * d).value <= G.phi_transform(s).value * phi.phi_transform(d).value * (1 + 1e-8)


def _brute_inverse(step, delta):
    grid = np.concatenate([step.breakpoints, delta ** 2 / step.values[step.values > 0]])
    grid = np.sort(grid[grid > 0])
    ok = grid * step.evaluate(grid) >= delta ** 2 * (1 - 1e-15)
    return grid[np.argmax(ok)]


def test_step_inverse_is_exact_infimum():
    pr = diagonal_problem(50, 1.0, 1.0, seed=3)
    step = StepRate.from_tail(spectral_tail(pr.decomposition(), pr.x_dagger))
    for d in np.logspace(-5, -1, 40):
        a = step.generalized_inverse(d)
        assert a == pytest.approx(_brute_inverse(step, d), rel=1e-12)
        assert a * step.evaluate(a) >= d * d * (1 - 1e-12)
        # right continuity: Phi[e](delta) <= e(e_hat^{-1}(delta))
        assert step.phi_transform(d).value <= step.evaluate(a) * (1 + 1e-12)
    with pytest.raises(ValueError):
        step.generalized_inverse(0.0)


def test_subhomogeneity():
    assert rt.subhomogeneity_bound(RateFunction.hoelder(2), 3.0) == 9.0
    assert rt.subhomogeneity_bound(RateFunction.hoelder(2), 1.0) == 1.0
    r = RateFunction.logarithmic(1, 1)
    assert rt.subhomogeneity_bound(r, 1.0) == 1.0
    coarse = rt.subhomogeneity_bound(r, 10.0, n_grid=2000, margin=0.0)
    fine = rt.subhomogeneity_bound(r, 10.0, n_grid=40000, margin=0.0)
    assert fine == pytest.approx(coarse, rel=1e-9)
    assert fine == pytest.approx(1 + math.log(10.0), rel=1e-12)
    with pytest.raises(ValueError):
        rt.subhomogeneity_bound(r, 0.5)


def test_compatibility():
    rep = rt.compatibility_bound(FlowFilter.showalter(), RateFunction.hoelder(1), 1.0)
    assert rep.passed and rep.max_violation <= 1e-15
    rep = rt.compatibility_bound(FlowFilter.heavy_ball(2.0), RateFunction.logarithmic(1, 1), 1.0)
    assert rep.passed
    assert rep.row()[-1] == "pass"
    with pytest.raises(ValueError, match="incompatible: saturation"):
        rt.compatibility_function(FlowFilter.viscosity(3.0), RateFunction.hoelder(2), 1.0)


def test_write_reports_csv(tmp_path):
    rep = rt.compatibility_bound(FlowFilter.viscosity(5.0), RateFunction.hoelder(1), 1.0, n_grid=50)
    p = tmp_path / "rep.csv"
    rt.write_reports_csv(p, [rep])
    lines = p.read_text().splitlines()
    assert lines[0].startswith("check_name") and len(lines) == 2


def test_variational_estimate():
    dec = SpectralDecomposition.from_diagonal([1.0, 0.5, 0.25])
    r = RateFunction.hoelder(1.0)
    assert rt.variational_condition_estimate(dec, np.zeros(3), r, 0.5, 10).value == 0.0
    xd = np.array([0.0, 1.0, 0.0])
    est = rt.variational_condition_estimate(dec, xd, r, 0.5, 5)
    # eigenvector candidate v_2: <x_dagger, v_2> / phi(lambda_2)^{1/2}
    assert est.value >= 1.0 / math.sqrt(0.25) - 1e-12
    assert float(est) == est.value
    with pytest.raises(ValueError):
        rt.variational_condition_estimate(dec, xd, r, 1.5, 5)


def test_variational_bounded_in_n():
    vals = []
    for n in (100, 400, 1600):
        pr = diagonal_problem(n, 1.0, 1.0, seed=0)
        vals.append(rt.variational_condition_estimate(pr.decomposition(), pr.x_dagger, RateFunction.hoelder(1.0),
                                                      0.5, 20).value)
    assert max(vals) <= 2.0 * min(vals)


def test_dense_decomposition_tail_rate():
    a = np.diag([1.0, 0.1, 0.01])
    step = StepRate.from_tail(spectral_tail(decompose(a), np.ones(3)))
    assert step.evaluate(0.5) == pytest.approx(2.0)
