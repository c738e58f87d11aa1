import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regflow import flow_filters as ff
from regflow.flow_filters import FilterKind, FlowFilter

FILTERS = [FlowFilter.showalter(), FlowFilter.heavy_ball(1.0), FlowFilter.heavy_ball(3.0),
           FlowFilter.viscosity(2.0), FlowFilter.viscosity(3.0), FlowFilter.viscosity(5.0)]
IDS = [f.label for f in FILTERS]

pos_t = st.floats(min_value=1e-4, max_value=1e4)
pos_lam = st.floats(min_value=1e-6, max_value=10.0)


def test_sigma0_is_sup_of_aux_function():
    z = np.logspace(-6, 3, 200001)
    sup = np.max(-np.expm1(-z) / np.sqrt(z))
    s0 = ff.compute_sigma0()
    assert sup <= s0 + 1e-9
    assert s0 - sup < 1e-8
    z0 = ff.compute_z0()
    assert 2 * z0 + 1 == pytest.approx(math.exp(z0), rel=1e-14)


def test_sigma1():
    assert ff.compute_sigma1() == pytest.approx(math.sqrt(2 / math.e), rel=1e-15)
    assert 0 < ff.compute_sigma0() < ff.compute_sigma1() < 1


@pytest.mark.parametrize("b", [2.0, 3.0, 5.0])
def test_tau_b_properties(b):
    f = FlowFilter.viscosity(b)
    tb, j = f.constants.tau_b, f.constants.bessel_zero
    assert 0 < tb <= j
    tau = np.linspace(0.0, 300.0, 300001)
    u = f.rho_tilde(tau, np.ones_like(tau))
    assert np.all(u >= 1 - tau / (2 * tb) - 1e-13)
    # maximal: a slightly larger tau_b breaks the inequality somewhere
    big = tb * (1 + 1e-4)
    assert tb == j or np.any(u < 1 - tau / (2 * big))


def test_viscosity_b2_tau_b_is_half_pi():
    assert FlowFilter.viscosity(2.0).constants.tau_b == pytest.approx(math.pi / 2, rel=1e-8)


def test_constructor_validation():
    with pytest.raises(ValueError):
        FlowFilter("showalter", 1.0)
    with pytest.raises(ValueError):
        FlowFilter("heavy-ball")
    with pytest.raises(ValueError):
        FlowFilter("viscosity", -1.0)
    with pytest.raises(ValueError):
        FlowFilter("newton")
    with pytest.raises(ValueError):
        FlowFilter.viscosity(200.0)  # Bessel order beyond the supported range
    assert ff.make_filter("heavy-ball", 2).kind is FilterKind.HEAVY_BALL


@pytest.mark.parametrize("f", FILTERS, ids=IDS)
def test_boundary_values(f):
    lam = np.logspace(-6, 1, 20)
    assert np.all(f.rho_tilde(np.zeros_like(lam), lam) == 1.0)
    t = np.logspace(-3, 3, 20)
    assert np.all(f.rho_tilde(t, np.zeros_like(t)) == 1.0)
    with pytest.raises(ValueError):
        f.rho_tilde(-1.0, 1.0)


def test_showalter_closed_form():
    f = FlowFilter.showalter()
    assert f.rho_tilde(2.0, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert f.rho(1e-3, 1e-9) == pytest.approx(-math.expm1(-1e-12) / 1e-9, rel=1e-12)


def test_viscosity_b2_is_sinc():
    f = FlowFilter.viscosity(2.0)
    t = np.linspace(0.01, 80.0, 4000)
    np.testing.assert_allclose(f.rho_tilde(t, np.ones_like(t)), np.sin(t) / t, atol=1e-12)


@pytest.mark.parametrize("f", FILTERS, ids=IDS)
def test_rho_continuous_at_zero(f):
    t = np.array([0.5, 3.0, 20.0])
    lim = f.rho(t, np.zeros(3))
    near = f.rho(t, np.full(3, 1e-12))
    np.testing.assert_allclose(near, lim, rtol=1e-6)
    np.testing.assert_allclose(lim, f.rho_zero_limit(t))


@pytest.mark.parametrize("f", FILTERS, ids=IDS)
@given(t=pos_t, lam=pos_lam)
def test_envelope_dominates(f, t, lam):
    rt = f.rho_tilde(t, lam)
    env = f.envelope(t, lam)
    assert abs(rt) <= env + 1e-12
    assert 0.0 <= env <= 1.0


@pytest.mark.parametrize("f", FILTERS, ids=IDS)
@given(t=pos_t, lam=pos_lam, k=st.floats(min_value=1.0, max_value=10.0))
def test_envelope_monotone(f, t, lam, k):
    assert f.envelope(k * t, lam) <= f.envelope(t, lam) + 1e-12
    assert f.envelope(t, k * lam) <= f.envelope(t, lam) + 1e-12


@pytest.mark.parametrize("f", FILTERS, ids=IDS)
@given(a=st.floats(min_value=1e-6, max_value=1e2), lam=pos_lam)
def test_generator_bounds(f, a, lam):
    r = f.generator(a, lam)
    R = f.envelope_generator(a, lam)
    s = f.constants.sigma_bound
    assert r >= -1e-15
    assert r <= 2.0 / lam * (1 + 1e-12)
    assert r <= s / math.sqrt(a * lam) * (1 + 1e-12)
    assert -1e-15 <= R <= r * (1 + 1e-12) + 1e-15


def test_generator_large_lambda():
    for f in FILTERS:
        assert f.generator(1.0, 1e6) <= 2e-6


def test_viscosity_envelope_tail_constant():
    for b in (3.0, 5.0):
        f = FlowFilter.viscosity(b)
        tau = np.logspace(-2, 4, 5000)
        env = f.envelope(tau, np.ones_like(tau))
        assert np.all(env <= f.constants.envelope_c * tau ** (-b / 2) * (1 + 1e-12))


@pytest.mark.parametrize("b", [1.0, 3.0])
def test_heavy_ball_psi_bound(b):
    f = FlowFilter.heavy_ball(b)
    for Lam in (1.0, b * b):
        t, lam = np.meshgrid(np.logspace(-3, 4, 100), np.logspace(-6, math.log10(Lam), 100))
        assert np.all(f.envelope(t, lam) <= f.psi_bound(lam * t, Lam) + 1e-12)
    with pytest.raises(ValueError):
        FlowFilter.showalter().psi_bound(1.0, 1.0)


@pytest.mark.parametrize("f", FILTERS, ids=IDS)
def test_time_map_roundtrip(f):
    a = np.logspace(-8, 2, 50)
    np.testing.assert_allclose(f.inverse_time_map(f.time_map(a)), a, rtol=1e-13)
    with pytest.raises(ValueError):
        f.time_map(0.0)
    with pytest.raises(ValueError):
        f.inverse_time_map(-1.0)


def test_envelope_at_alpha_below_one():
    assert FlowFilter.showalter().envelope_error(0.3, 0.3) == pytest.approx(math.exp(-1), rel=1e-14)
    for f in FILTERS:
        a = np.logspace(-8, 0, 500)
        assert np.max(f.envelope_error(a, a)) < 1.0


def test_functional_aliases():
    f = FlowFilter.heavy_ball(2.0)
    assert ff.rho_tilde(f, 1.0, 0.3) == f.rho_tilde(1.0, 0.3)
    assert ff.envelope(f, 1.0, 0.3) == f.envelope(1.0, 0.3)
    assert ff.time_map(f, 0.5) == f.time_map(0.5)
    assert ff.generator(f, 0.5, 0.3) == f.generator(0.5, 0.3)
    assert ff.envelope_generator(f, 0.5, 0.3) == f.envelope_generator(0.5, 0.3)
