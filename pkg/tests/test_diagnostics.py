import math

import numpy as np
import pytest

from regflow import diagnostics as dg
from regflow.flow_filters import FlowFilter
from regflow.problems import add_noise, diagonal_problem
from regflow.rate_theory import RateFunction, StepRate, compatibility_bound, compatibility_function
from regflow.spectral_core import SpectralDecomposition, apply_spectral_function, decompose, spectral_tail

FILTERS = [FlowFilter.showalter(), FlowFilter.heavy_ball(3.0), FlowFilter.viscosity(5.0)]


@pytest.fixture(scope="module")
def small():
    pr = diagonal_problem(200, 1.0, 1.0, seed=0)
    return pr, pr.decomposition()


def test_zero_solution_curves():
    dec = SpectralDecomposition.from_diagonal([1.0, 0.5])
    for c in dg.noise_free_curves(dec, FlowFilter.showalter(), np.zeros(2), dg.log_grid(1e-3, 1, 10)):
        assert np.all(c.values == 0.0)


def test_scalar_showalter_d():
    dec = SpectralDecomposition.from_diagonal([1.0])
    a = dg.log_grid(0.1, 10.0, 20)
    d, D, q, Q = dg.noise_free_curves(dec, FlowFilter.showalter(), np.ones(1), a)
    np.testing.assert_allclose(d.values, np.exp(-2 / a), rtol=1e-14)
    np.testing.assert_allclose(D.values, d.values)


@pytest.mark.parametrize("f", FILTERS, ids=lambda f: f.label)
def test_two_path_d_and_q(f):
    rng = np.random.default_rng(1)
    L = rng.standard_normal((10, 10))
    L /= np.linalg.norm(L, 2)
    dec = decompose(L)
    x = rng.standard_normal(10)
    y = L @ x
    a = dg.log_grid(1e-3, 1.0, 8)
    d, D, q, Q = dg.noise_free_curves(dec, f, x, a)
    for i, al in enumerate(a):
        xa = apply_spectral_function(dec, lambda lam: f.generator(al, lam), y)
        assert d.values[i] == pytest.approx(np.sum((xa - x) ** 2), rel=1e-10, abs=1e-14)
        assert q.values[i] == pytest.approx(np.sum((L @ xa - y) ** 2), rel=1e-10, abs=1e-14)
    assert np.all(d.values <= D.values * (1 + 1e-12) + 1e-300)
    assert np.all(q.values <= Q.values * (1 + 1e-12) + 1e-300)


@pytest.mark.parametrize("f", FILTERS, ids=lambda f: f.label)
def test_exact_data_sandwich(small, f):
    pr, dec = small
    a = dg.log_grid(1e-6, 1.0, 120)
    d, D, _, _ = dg.noise_free_curves(dec, f, pr.x_dagger, a)
    e = dg.tail_curve(dec, pr.x_dagger, a)
    s = f.constants.sigma_bound
    assert np.all((1 - s) ** 2 * e.values <= d.values * (1 + 1e-12))
    assert np.all(d.values <= D.values * (1 + 1e-12))


@pytest.mark.parametrize("f", FILTERS, ids=lambda f: f.label)
def test_envelope_rate_bound(small, f):
    # D(alpha) <= (1 + F(1) + ||F||_1) C_e phi(alpha) when e <= C_e phi
    pr, dec = small
    mu = 1.0
    r = RateFunction.hoelder(mu)
    tail = spectral_tail(dec, pr.x_dagger)
    c_e = float(np.max(tail.cumulative / r.evaluate(tail.eigenvalues)))
    Lam = dec.operator_norm ** 2
    rep = compatibility_bound(f, r, Lam, n_grid=60)
    F = compatibility_function(f, r, Lam)
    bound = (1 + float(F(1.0)) + rep.integral) * c_e
    a = dg.log_grid(1e-5, Lam, 60)
    _, D, _, _ = dg.noise_free_curves(dec, f, pr.x_dagger, a)
    assert np.all(D.values / r.evaluate(a) <= bound * 1.01)


def test_trajectory_initial_and_monotone(small):
    pr, dec = small
    t = np.concatenate([[0.0], dg.log_grid(1e-2, 1e4, 100)])
    err, res = dg.flow_trajectory(dec, FlowFilter.showalter(), pr.y, t, pr.x_dagger)
    assert res.values[0] == pytest.approx(np.dot(pr.y, pr.y), rel=1e-14)
    assert err.values[0] == pytest.approx(np.dot(pr.x_dagger, pr.x_dagger), rel=1e-14)
    assert np.all(np.diff(err.values) <= 0)
    with pytest.raises(ValueError):
        dg.flow_trajectory(dec, FlowFilter.showalter(), pr.y, [2.0, 1.0])


def test_viscosity_residual_bounded(small):
    pr, dec = small
    t = dg.log_grid(1e-2, 1e4, 200)
    err, res = dg.flow_trajectory(dec, FlowFilter.viscosity(2.0), pr.y, t)
    assert err is None
    assert np.all(res.values <= np.dot(pr.y, pr.y) * (1 + 1e-12))


def test_trajectory_counts_data_outside_range():
    dec = decompose(np.array([[1.0, 0.0], [0.0, 0.0]]))
    _, res = dg.flow_trajectory(dec, FlowFilter.showalter(), np.array([1.0, 2.0]), [1e6])
    assert res.values[0] == pytest.approx(4.0, rel=1e-12)


def test_fit_rate_examples():
    g = dg.log_grid(1e-3, 1e3, 61)
    fit = dg.fit_rate(dg.DiagnosticsCurve(g, g ** -2.0, "d"))
    assert fit.slope == pytest.approx(-2.0, abs=1e-12) and fit.r2 == pytest.approx(1.0)
    assert dg.fit_rate(dg.DiagnosticsCurve(g, np.full_like(g, 3.0), "d")).slope == pytest.approx(0.0, abs=1e-12)
    v = g ** -2.0
    v[10] = 0.0
    with pytest.raises(ValueError, match="cannot fit log-log"):
        dg.fit_rate(dg.DiagnosticsCurve(g, v, "d"), (5, 20))
    fitted = dg.DiagnosticsCurve(g, g ** 1.5, "D").fitted()
    assert fitted.fitted_slope == pytest.approx(1.5) and fitted.fit_window == (0, 60)


def test_curve_validation():
    with pytest.raises(ValueError):
        dg.DiagnosticsCurve(np.array([1.0, 1.0]), np.array([1.0, 2.0]), "d")
    with pytest.raises(ValueError):
        dg.DiagnosticsCurve(np.array([1.0, 2.0]), np.array([1.0, -2.0]), "d")
    with pytest.raises(ValueError):
        dg.DiagnosticsCurve(np.array([1.0, 2.0]), np.array([1.0, 2.0]), "nope")


def test_auto_window_excludes_plateau():
    g = dg.log_grid(1e-4, 1.0, 121)
    v = np.maximum(g, 1e-2) ** 1.0
    i, j = dg.auto_window(dg.DiagnosticsCurve(g, v, "d"))
    assert g[i] >= 5e-3 and j == 120


def test_showalter_d_rate(small):
    pr = diagonal_problem(2000, 1.0, 1.0, seed=0)
    dec = pr.decomposition()
    f = FlowFilter.showalter()
    a = dg.log_grid(dec.eigenvalues.min() * 10, 0.1, 300)
    d, _, _, _ = dg.noise_free_curves(dec, f, pr.x_dagger, a)
    fit = dg.fit_rate(d)
    assert fit.slope == pytest.approx(1.0, abs=0.15) and fit.r2 >= 0.99


def test_best_worst_case_properties(small):
    pr, dec = small
    f = FlowFilter.showalter()
    a = dg.log_grid(1e-6, 10.0, 200)
    deltas = np.concatenate([[0.0], dg.log_grid(1e-5, 1e-2, 7)])
    bw = dg.best_worst_case(dec, f, pr.x_dagger, deltas, a)
    d, _, _, _ = dg.noise_free_curves(dec, f, pr.x_dagger, a)
    assert bw.curve.values[0] == pytest.approx(d.values.min())
    assert np.all(np.diff(bw.curve.values) >= 0)
    phi_e, phi_D = dg.transform_bounds(dec, f, pr.x_dagger, deltas[1:])
    s = f.constants.sigma_bound
    assert np.all(bw.curve.values[1:] <= (1 + s) ** 2 * phi_D)
    ratio = bw.curve.values[1:] / phi_e
    assert np.all(ratio > 0.05) and ratio.max() / ratio.min() < 10
    assert len(bw.worst_candidate) == deltas.size and "gaussian" in bw.candidate_family


def test_best_worst_case_candidate_closed_form(small):
    # the +-u_k candidates use a closed form; compare one against a direct evaluation
    pr, dec = small
    f = FlowFilter.heavy_ball(3.0)
    a = dg.log_grid(1e-5, 1.0, 50)
    delta = 1e-3
    bw = dg.best_worst_case(dec, f, pr.x_dagger, [delta], a, directions=0)
    name = bw.worst_candidate[0]
    if name.startswith(("+u", "-u")):
        k = int(name[3:-1])
        h = np.zeros(dec.rank)
        h[k] = delta if name[0] == "+" else -delta
        errs = [np.sum((dg.regularized_solution(dec, f, pr.y + h, f.time_map(al)) - pr.x_dagger) ** 2) for al in a]
        assert bw.curve.values[0] == pytest.approx(min(errs), rel=1e-9)


def test_discrepancy_scalar():
    dec = SpectralDecomposition.from_diagonal([1.0])
    y, delta, tau = np.array([1.0]), 1e-3, 2.0
    t = dg.log_grid(1e-2, 1e3, 2001)
    st = dg.discrepancy_stop(dec, FlowFilter.showalter(), y, delta, tau, t)
    exact = math.log(1.0 / (tau * delta))
    assert t[st.index - 1] < exact <= st.t_stop
    assert st.residual_at_stop <= tau * delta and st.error_at_stop is None


def test_discrepancy_degenerate_and_errors():
    dec = SpectralDecomposition.from_diagonal([1.0])
    st = dg.discrepancy_stop(dec, FlowFilter.showalter(), np.array([1.0]), 1.0, 2.0, [0.1, 1.0])
    assert st.index == 0
    with pytest.raises(dg.DiscrepancyNotReached, match="discrepancy level not reached"):
        dg.discrepancy_stop(dec, FlowFilter.showalter(), np.array([1.0]), 1e-6, 2.0, [0.1, 1.0])
    with pytest.raises(ValueError):
        dg.discrepancy_stop(dec, FlowFilter.showalter(), np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        dg.discrepancy_stop(dec, FlowFilter.showalter(), np.array([1.0]), 1e-3, tau_factor=1.0)


def test_discrepancy_counts_crossings(small):
    pr, dec = small
    nd = add_noise(pr.y, 1e-3, seed=1)
    st = dg.discrepancy_stop(dec, FlowFilter.viscosity(2.0), nd.y_tilde, 1e-3, x_dagger=pr.x_dagger)
    assert st.crossings >= 1 and st.error_at_stop > 0


def test_write_curve_csv(tmp_path):
    c = dg.DiagnosticsCurve(np.array([1.0, 2.0]), np.array([3.0, 4.0]), "d")
    p = tmp_path / "c.csv"
    dg.write_curve_csv(p, c, "stamp")
    assert p.read_text().splitlines() == ["# stamp", "grid,d", "1.000000000000e+00,3.000000000000e+00",
                                          "2.000000000000e+00,4.000000000000e+00"]


def test_step_rate_matches_tail(small):
    pr, dec = small
    tail = spectral_tail(dec, pr.x_dagger)
    step = StepRate.from_tail(tail)
    lam = dg.log_grid(1e-6, 2.0, 50)
    np.testing.assert_allclose(step.evaluate(lam), tail(lam))
