"""Verification and benchmark suites shared by the CLI and the acceptance tests."""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from . import special_functions as sf
from .flow_filters import FilterConstants, FilterKind, FlowFilter, compute_sigma0, compute_sigma1
from .ode_oracle import oracle_compare
from .problems import add_noise, diagonal_problem
from .rate_theory import RateFunction, compatibility_bound, subhomogeneity_bound
from .spectral_core import spectral_tail

SUITES = ("constants", "envelope", "generator", "compatibility", "bessel", "transform", "oracle")
GRID_TOL = 1e-12
SLOPE_TOL = 0.15
RESIDUAL_TOL = 0.2
NOISY_TOL = 0.15
MIN_R2 = 0.95


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    points: int
    max_violation: float
    passed: bool

    def row(self):
        return [self.suite, self.name, self.points, f"{self.max_violation:.6e}",
                "pass" if self.passed else "fail"]


def _check(suite, name, excess, tol=0.0):
    """Result for the inequality excess <= tol, elementwise; reports the largest excess beyond tol."""
    excess = np.asarray(excess, dtype=np.float64).ravel()
    worst = float(np.max(excess)) if excess.size else -math.inf
    ok = bool(np.all(np.isfinite(excess)) and worst <= tol)
    return CheckResult(suite, name, int(excess.size), max(worst - tol, 0.0), ok)


def thread_count():
    """Worker count, capped by REGFLOW_THREADS."""
    cap = os.cpu_count() or 1
    env = os.environ.get("REGFLOW_THREADS")
    if env:
        try:
            cap = min(cap, max(1, int(env)))
        except ValueError:
            pass
    return cap


def _pmap(fn, items):
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def property_filters(sigma0=None):
    """The filters exercised by the property suites, optionally with a corrupted sigma0."""
    fs = [FlowFilter.showalter(), FlowFilter.heavy_ball(1.0), FlowFilter.heavy_ball(3.0),
          FlowFilter.viscosity(2.0), FlowFilter.viscosity(3.0), FlowFilter.viscosity(5.0)]
    if sigma0 is None:
        return fs
    out = []
    for f in fs:
        c = f.constants
        if f.kind is FilterKind.SHOWALTER:
            c = FilterConstants(sigma0=sigma0, sigma_bound=sigma0)
        elif f.kind is FilterKind.HEAVY_BALL:
            s1 = max(sigma0, math.sqrt(2.0 / math.e))
            c = FilterConstants(sigma0=sigma0, sigma_bound=s1, sigma1=s1)
        else:
            c = FilterConstants(sigma0, c.sigma_bound, c.sigma1, c.tau_b, c.bessel_zero, c.envelope_c)
        out.append(FlowFilter(f.kind, f.b, constants=c))
    return out


def _mesh(a_lo, a_hi, b_lo, b_hi, n=120):
    a, b = np.meshgrid(np.logspace(a_lo, a_hi, n), np.logspace(b_lo, b_hi, n), indexing="ij")
    return a, b


def constants_suite(sigma0=None):
    s0 = compute_sigma0() if sigma0 is None else sigma0
    z = np.logspace(-8, 3, 100001)
    res = [_check("constants", "aux1: 1-exp(-z) <= sigma0 sqrt(z)", -np.expm1(-z) / np.sqrt(z) - s0, 1e-9)]
    s1 = compute_sigma1() if sigma0 is None else max(sigma0, math.sqrt(2.0 / math.e))
    res.append(_check("constants", "sigma0, sigma1 in (0,1)", np.array([-s0, s0 - 1.0, -s1, s1 - 1.0]), -1e-12))
    for b in (2.0, 3.0, 5.0):
        f = FlowFilter.viscosity(b)
        tb, j = f.constants.tau_b, f.constants.bessel_zero
        tau = np.linspace(0.0, 400.0, 40001)[1:] + 0.0037
        u, _ = sf.normalized_bessel(f.kappa, tau)
        res.append(_check("constants", f"viscosity b={b:g}: u >= 1 - tau/(2 tau_b)",
                          (1.0 - tau / (2.0 * tb)) - u, GRID_TOL))
        res.append(_check("constants", f"viscosity b={b:g}: 0 < tau_b <= j", np.array([-tb, tb - j]), 0.0))
    return res


def envelope_suite(sigma0=None):
    res = []
    t, lam = _mesh(-3, 4, -6, 1)
    for f in property_filters(sigma0):
        rt = np.asarray(f.rho_tilde(t, lam))
        env = np.asarray(f.envelope(t, lam))
        res.append(_check("envelope", f"{f.label}: |rho_tilde| <= envelope", np.abs(rt) - env, GRID_TOL))
        res.append(_check("envelope", f"{f.label}: 0 <= envelope <= 1",
                          np.concatenate([(env - 1.0).ravel(), (-env).ravel()]), GRID_TOL))
        res.append(_check("envelope", f"{f.label}: envelope nonincreasing in t", np.diff(env, axis=0), GRID_TOL))
        res.append(_check("envelope", f"{f.label}: envelope nonincreasing in lambda", np.diff(env, axis=1), GRID_TOL))
        if f.kind is FilterKind.HEAVY_BALL:
            for Lam in (1.0, f.b * f.b):
                tt, ll = _mesh(-3, 4, -6, math.log10(Lam))
                e = np.asarray(f.envelope(tt, ll))
                res.append(_check("envelope", f"{f.label}: envelope <= Psi_{Lam:g}(lambda t)",
                                  e - f.psi_bound(ll * tt, Lam), GRID_TOL))
        if f.kind is FilterKind.VISCOSITY:
            tau = np.logspace(-3, math.log10(2e4), 20001)
            e = np.asarray(f.envelope(tau, np.ones_like(tau)))
            c = f.constants.envelope_c
            res.append(_check("envelope", f"{f.label}: envelope <= C tau^(-b/2)",
                              e - c * tau ** (-0.5 * f.b), GRID_TOL))
        alpha = np.logspace(-8, 0, 10001)
        sup = np.asarray(f.envelope_error(alpha, alpha))
        res.append(_check("envelope", f"{f.label}: R_tilde_alpha(alpha) < 1", sup - 1.0, -1e-6))
    return res


def generator_suite(sigma0=None):
    res = []
    a, lam = _mesh(-6, 2, -6, 1)
    for f in property_filters(sigma0):
        r = np.asarray(f.generator(a, lam))
        R = np.asarray(f.envelope_generator(a, lam))
        s = f.constants.sigma_bound
        res.append(_check("generator", f"{f.label}: r >= 0", -r, GRID_TOL))
        res.append(_check("generator", f"{f.label}: lambda r <= 2", lam * r - 2.0, GRID_TOL))
        res.append(_check("generator", f"{f.label}: r sqrt(alpha lambda) <= {s:.6g}",
                          r * np.sqrt(a * lam) - s, GRID_TOL))
        res.append(_check("generator", f"{f.label}: 0 <= R <= r",
                          np.concatenate([(-R).ravel(), (lam * (R - r)).ravel()]), GRID_TOL))
    return res


def compatibility_suite(sigma0=None):
    res = []
    for f in property_filters(sigma0):
        for mu in (0.5, 1.0, 2.0):
            if f.kind is FilterKind.VISCOSITY and mu >= 0.5 * f.b:
                continue
            rep = compatibility_bound(f, RateFunction.hoelder(mu), 1.0)
            res.append(CheckResult("compatibility", rep.check_name, rep.grid_size, rep.max_violation, rep.passed))
    return res


def bessel_suite():
    res = []
    tau = np.linspace(0.0, 100.0, 20001)[1:]
    exact = np.sqrt(2.0 / (np.pi * tau)) * np.sin(tau)
    res.append(_check("bessel", "J_1/2 = sqrt(2/(pi tau)) sin tau", np.abs(sf.bessel_j(0.5, tau) - exact), 1e-10))
    f = FlowFilter.viscosity(2.0)
    res.append(_check("bessel", "viscosity b=2 filter = sin(tau)/tau",
                      np.abs(np.asarray(f.rho_tilde(tau, np.ones_like(tau))) - np.sin(tau) / tau), 1e-10))
    for nu in (0.0, 1.0, 2.5, 10.0):
        z = np.linspace(0.5, 80.0, 10000)
        lhs = sf.bessel_j(nu, z) + sf.bessel_j(nu + 2.0, z)
        rhs = 2.0 * (nu + 1.0) / z * sf.bessel_j(nu + 1.0, z)
        res.append(_check("bessel", f"recurrence nu={nu:g}", np.abs(lhs - rhs), 1e-10))
    for nu in (0.0, 1.0):
        zs = [sf.first_positive_zero(nu, step=h) for h in (0.1, 0.05, 0.01)]
        res.append(_check("bessel", f"j_{nu:g},1 stable under scan refinement",
                          np.array([abs(z - zs[0]) for z in zs]), 1e-10))
    x = np.linspace(0.1, 50.0, 10000)
    g = np.array([sf.gamma(v) for v in x])
    g1 = np.array([sf.gamma(v + 1.0) for v in x])
    res.append(_check("bessel", "Gamma(x+1) = x Gamma(x)", np.abs(g1 / (x * g) - 1.0), 1e-12))
    for nu in (0.0, 3.0, 7.5):
        h = sf.hankel_switch(nu)
        pts = np.array([sf.series_switch(), h])
        a = sf.bessel_j_branch(nu, pts[:1], "series") - sf.bessel_j_branch(nu, pts[:1], "miller")
        b = sf.bessel_j_branch(nu, pts[1:], "miller") - sf.bessel_j_branch(nu, pts[1:], "hankel")
        res.append(_check("bessel", f"branch continuity nu={nu:g}", np.abs(np.concatenate([a, b])), 1e-10))
    return res


def transform_suite():
    res = []
    deltas = np.logspace(-8, -0.5, 20)
    for mu in (0.5, 1.0, 2.0, 4.0):
        r = RateFunction.hoelder(mu)
        got = r.transform(deltas)
        exact = deltas ** (2.0 * mu / (mu + 1.0))
        res.append(_check("transform", f"Phi[alpha^{mu:g}] = delta^(2mu/(mu+1))", np.abs(got / exact - 1.0), 1e-8))
    for mu, nu in ((1.0, 1.0), (2.0, 0.5)):
        r = RateFunction.logarithmic(mu, nu)
        dev = []
        for gam in (2.0, 10.0, 1e3):
            exact = (1.0 + nu * math.log(gam) / mu) ** mu
            dev.append(abs(subhomogeneity_bound(r, gam, margin=0.0) / exact - 1.0))
        res.append(_check("transform", f"log rate G(gamma) closed form mu={mu:g} nu={nu:g}", np.array(dev), 1e-9))
    return res


def oracle_suite(seeds=(0, 1, 2), checkpoints=(1.0, 10.0)):
    res = []
    filters = [FlowFilter.showalter(), FlowFilter.heavy_ball(1.0), FlowFilter.heavy_ball(3.0),
               FlowFilter.viscosity(2.0), FlowFilter.viscosity(3.0), FlowFilter.viscosity(5.0)]
    for seed in seeds:
        rng = np.random.default_rng(seed)
        L = rng.standard_normal((8, 8))
        L /= np.linalg.norm(L, 2)
        y = rng.standard_normal(8)
        for f in filters:
            rep = oracle_compare(L, f, y, checkpoints)
            res.append(CheckResult("oracle", f"{f.label} seed={seed}", len(checkpoints), rep.max_deviation,
                                   rep.passed))
    return res


def run_verify(only=None, sigma0=None):
    """All (or the selected) verification suites, as a flat list of CheckResult."""
    table = {
        "constants": lambda: constants_suite(sigma0),
        "envelope": lambda: envelope_suite(sigma0),
        "generator": lambda: generator_suite(sigma0),
        "compatibility": lambda: compatibility_suite(sigma0),
        "bessel": bessel_suite,
        "transform": transform_suite,
        "oracle": oracle_suite,
    }
    names = SUITES if not only else only
    for n in names:
        if n not in table:
            raise ValueError(f"unknown suite {n!r}; known: {', '.join(SUITES)}")
    out = []
    for n in names:
        out.extend(table[n]())
    return out


# rate benchmarks


@dataclass(frozen=True)
class RateRow:
    method: str
    b: float | None
    mu: float
    quantity: str
    expected: float | None
    slope: float | None
    window: tuple | None
    r2: float | None
    tolerance: float | None
    status: str

    def row(self):
        def fmt(v):
            return "" if v is None else f"{v:.6f}"
        w = ("", "") if self.window is None else (f"{self.window[0]:.6e}", f"{self.window[1]:.6e}")
        return [self.method, "" if self.b is None else f"{self.b:g}", f"{self.mu:g}", self.quantity,
                fmt(self.expected), fmt(self.slope), w[0], w[1], fmt(self.r2), fmt(self.tolerance), self.status]


RATE_COLUMNS = ["method", "b", "mu", "quantity", "expected_slope", "fitted_slope", "window_lo", "window_hi",
                "r2", "tolerance", "status"]


@dataclass(frozen=True)
class RateSettings:
    n: int = 2000
    p_clean: float = 1.0
    p_noisy: float = 2.0
    per_decade: int = 60
    delta_lo: float = 1e-6
    delta_hi: float = 1e-2
    delta_count: int = 9
    noise_seeds: int = 5
    seed: int = 0
    slope_tol: float = SLOPE_TOL
    residual_tol: float = RESIDUAL_TOL
    noisy_tol: float = NOISY_TOL

    @classmethod
    def quick(cls, **kw):
        # n = 200 leaves the viscosity mu = 0.5 fit 0.016 outside tolerance; n = 400 is still < 2 s
        return cls(**{"n": 400, "per_decade": 20, "noise_seeds": 2, **kw})


@dataclass(frozen=True)
class RateTask:
    """Result of one (method, mu) run: summary rows, plot curves and sandwich checks."""

    rows: list
    curves: dict
    checks: list


def _fit_row(curve, f, mu, quantity, expected, tol):
    try:
        fit = dg.fit_rate(curve)
    except ValueError:
        return RateRow(f.kind.value, f.b, mu, quantity, expected, None, None, None, tol, "fail")
    ok = abs(fit.slope - expected) <= tol and fit.r2 >= MIN_R2
    win = (float(curve.grid[fit.window[0]]), float(curve.grid[fit.window[1]]))
    return RateRow(f.kind.value, f.b, mu, quantity, expected, fit.slope, win, fit.r2, tol, "pass" if ok else "fail")


def saturated(f, mu):
    return f.kind is FilterKind.VISCOSITY and mu >= 0.5 * f.b


def run_rate_task(f, mu, settings):
    """Noise-free, residual and noisy rate fits plus the sandwich inequalities for one (method, mu)."""
    tag = f"{f.label} mu={mu:g}"
    if saturated(f, mu):
        row = RateRow(f.kind.value, f.b, mu, "error", None, None, None, None, None, "saturation")
        return RateTask([row], {}, [])
    rows, curves, checks = [], {}, []
    second = f.kind is FilterKind.VISCOSITY
    s = settings

    # noise-free trajectories
    pr = diagonal_problem(s.n, s.p_clean, mu, seed=s.seed)
    dec = pr.decomposition()
    lmin = float(dec.eigenvalues.min())
    tlo, thi = sorted(np.atleast_1d(f.time_map(np.array([1e-1, 10.0 * lmin]))))
    tg = dg.log_grid(tlo, thi, int(s.per_decade * math.log10(thi / tlo)) + 1)
    err, res = dg.flow_trajectory(dec, f, pr.y, tg, pr.x_dagger)
    curves["error_vs_t"], curves["residual_vs_t"] = err, res
    rows.append(_fit_row(err, f, mu, "error", -2.0 * mu if second else -mu, s.slope_tol))
    if not second or mu < 0.5 * f.b - 1.0:
        rows.append(_fit_row(res, f, mu, "residual", -2.0 * (mu + 1.0) if second else -(mu + 1.0), s.residual_tol))
    else:
        rows.append(RateRow(f.kind.value, f.b, mu, "residual", None, None, None, None, None, "excluded"))

    # exact-data sandwich (1 - sigma)^2 e <= d <= D on the alpha grid
    sigma = f.constants.sigma_bound
    alpha = np.asarray(f.inverse_time_map(tg))[::-1]
    d, D, _, _ = dg.noise_free_curves(dec, f, pr.x_dagger, alpha)
    e = dg.tail_curve(dec, pr.x_dagger, alpha)
    scale = max(float(np.max(D.values)), 1e-300)
    checks.append(_check("sandwich", f"{tag}: (1-sigma)^2 e <= d", ((1 - sigma) ** 2 * e.values - d.values) / scale,
                         GRID_TOL))
    checks.append(_check("sandwich", f"{tag}: d <= D", (d.values - D.values) / scale, GRID_TOL))

    # noisy best-worst-case error
    prn = diagonal_problem(s.n, s.p_noisy, mu, seed=s.seed)
    decn = prn.decomposition()
    lmin = float(decn.eigenvalues.min())
    lo = lmin * 1e-2
    ag = dg.log_grid(lo, 10.0, int(s.per_decade * math.log10(10.0 / lo)) + 1)
    deltas = dg.log_grid(s.delta_lo, s.delta_hi, s.delta_count)
    vals = None
    for k in range(s.noise_seeds):
        bw = dg.best_worst_case(decn, f, prn.x_dagger, deltas, ag, directions=5, seed=s.seed + k)
        vals = bw.curve.values if vals is None else np.maximum(vals, bw.curve.values)
    dt = dg.DiagnosticsCurve(deltas, vals, "d_tilde")
    curves["d_tilde"] = dt
    try:
        fit = dg.fit_rate(dt, (0, deltas.size - 1))
        expected = 2.0 * mu / (mu + 1.0)
        ok = abs(fit.slope - expected) <= s.noisy_tol and fit.r2 >= MIN_R2
        rows.append(RateRow(f.kind.value, f.b, mu, "noisy", expected, fit.slope, (deltas[0], deltas[-1]), fit.r2,
                            s.noisy_tol, "pass" if ok else "fail"))
    except ValueError:
        rows.append(RateRow(f.kind.value, f.b, mu, "noisy", 2.0 * mu / (mu + 1.0), None, None, None, s.noisy_tol,
                            "fail"))
    _, phi_D = dg.transform_bounds(decn, f, prn.x_dagger, deltas)
    checks.append(_check("sandwich", f"{tag}: d_tilde <= (1+sigma)^2 Phi[D]",
                         (vals - (1 + sigma) ** 2 * phi_D) / np.maximum(phi_D, 1e-300), GRID_TOL))
    return RateTask(rows, curves, checks)


def default_rate_filters():
    return [FlowFilter.showalter(), FlowFilter.heavy_ball(3.0), FlowFilter.viscosity(5.0)]


def run_rates(filters=None, mus=(0.5, 1.0, 2.0), settings=None):
    """Run the (method, mu) matrix in parallel; results in matrix order."""
    filters = filters or default_rate_filters()
    settings = settings or RateSettings()
    tasks = [(f, float(mu)) for f in filters for mu in mus]
    return tasks, _pmap(lambda fm: run_rate_task(fm[0], fm[1], settings), tasks)


# discrepancy principle


@dataclass(frozen=True)
class DiscrepancyReport:
    method: str
    draws: int
    max_ratio: float
    max_crossings: int
    unreached: int
    passed: bool


def discrepancy_suite(filters=None, draws=20, n=2000, p=1.0, mu=1.0, delta=1e-3, tau_factor=2.0, factor=10.0):
    """Stopped error against the grid-optimal error over seeded noise draws."""
    filters = filters or [FlowFilter.showalter(), FlowFilter.heavy_ball(1.0), FlowFilter.heavy_ball(3.0),
                          FlowFilter.viscosity(2.0), FlowFilter.viscosity(5.0)]
    pr = diagonal_problem(n, p, mu, seed=0)
    dec = pr.decomposition()
    tg = dg.log_grid(1e-2, 1e8, 600)
    out = []
    for f in filters:
        ratios, cross, miss = [], [], 0
        for s in range(draws):
            nd = add_noise(pr.y, delta, seed=s)
            try:
                st = dg.discrepancy_stop(dec, f, nd.y_tilde, delta, tau_factor, tg, pr.x_dagger)
            except dg.DiscrepancyNotReached:
                miss += 1
                continue
            err, _ = dg.flow_trajectory(dec, f, nd.y_tilde, tg, pr.x_dagger)
            ratios.append(st.error_at_stop / math.sqrt(float(err.values.min())))
            cross.append(st.crossings)
        mr = max(ratios) if ratios else math.inf
        out.append(DiscrepancyReport(f.label, draws, mr, max(cross) if cross else 0, miss,
                                     miss == 0 and mr <= factor))
    return out


def tail_slope(problem):
    """Fitted slope of log e(lambda) against log lambda on the interior decades."""
    dec = problem.decomposition()
    tail = spectral_tail(dec, problem.x_dagger)
    lam = tail.eigenvalues
    # two decades above lambda_min: the finite sum truncates the tail there
    sel = lam[(lam >= 100.0 * lam.min()) & (lam <= 0.1 * lam.max())]
    curve = dg.DiagnosticsCurve(sel, np.asarray(tail(sel), dtype=float), "e")
    return dg.fit_rate(curve, (0, sel.size - 1)).slope
