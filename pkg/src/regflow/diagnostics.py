"""Error quantities as exact spectral sums, rate fits and discrepancy stopping.

With c_k = <v_k, x_dagger>, the noise-free quantities are
d(alpha) = sum r_tilde_alpha(lambda_k)^2 c_k^2 and q(alpha) = sum lambda_k r_tilde^2 c_k^2,
and D, Q the same with the envelope R_tilde in place of r_tilde.
"""
import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .rate_theory import MonotoneRate, StepRate
from .spectral_core import spectral_tail

QUANTITIES = ("d", "D", "q", "Q", "e", "d_tilde", "residual_vs_t", "error_vs_t")
DEFAULT_TAU_FACTOR = 2.0
SLOPE_SPREAD = 0.1
PLATEAU_SLOPE = 0.05
_CHUNK = 1 << 22


class DiscrepancyNotReached(RuntimeError):
    def __init__(self, final_residual, threshold):
        super().__init__(f"discrepancy level not reached: final residual {final_residual:.6e} "
                         f"> threshold {threshold:.6e}")
        self.final_residual = final_residual
        self.threshold = threshold


@dataclass(frozen=True, eq=False)
class DiagnosticsCurve:
    """Sampled quantity on a strictly increasing grid, with an optional log-log fit."""

    grid: np.ndarray
    values: np.ndarray
    quantity: str
    fitted_slope: float | None = None
    fit_window: tuple | None = None
    r2: float | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(g) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("values must be finite and >= 0")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def fitted(self, window=None):
        """Copy of the curve with slope, window and R^2 filled in."""
        fit = fit_rate(self, window)
        return replace(self, fitted_slope=fit.slope, fit_window=fit.window, r2=fit.r2)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    window: tuple


def log_grid(lo, hi, count):
    """count log-spaced points from lo to hi inclusive."""
    if not (0.0 < lo < hi) or count < 2:
        raise ValueError("log grid needs 0 < lo < hi and count >= 2")
    return np.logspace(math.log10(lo), math.log10(hi), int(count))


def _coefficients(dec, x_dagger):
    c = dec.solution_coefficients(x_dagger)
    null = max(float(np.dot(x_dagger, x_dagger) - np.dot(c, c)), 0.0)
    return c, null


def _chunks(n_rows, n_cols):
    step = max(1, _CHUNK // max(n_cols, 1))
    for i in range(0, n_rows, step):
        yield slice(i, min(i + step, n_rows))


def _filter_table(f, times, lam, envelope=False):
    """(value, complement) of rho_tilde (or the envelope) on the outer grid times x lam."""
    t = np.asarray(times, dtype=np.float64)[:, None]
    lam = np.asarray(lam, dtype=np.float64)[None, :]
    t, lam = np.broadcast_arrays(t, lam)
    return f._env_om(t, lam) if envelope else f._rt_om(t, lam)


def spectral_sum(f, times, lam, weights, envelope=False, power=0):
    """sum_k lam_k^power F(t; lam_k)^2 weights_k for every t, F = rho_tilde or envelope."""
    times = np.asarray(times, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64) * np.asarray(lam, dtype=np.float64) ** power
    out = np.empty(times.size)
    for sl in _chunks(times.size, len(lam)):
        val, _ = _filter_table(f, times[sl], lam, envelope)
        out[sl] = (val * val) @ w
    return out


def noise_free_curves(dec, f, x_dagger, alpha_grid):
    """Curves d, D, q, Q over alpha_grid (spectral-sum form)."""
    alpha = np.asarray(alpha_grid, dtype=np.float64)
    c, null = _coefficients(dec, x_dagger)
    lam = dec.eigenvalues
    w = c * c
    times = np.asarray(f.time_map(alpha))
    d = spectral_sum(f, times, lam, w) + null
    D = spectral_sum(f, times, lam, w, envelope=True) + null
    q = spectral_sum(f, times, lam, w, power=1)
    Q = spectral_sum(f, times, lam, w, envelope=True, power=1)
    return (DiagnosticsCurve(alpha, d, "d"), DiagnosticsCurve(alpha, D, "D"),
            DiagnosticsCurve(alpha, q, "q"), DiagnosticsCurve(alpha, Q, "Q"))


def tail_curve(dec, x_dagger, alpha_grid):
    """Spectral tail e sampled on alpha_grid."""
    tail = spectral_tail(dec, x_dagger)
    alpha = np.asarray(alpha_grid, dtype=np.float64)
    return DiagnosticsCurve(alpha, np.asarray(tail(alpha), dtype=float), "e")


def envelope_error_function(dec, f, x_dagger):
    """Callable alpha -> D(alpha) evaluated exactly."""
    c, null = _coefficients(dec, x_dagger)
    lam = dec.eigenvalues
    w = c * c

    def D(alpha):
        a = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
        out = spectral_sum(f, np.asarray(f.time_map(a)), lam, w, envelope=True) + null
        return out if np.ndim(alpha) else float(out[0])

    return D


def flow_trajectory(dec, f, y_tilde, t_grid, x_dagger=None):
    """Squared error and squared residual of xi(t; y_tilde) along t_grid.

    Returns ``(error_vs_t, residual_vs_t)``; the first is ``None`` without x_dagger.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if np.any(np.diff(t) <= 0.0) or np.any(t < 0.0):
        raise ValueError("t_grid must be nonnegative and strictly increasing")
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    bcoef = dec.data_coefficients(y_tilde)
    outside = max(float(y_tilde @ y_tilde - bcoef @ bcoef), 0.0)
    lam = dec.eigenvalues
    sig = dec.singular_values
    res = np.empty(t.size)
    err = np.empty(t.size) if x_dagger is not None else None
    if x_dagger is not None:
        c, null = _coefficients(dec, x_dagger)
    for sl in _chunks(t.size, lam.size):
        rt, om = _filter_table(f, t[sl], lam)
        res[sl] = (rt * rt) @ (bcoef * bcoef) + outside
        if err is not None:
            diff = om * (bcoef / sig) - c
            err[sl] = np.einsum("ij,ij->i", diff, diff) + null
    res_curve = DiagnosticsCurve(t, res, "residual_vs_t")
    err_curve = DiagnosticsCurve(t, err, "error_vs_t") if err is not None else None
    return err_curve, res_curve


def regularized_solution(dec, f, y_tilde, t):
    """xi(t; y_tilde) = sum_k (1 - rho_tilde(t; lambda_k)) / sigma_k <u_k, y_tilde> v_k."""
    bcoef = dec.data_coefficients(y_tilde)
    om = np.asarray(f.one_minus_rho_tilde(np.full(dec.rank, float(t)), dec.eigenvalues))
    return dec.synthesize(om * bcoef / dec.singular_values)


@dataclass(frozen=True, eq=False)
class BestWorstCase:
    """Empirical best-worst-case error and what produced it.

    ``curve`` holds max over candidates of min over the alpha grid, a lower
    bound of the supremum over the noise ball (finite candidate family) and,
    per candidate, an upper bound of the infimum over alpha (finite grid).
    """

    curve: DiagnosticsCurve
    argmin_alpha: np.ndarray
    worst_candidate: list
    candidate_family: str


def best_worst_case(dec, f, x_dagger, delta_grid, alpha_grid, directions=5, seed=0):
    """Empirical d_tilde(delta) over a candidate family of perturbations.

    Candidates, each scaled to norm delta: +-u_k for every k (closed form
    d(alpha) -+ 2 delta r_tilde_k c_k g_k + delta^2 g_k^2 with g_k = r_alpha(lambda_k) sigma_k),
    the two signed bucket vectors spread over the spectral values within a
    factor 2 of alpha_delta = e_hat^{-1}(delta), and ``directions`` seeded
    Gaussian directions in data space.
    """
    deltas = np.asarray(delta_grid, dtype=np.float64)
    alpha = np.asarray(alpha_grid, dtype=np.float64)
    c, null = _coefficients(dec, x_dagger)
    lam, sig = dec.eigenvalues, dec.singular_values
    times = np.asarray(f.time_map(alpha))
    rt, om = _filter_table(f, times, lam)
    A = -rt * c  # noise-free error coefficients
    G = om / sig  # r_alpha(lambda_k) sigma_k
    d0 = np.einsum("ij,ij->i", A, A) + null
    AG = A * G
    G2 = G * G
    e_rate = StepRate.from_tail(spectral_tail(dec, x_dagger))
    rng = np.random.default_rng(seed)
    gauss = []
    for _ in range(int(directions)):
        g = rng.standard_normal(dec.shape[0])
        h = dec.data_coefficients(g) / np.linalg.norm(g)
        gauss.append(h)
    values, argmins, worst = [], [], []
    for delta in deltas:
        best_val, best_alpha, best_name = -1.0, float("nan"), ""
        if delta == 0.0:
            i = int(np.argmin(d0))
            values.append(float(d0[i]))
            argmins.append(float(alpha[i]))
            worst.append("none")
            continue
        # +-delta u_k: all k at once
        for sign in (1.0, -1.0):
            err = d0[:, None] + 2.0 * sign * delta * AG + delta * delta * G2
            idx = np.argmin(err, axis=0)
            mins = err[idx, np.arange(err.shape[1])]
            k = int(np.argmax(mins))
            if mins[k] > best_val:
                best_val, best_alpha = float(mins[k]), float(alpha[idx[k]])
                best_name = f"{'+' if sign > 0 else '-'}u[{k}]"
        cands = []
        try:
            a_delta = e_rate.generalized_inverse(delta)
        except ValueError:
            a_delta = None
        if a_delta is not None:
            bucket = (lam >= 0.5 * a_delta) & (lam <= 2.0 * a_delta)
            if np.any(bucket):
                h = np.where(bucket, -np.sign(c) + (c == 0.0), 0.0)
                h = h / np.linalg.norm(h)
                cands.append(("bucket+", h))
                cands.append(("bucket-", -h))
        for i, h in enumerate(gauss):
            cands.append((f"gauss[{i}]", h))
        for name, h in cands:
            diff = A + G * (delta * h)
            err = np.einsum("ij,ij->i", diff, diff) + null
            i = int(np.argmin(err))
            if err[i] > best_val:
                best_val, best_alpha, best_name = float(err[i]), float(alpha[i]), name
        values.append(best_val)
        argmins.append(best_alpha)
        worst.append(best_name)
    family = f"+-u_k (all k), bucket, {int(directions)} gaussian (seed {seed})"
    curve = DiagnosticsCurve(deltas, np.asarray(values), "d_tilde")
    return BestWorstCase(curve, np.asarray(argmins), worst, family)


def transform_bounds(dec, f, x_dagger, delta_grid):
    """Phi[e](delta) and Phi[D](delta) for each delta."""
    e_rate = StepRate.from_tail(spectral_tail(dec, x_dagger))
    D_rate = MonotoneRate(envelope_error_function(dec, f, x_dagger), "D")
    phi_e = np.array([e_rate.phi_transform(d).value for d in delta_grid])
    phi_D = np.array([D_rate.phi_transform(d).value for d in delta_grid])
    return phi_e, phi_D


def _longest_flat_run(slopes, spread, allowed=None):
    """Longest contiguous run of slopes with max - min <= spread, as (start, end) inclusive."""
    best = (0, 0)
    n = len(slopes)
    if allowed is None:
        allowed = np.ones(n, dtype=bool)
    for i in range(n):
        if not allowed[i]:
            continue
        lo = hi = slopes[i]
        j = i
        while j + 1 < n and allowed[j + 1]:
            lo2, hi2 = min(lo, slopes[j + 1]), max(hi, slopes[j + 1])
            if hi2 - lo2 > spread:
                break
            lo, hi, j = lo2, hi2, j + 1
        if j - i > best[1] - best[0]:
            best = (i, j)
    return best


def local_slopes(curve, stencil_decades=0.5):
    """Secant slopes of log(value) over about ``stencil_decades`` of the grid.

    Point-to-point slopes of oscillating flows (the viscosity residual, for
    instance) swing wildly; a half-decade secant averages the ripples while
    still resolving the bend into saturation.  Returns (slopes, stencil).
    """
    lg, lv = np.log(curve.grid), np.log(curve.values)
    span = lg[-1] - lg[0]
    per = (lg.size - 1) / span if span > 0.0 else 1.0
    m = max(1, min(lg.size - 1, int(round(stencil_decades * math.log(10.0) * per))))
    return (lv[m:] - lv[:-m]) / (lg[m:] - lg[:-m]), m


def auto_window(curve, spread=SLOPE_SPREAD, stencil_decades=0.5):
    """Longest run of grid points whose local log-log slopes vary by at most ``spread``."""
    g, v = curve.grid, curve.values
    ok = (g > 0.0) & (v > 0.0)
    if ok.sum() < 5:
        raise ValueError("cannot fit log-log: fewer than 5 positive points")
    # restrict to the longest contiguous positive stretch
    idx = np.flatnonzero(ok)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    seg = max(runs, key=len)
    sub = DiagnosticsCurve(g[seg], v[seg], curve.quantity)
    slopes, m = local_slopes(sub, stencil_decades)
    # prefer a sloped run over a saturation plateau; fall back for flat curves
    i, j = _longest_flat_run(slopes, spread, np.abs(slopes) >= PLATEAU_SLOPE)
    if j - i + m + 1 < 5 or abs(slopes[i]) < PLATEAU_SLOPE:
        i, j = _longest_flat_run(slopes, spread)
    return int(seg[i]), int(seg[min(j + m, seg.size - 1)])


def fit_rate(curve, window=None):
    """Least-squares slope of log(value) against log(grid) on an inclusive index window.

    ``window=None`` picks the longest run with local slope variation <= 0.1,
    skipping saturation plateaus.
    """
    if window is None:
        window = auto_window(curve)
    i, j = int(window[0]), int(window[1])
    g = curve.grid[i:j + 1]
    v = curve.values[i:j + 1]
    if g.size < 5:
        raise ValueError("cannot fit log-log: fewer than 5 points in window")
    if np.any(v <= 0.0) or np.any(g <= 0.0):
        raise ValueError("cannot fit log-log: nonpositive values in window")
    x, y = np.log(g), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0.0 else 1.0
    return FitResult(float(slope), float(intercept), r2, (i, j))


@dataclass(frozen=True)
class StopResult:
    t_stop: float
    residual_at_stop: float
    error_at_stop: float | None
    crossings: int
    index: int
    threshold: float


def discrepancy_stop(dec, f, y_tilde, delta, tau_factor=DEFAULT_TAU_FACTOR, t_grid=None, x_dagger=None):
    """First grid time with ||L xi(t) - y_tilde|| <= tau_factor * delta.

    ``crossings`` counts sign changes of residual - threshold along the whole
    grid (second-order flows may oscillate across the level).

    Raises
    ------
    DiscrepancyNotReached
        If the residual stays above the threshold on the whole grid.
    """
    if not delta > 0.0:
        raise ValueError("delta must be > 0")
    if not tau_factor > 1.0:
        raise ValueError("tau_factor must be > 1")
    if t_grid is None:
        t_grid = log_grid(1e-2, 1e8, 600)
    err, res = flow_trajectory(dec, f, y_tilde, t_grid, x_dagger)
    r = np.sqrt(res.values)
    thr = tau_factor * delta
    below = r <= thr
    crossings = int(np.count_nonzero(below[1:] != below[:-1]))
    if not np.any(below):
        raise DiscrepancyNotReached(float(r[-1]), thr)
    i = int(np.argmax(below))
    e = float(np.sqrt(err.values[i])) if err is not None else None
    return StopResult(float(res.grid[i]), float(r[i]), e, crossings, i, thr)


def write_curve_csv(path, curve, header_line=None, columns=None):
    """Two-column (grid, value) CSV; an optional leading '#' comment line."""
    cols = columns or ("grid", curve.quantity)
    with open(path, "w", newline="") as fh:
        if header_line:
            fh.write(f"# {header_line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for x, v in zip(curve.grid, curve.values):
            w.writerow([f"{x:.12e}", f"{v:.12e}"])
