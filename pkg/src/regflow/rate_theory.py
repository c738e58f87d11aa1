"""Rate functions, the noise-free to noisy transform and compatibility checks.

For a nondecreasing phi the hat map is phi_hat(alpha) = sqrt(alpha phi(alpha))
and the transform is Phi[phi](delta) = delta^2 / phi_hat^{-1}(delta), with the
generalised inverse phi_hat^{-1}(delta) = inf{alpha > 0 : phi_hat(alpha) >= delta}.
"""
import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .flow_filters import FilterKind

ALPHA_CAP = 1e12
ALPHA_FLOOR = 1e-300


class RateKind(str, enum.Enum):
    HOELDER = "hoelder"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class TransformResult:
    delta: float
    alpha_star: float
    value: float


class _Rate:
    """Shared hat map, generalised inverse and transform for nondecreasing rates."""

    def evaluate(self, alpha):
        raise NotImplementedError

    def __call__(self, alpha):
        return self.evaluate(alpha)

    def hat(self, alpha):
        a = np.asarray(alpha, dtype=np.float64)
        out = np.sqrt(a * np.asarray(self.evaluate(a), dtype=np.float64))
        return float(out) if out.ndim == 0 else out

    def _hat_sq(self, alpha):
        return alpha * float(self.evaluate(alpha))

    def generalized_inverse(self, delta, rtol=1e-15):
        """phi_hat^{-1}(delta) by bracket expansion and bisection in log(alpha).

        Returns the upper end of the final bracket, so phi_hat(result) >= delta.

        Raises
        ------
        ValueError
            If delta is not positive or phi_hat stays below delta up to alpha = 1e12.
        """
        delta = float(delta)
        if not delta > 0.0:
            raise ValueError("noise level must be > 0")
        target = delta * delta
        lo, hi = 1.0, 1.0
        if self._hat_sq(hi) >= target:
            while self._hat_sq(lo) >= target:
                lo /= 16.0
                if lo < ALPHA_FLOOR:
                    return ALPHA_FLOOR
            hi = lo * 16.0
        else:
            while self._hat_sq(hi) < target:
                hi *= 16.0
                if hi > ALPHA_CAP:
                    raise ValueError(f"noise level out of range: delta = {delta:g}")
            lo = hi / 16.0
        while hi - lo > rtol * hi:
            mid = math.sqrt(lo * hi)
            if mid <= lo or mid >= hi:
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
            if self._hat_sq(mid) >= target:
                hi = mid
            else:
                lo = mid
        return hi

    def phi_transform(self, delta):
        """Phi[phi](delta) = delta^2 / phi_hat^{-1}(delta)."""
        a = self.generalized_inverse(delta)
        return TransformResult(float(delta), a, float(delta) ** 2 / a)

    def transform(self, delta):
        """Vectorised Phi[phi] values."""
        d = np.atleast_1d(np.asarray(delta, dtype=np.float64))
        return np.array([self.phi_transform(x).value for x in d])


@dataclass(frozen=True)
class RateFunction(_Rate):
    """Hoelder phi_mu(alpha) = alpha^mu or logarithmic psi_{mu,nu}.

    psi_{mu,nu}(alpha) = |log alpha|^{-mu} for alpha < e^{-mu/nu} and
    (mu/nu)^{-mu} otherwise.
    """

    kind: RateKind
    mu: float
    nu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RateKind(self.kind))
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise ValueError("mu must be > 0")
        if self.kind is RateKind.LOGARITHMIC:
            if self.nu is None or not self.nu > 0.0:
                raise ValueError("logarithmic rate needs nu > 0")
        elif self.nu is not None:
            raise ValueError("Hoelder rate takes no nu")

    @classmethod
    def hoelder(cls, mu):
        return cls(RateKind.HOELDER, float(mu))

    @classmethod
    def logarithmic(cls, mu, nu):
        return cls(RateKind.LOGARITHMIC, float(mu), float(nu))

    @property
    def kink(self):
        """Branch point e^{-mu/nu} of the logarithmic rate."""
        return math.exp(-self.mu / self.nu) if self.kind is RateKind.LOGARITHMIC else None

    @property
    def compatibility_order(self):
        """Exponent entering the compatibility function: mu (Hoelder) or nu (logarithmic)."""
        return self.mu if self.kind is RateKind.HOELDER else self.nu

    def evaluate(self, alpha):
        a = np.asarray(alpha, dtype=np.float64)
        if np.any(~(a > 0.0)):
            raise ValueError("alpha must be > 0")
        if self.kind is RateKind.HOELDER:
            out = a ** self.mu
        else:
            const = (self.mu / self.nu) ** (-self.mu)
            with np.errstate(divide="ignore"):
                out = np.where(a < self.kink, np.abs(np.log(a)) ** (-self.mu), const)
        return float(out) if out.ndim == 0 else out


class MonotoneRate(_Rate):
    """Wrap an arbitrary nondecreasing function of alpha (vectorised callable)."""

    def __init__(self, func, name="phi"):
        self.func = func
        self.name = name

    def evaluate(self, alpha):
        out = np.asarray(self.func(np.asarray(alpha, dtype=np.float64)), dtype=np.float64)
        return float(out) if out.ndim == 0 else out


class StepRate(_Rate):
    """Right-continuous nondecreasing step function, e.g. a spectral tail.

    ``breakpoints`` ascending, ``values[j]`` the value on [breakpoints[j], breakpoints[j+1]),
    zero to the left of the first breakpoint.
    """

    def __init__(self, breakpoints, values):
        self.breakpoints = np.asarray(breakpoints, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)

    @classmethod
    def from_tail(cls, tail):
        return cls(tail.eigenvalues, tail.cumulative)

    def evaluate(self, alpha):
        a = np.asarray(alpha, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, a, side="right")
        out = np.concatenate([[0.0], self.values])[idx]
        return float(out) if out.ndim == 0 else out

    def generalized_inverse(self, delta, rtol=None):
        """Exact infimum of {alpha : alpha e(alpha) >= delta^2}.

        On [lambda_j, lambda_{j+1}) the product alpha e_j crosses delta^2 at
        max(lambda_j, delta^2 / e_j); the first piece where that point lies
        inside the piece gives the infimum.
        """
        delta = float(delta)
        if not delta > 0.0:
            raise ValueError("noise level must be > 0")
        target = delta * delta
        lam, val = self.breakpoints, self.values
        nxt = np.concatenate([lam[1:], [np.inf]])
        with np.errstate(divide="ignore"):
            cand = np.where(val > 0.0, np.maximum(lam, target / np.where(val > 0.0, val, 1.0)), np.inf)
        ok = cand < nxt
        if not np.any(ok):
            raise ValueError(f"noise level out of range: delta = {delta:g}")
        a = float(cand[np.argmax(ok)])
        if a > ALPHA_CAP:
            raise ValueError(f"noise level out of range: delta = {delta:g}")
        return a


def evaluate(r, alpha):
    return r.evaluate(alpha)


def generalized_inverse(r, delta):
    return r.generalized_inverse(delta)


def phi_transform(r, delta):
    return r.phi_transform(delta)


def subhomogeneity_bound(r, gamma, n_grid=4000, margin=0.05):
    """G(gamma) with phi(gamma alpha) <= G(gamma) phi(alpha).

    Hoelder: gamma^mu.  Logarithmic: supremum of psi(gamma alpha)/psi(alpha)
    over a log grid of alpha (augmented with the branch point scaled by
    1/gamma, where the ratio peaks), plus a relative safety margin.
    """
    gamma = float(gamma)
    if gamma < 1.0:
        raise ValueError("gamma must be >= 1")
    if r.kind is RateKind.HOELDER:
        return gamma ** r.mu
    if gamma == 1.0:
        return 1.0
    kink = r.kink
    alphas = np.concatenate([np.logspace(-300, math.log10(kink), n_grid), [kink / gamma]])
    ratio = r.evaluate(gamma * alphas) / r.evaluate(alphas)
    return float(np.max(ratio)) * (1.0 + margin)


@dataclass(frozen=True)
class CompatibilityReport:
    check_name: str
    grid_size: int
    max_violation: float
    integral: float
    passed: bool

    def row(self):
        return [self.check_name, self.grid_size, f"{self.max_violation:.6e}", f"{self.integral:.6e}",
                "pass" if self.passed else "fail"]


def compatibility_function(f, r, Lambda):
    """The function F with R_tilde_alpha(lambda)^2 <= F(phi(lambda)/phi(alpha)), 0 < alpha <= lambda <= Lambda.

    Raises
    ------
    ValueError
        For the viscosity flow beyond saturation (order >= b/2).
    """
    m = r.compatibility_order
    if f.kind is FilterKind.SHOWALTER:
        return lambda z: np.exp(-2.0 * np.asarray(z, dtype=float) ** (1.0 / m))
    if f.kind is FilterKind.HEAVY_BALL:
        return lambda z: f.psi_bound(0.5 * f.b * np.asarray(z, dtype=float) ** (1.0 / m), Lambda) ** 2
    if m >= 0.5 * f.b:
        sym = "mu" if r.kind is RateKind.HOELDER else "nu"
        raise ValueError(f"incompatible: saturation {sym} >= b/2 ({m:g} >= {0.5 * f.b:g})")
    c = f.constants.envelope_c
    tb = f.constants.tau_b
    scale = c * c * tb ** (-f.b)
    return lambda z: scale * np.asarray(z, dtype=float) ** (-f.b / (2.0 * m))


def compatibility_bound(f, r, Lambda, n_grid=200, decades=10, tol=1e-9):
    """Check R_tilde_alpha(lambda)^2 <= F(phi(lambda)/phi(alpha)) on a log grid of 0 < alpha <= lambda <= Lambda."""
    F = compatibility_function(f, r, Lambda)
    grid = Lambda * np.logspace(-decades, 0, n_grid)
    a, lam = np.meshgrid(grid, grid, indexing="ij")
    mask = a <= lam
    a, lam = a[mask], lam[mask]
    lhs = f.envelope_error(a, lam) ** 2
    rhs = F(r.evaluate(lam) / r.evaluate(a))
    viol = float(max(np.max(lhs - rhs), 0.0))
    integral, _ = integrate.quad(lambda z: float(F(z)), 1.0, np.inf, limit=200)
    name = f"compatibility[{f.label},{r.kind.value}(mu={r.mu:g}{'' if r.nu is None else f',nu={r.nu:g}'})]"
    return CompatibilityReport(name, int(mask.sum()), viol, float(integral),
                               viol <= tol and math.isfinite(integral))


@dataclass(frozen=True)
class VariationalEstimate:
    value: float
    candidates: int
    skipped: int

    def __float__(self):
        return self.value


def variational_condition_estimate(dec, x_dagger, r, eta, samples, seed=0):
    """Empirical constant of the variational source condition.

    Maximum over candidate directions x of
    <x_dagger, x> / (||phi^{1/(2 eta)}(L*L) x||^eta ||x||^{1-eta}).
    Candidates: ``samples`` Gaussian directions, every right singular vector
    and x_dagger itself.  The result is a lower bound for the true constant.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    xd = np.asarray(x_dagger, dtype=np.float64)
    cx = dec.solution_coefficients(xd)
    weight = np.asarray(r.evaluate(dec.eigenvalues), dtype=float) ** (1.0 / (2.0 * eta))
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((samples, dec.shape[1]))
    coeffs = [dec.solution_coefficients(g) for g in gauss]
    norms = [np.linalg.norm(g) for g in gauss]
    # right singular vectors: coefficient e_k, unit norm
    num = [float(c @ cx) for c in coeffs] + list(cx)
    den_w = [np.linalg.norm(weight * c) for c in coeffs] + list(weight)
    xnorm = norms + [1.0] * dec.rank
    nx = np.linalg.norm(xd)
    if nx > 0.0:
        num.append(float(cx @ cx) / nx)
        den_w.append(np.linalg.norm(weight * cx) / nx)
        xnorm.append(1.0)
    num, den_w, xnorm = map(np.asarray, (num, den_w, xnorm))
    den = den_w ** eta * xnorm ** (1.0 - eta)
    ok = den > 1e-300
    vals = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    best = float(max(np.max(vals), 0.0)) if vals.size else 0.0
    return VariationalEstimate(best, int(vals.size), int((~ok).sum()))


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check_name", "grid_size", "max_violation", "integral", "pass"])
        for rep in reports:
            w.writerow(rep.row())
