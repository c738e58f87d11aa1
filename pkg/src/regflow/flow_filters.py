"""The Showalter, heavy-ball and vanishing-viscosity flows as spectral filters.

Each flow xi'' + a(t) xi' = -L*L xi + L*y (or its first-order analogue)
acts on the spectral value lambda of L*L through a scalar error function
rho_tilde(t; lambda), with xi(t) = rho(t; L*L) L*y and
rho(t; lambda) = (1 - rho_tilde(t; lambda)) / lambda.  Choosing the time as
t = T(alpha) turns each flow into a regularisation method with generator
r_alpha(lambda) = rho(T(alpha); lambda).
"""
import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from . import special_functions as sf
from ._backend import kernels


class FilterKind(str, enum.Enum):
    SHOWALTER = "showalter"
    HEAVY_BALL = "heavy-ball"
    VISCOSITY = "viscosity"


@dataclass(frozen=True)
class FilterConstants:
    """Method constants, computed once when a filter is built.

    sigma_bound is the constant in r_alpha(lambda) <= sigma_bound / sqrt(alpha lambda)
    that the method actually achieves (sigma0, sigma1 or 1/2).
    """

    sigma0: float
    sigma_bound: float
    sigma1: float | None = None
    tau_b: float | None = None
    bessel_zero: float | None = None
    envelope_c: float | None = None


def compute_z0():
    """Unique positive root of 2z + 1 = e^z."""
    return optimize.brentq(lambda z: 2.0 * z + 1.0 - math.exp(z), 1.0, 2.0, xtol=1e-15, rtol=1e-15)


@lru_cache(maxsize=None)
def compute_sigma0():
    """sigma0 = (1 - e^{-z0}) / sqrt(z0), the smallest constant with 1 - e^{-z} <= sigma0 sqrt(z).

    (1 - e^{-z}) / sqrt(z) is maximal where its derivative vanishes, i.e. at 2z + 1 = e^z.
    """
    z0 = compute_z0()
    return -math.expm1(-z0) / math.sqrt(z0)


def compute_sigma1():
    """Constant of the heavy-ball bound (1 - rho_tilde)/lambda <= sigma1 sqrt(2t/(b lambda)).

    The two spectral regimes give sigma0 and sqrt(2/e) respectively; the
    larger one holds everywhere.
    """
    return max(compute_sigma0(), math.sqrt(2.0 / math.e))


def _kappa(b):
    return 0.5 * (b - 1.0)


def _tau_grid(upper, n):
    return np.concatenate([np.linspace(0.0, 12.0, n // 4, endpoint=False), np.linspace(12.0, upper, n - n // 4)])


@lru_cache(maxsize=None)
def compute_tau_b(b):
    """Largest tau_b <= j_{kappa,1} with u(tau) >= 1 - tau / (2 tau_b) for all tau >= 0.

    The condition is equivalent to tau_b <= tau / (2 (1 - u(tau))) wherever
    u < 1, so tau_b is the minimum of j_{kappa,1} and the infimum of that
    ratio.  The infimum is located on a dense grid, polished with a bounded
    scalar minimiser and shrunk by a relative 1e-9 for safety.  Beyond
    tau = 4 j the ratio exceeds tau / 4 >= j, so the grid stops there.
    """
    b = float(b)
    if not b > 0.0:
        raise ValueError("b must be > 0")
    kappa = sf.check_order(_kappa(b))
    j = sf.first_positive_zero(kappa)
    upper = max(200.0, 4.0 * j)
    grid = np.linspace(1e-3, upper, 200001)

    def ratio(tau):
        _, om = kernels.normalized_bessel(kappa, np.atleast_1d(np.asarray(tau, dtype=float)))
        with np.errstate(divide="ignore"):
            return np.where(om > 0.0, tau / (2.0 * om), np.inf)

    vals = ratio(grid)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda x: float(ratio(x)[0]), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    inf_ratio = min(float(vals[i]), float(res.fun))
    return min(j, inf_ratio) * (1.0 - 1e-9)


def _viscosity_energy_root(kappa, tau):
    """sqrt(u^2 + u'^2) and its complement 1 - sqrt(...), both nonincreasing/nondecreasing in tau."""
    u, om = kernels.normalized_bessel(kappa, tau)
    up, _ = kernels.normalized_bessel(kappa + 1.0, tau)
    du = -tau * up / (2.0 * (kappa + 1.0))
    # complement form near tau = 0, direct form once E is no longer close to 1
    one_minus_e = np.clip(2.0 * om - om * om - du * du, 0.0, 1.0)
    energy = np.minimum(u * u + du * du, 1.0)
    near = one_minus_e < 0.5
    root = np.where(near, np.sqrt(1.0 - one_minus_e), np.sqrt(energy))
    comp = np.where(near, one_minus_e / (1.0 + root), 1.0 - root)
    return root, comp


@lru_cache(maxsize=None)
def compute_envelope_constant(b):
    """C with sqrt(u^2 + u'^2)(tau) <= C tau^{-b/2} for all tau > 0.

    Grid maximum over [0, 5000] of tau^{b/2} sqrt(E), together with the large
    argument limit 2^kappa Gamma(kappa+1) sqrt(2/pi), times 1.001.
    """
    kappa = _kappa(float(b))
    grid = _tau_grid(5000.0, 200001)[1:]
    root, _ = _viscosity_energy_root(kappa, grid)
    with np.errstate(over="ignore"):
        scaled = np.exp(0.5 * b * np.log(grid)) * root
    limit = math.exp(kappa * math.log(2.0) + sf.log_gamma(kappa + 1.0)) * math.sqrt(2.0 / math.pi)
    return max(float(np.max(scaled)), limit) * 1.001


def _as_float_arrays(*xs):
    arrs = np.broadcast_arrays(*[np.asarray(x, dtype=np.float64) for x in xs])
    scalar = all(np.ndim(x) == 0 for x in xs)
    return arrs, scalar


def _ret(x, scalar):
    return float(x) if scalar else x


class FlowFilter:
    """One of the three flows, with its constants cached at construction.

    Parameters
    ----------
    kind : FilterKind or str
        ``"showalter"``, ``"heavy-ball"`` or ``"viscosity"``.
    b : float, optional
        Damping parameter, required for the second-order flows.
    constants : FilterConstants, optional
        Override the computed constants (used by the harness self-test).
    """

    def __init__(self, kind, b=None, constants=None):
        kind = FilterKind(kind)
        if kind is FilterKind.SHOWALTER:
            if b is not None:
                raise ValueError("Showalter flow takes no damping parameter b")
        else:
            if b is None:
                raise ValueError(f"{kind.value} flow requires a damping parameter b")
            b = float(b)
            if not (math.isfinite(b) and b > 0.0):
                raise ValueError("damping parameter b must be > 0")
        self.kind = kind
        self.b = b
        self.constants = constants if constants is not None else self._build_constants()

    @classmethod
    def showalter(cls):
        return cls(FilterKind.SHOWALTER)

    @classmethod
    def heavy_ball(cls, b):
        return cls(FilterKind.HEAVY_BALL, b)

    @classmethod
    def viscosity(cls, b):
        return cls(FilterKind.VISCOSITY, b)

    def _build_constants(self):
        s0 = compute_sigma0()
        if self.kind is FilterKind.SHOWALTER:
            return FilterConstants(sigma0=s0, sigma_bound=s0)
        if self.kind is FilterKind.HEAVY_BALL:
            s1 = compute_sigma1()
            return FilterConstants(sigma0=s0, sigma_bound=s1, sigma1=s1)
        kappa = sf.check_order(_kappa(self.b))
        return FilterConstants(
            sigma0=s0,
            sigma_bound=0.5,
            tau_b=compute_tau_b(self.b),
            bessel_zero=sf.first_positive_zero(kappa),
            envelope_c=compute_envelope_constant(self.b),
        )

    def __repr__(self):
        if self.b is None:
            return f"FlowFilter({self.kind.value!r})"
        return f"FlowFilter({self.kind.value!r}, b={self.b:g})"

    @property
    def label(self):
        return self.kind.value if self.b is None else f"{self.kind.value}(b={self.b:g})"

    @property
    def kappa(self):
        return None if self.b is None else _kappa(self.b)

    # error function and its complement

    def _rt_om(self, t, lam):
        if self.kind is FilterKind.SHOWALTER:
            x = t * lam
            return np.exp(-x), -np.expm1(-x)
        if self.kind is FilterKind.HEAVY_BALL:
            return kernels.heavy_ball(self.b, t, lam)
        tau = (t * np.sqrt(lam)).ravel()
        u, om = kernels.normalized_bessel(self.kappa, tau)
        return u.reshape(t.shape), om.reshape(t.shape)

    def _check(self, t, lam):
        if np.any(t < 0.0) or np.any(lam < 0.0):
            raise ValueError("t and lambda must be >= 0")

    def rho_tilde(self, t, lam):
        """Error function rho_tilde(t; lambda); equals 1 at t = 0 and at lambda = 0."""
        (t, lam), scalar = _as_float_arrays(t, lam)
        self._check(t, lam)
        return _ret(self._rt_om(t, lam)[0], scalar)

    def one_minus_rho_tilde(self, t, lam):
        (t, lam), scalar = _as_float_arrays(t, lam)
        self._check(t, lam)
        return _ret(self._rt_om(t, lam)[1], scalar)

    def rho_zero_limit(self, t):
        """lim_{lambda -> 0} rho(t; lambda)."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind is FilterKind.SHOWALTER:
            return t
        if self.kind is FilterKind.HEAVY_BALL:
            b = self.b
            return t / b + np.expm1(-b * t) / (b * b)
        return t * t / (2.0 * (self.b + 1.0))

    def rho(self, t, lam):
        """rho(t; lambda) = (1 - rho_tilde)/lambda, continuously extended to lambda = 0."""
        (t, lam), scalar = _as_float_arrays(t, lam)
        self._check(t, lam)
        _, om = self._rt_om(t, lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(lam > 0.0, om / np.where(lam > 0.0, lam, 1.0), self.rho_zero_limit(t))
        return _ret(out, scalar)

    # envelope

    def _env_om(self, t, lam):
        """Envelope and its complement."""
        if self.kind is FilterKind.SHOWALTER:
            return self._rt_om(t, lam)
        if self.kind is FilterKind.HEAVY_BALL:
            shape = t.shape
            t, lam = np.atleast_1d(t).ravel(), np.atleast_1d(lam).ravel()
            b = self.b
            s = 0.5 * b * t
            env = np.exp(-s) * (1.0 + s)
            # 1 - e^{-s}(1+s) without cancellation for small s
            small = s < 0.1
            comp = -np.expm1(-s) - s * np.exp(-s)
            if np.any(small):
                ss = s[small]
                acc = np.zeros_like(ss)
                term = -ss
                for k in range(2, 20):
                    term = -term * ss / k
                    acc += (k - 1) * term
                comp[small] = acc
            below = lam < 0.25 * b * b
            if np.any(below):
                rt, om = kernels.heavy_ball(b, t[below], lam[below])
                env[below] = rt
                comp[below] = om
            return env.reshape(shape), comp.reshape(shape)
        tau = (t * np.sqrt(lam)).ravel()
        root, comp = _viscosity_energy_root(self.kappa, tau)
        c = self.constants.envelope_c
        with np.errstate(divide="ignore"):
            tail = c * np.exp(-0.5 * self.b * np.log(tau))
        env = np.minimum(root, tail)
        comp = np.where(tail < root, 1.0 - tail, comp)
        return env.reshape(t.shape), comp.reshape(t.shape)

    def envelope(self, t, lam):
        """Monotone upper bound of |rho_tilde|: nonincreasing in t and lambda, at most 1.

        Showalter: rho_tilde itself.  Heavy ball: the overdamped formula for
        lambda < b^2/4, the critical one e^{-bt/2}(1 + bt/2) otherwise.
        Vanishing viscosity: min(sqrt(u^2 + u'^2), C tau^{-b/2}) at tau = t sqrt(lambda);
        the energy u^2 + u'^2 is nonincreasing because u'' + (b/tau) u' + u = 0.
        """
        (t, lam), scalar = _as_float_arrays(t, lam)
        self._check(t, lam)
        return _ret(self._env_om(t, lam)[0], scalar)

    def psi_bound(self, z, Lambda):
        """Psi_Lambda(z) = max(2 e^{-z/b}, e^{-bz/(2 Lambda)}(1 + bz/(2 Lambda))), heavy ball only."""
        if self.kind is not FilterKind.HEAVY_BALL:
            raise ValueError("psi_bound is defined for the heavy-ball flow only")
        z = np.asarray(z, dtype=np.float64)
        w = self.b * z / (2.0 * Lambda)
        return np.maximum(2.0 * np.exp(-z / self.b), np.exp(-w) * (1.0 + w))

    # regularisation method

    def time_map(self, alpha):
        """T(alpha): 1/alpha, b/(2 alpha) or tau_b/sqrt(alpha)."""
        a = np.asarray(alpha, dtype=np.float64)
        if np.any(~(a > 0.0)):
            raise ValueError("alpha must be > 0")
        if self.kind is FilterKind.SHOWALTER:
            out = 1.0 / a
        elif self.kind is FilterKind.HEAVY_BALL:
            out = self.b / (2.0 * a)
        else:
            out = self.constants.tau_b / np.sqrt(a)
        return _ret(out, np.ndim(alpha) == 0)

    def inverse_time_map(self, t):
        """alpha with T(alpha) = t."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(~(t > 0.0)):
            raise ValueError("t must be > 0")
        if self.kind is FilterKind.SHOWALTER:
            out = 1.0 / t
        elif self.kind is FilterKind.HEAVY_BALL:
            out = self.b / (2.0 * t)
        else:
            out = (self.constants.tau_b / t) ** 2
        return _ret(out, np.ndim(t) == 0)

    def error_function(self, alpha, lam):
        """r_tilde_alpha(lambda) = 1 - lambda r_alpha(lambda)."""
        (a, lam), scalar = _as_float_arrays(alpha, lam)
        return _ret(self._rt_om(np.asarray(self.time_map(a)), lam)[0], scalar)

    def envelope_error(self, alpha, lam):
        """R_tilde_alpha(lambda), the envelope at t = T(alpha)."""
        (a, lam), scalar = _as_float_arrays(alpha, lam)
        return _ret(self._env_om(np.asarray(self.time_map(a)), lam)[0], scalar)

    def generator(self, alpha, lam):
        """r_alpha(lambda) = (1 - rho_tilde(T(alpha); lambda)) / lambda."""
        (a, lam), scalar = _as_float_arrays(alpha, lam)
        if np.any(~(lam > 0.0)):
            raise ValueError("lambda must be > 0")
        return _ret(self._rt_om(np.asarray(self.time_map(a)), lam)[1] / lam, scalar)

    def envelope_generator(self, alpha, lam):
        """R_alpha(lambda) = (1 - R_tilde_alpha(lambda)) / lambda."""
        (a, lam), scalar = _as_float_arrays(alpha, lam)
        if np.any(~(lam > 0.0)):
            raise ValueError("lambda must be > 0")
        return _ret(self._env_om(np.asarray(self.time_map(a)), lam)[1] / lam, scalar)


def make_filter(method, b=None):
    """Build a filter from a method name as used on the command line."""
    return FlowFilter(method, b)


# functional aliases


def rho_tilde(f, t, lam):
    return f.rho_tilde(t, lam)


def envelope(f, t, lam):
    return f.envelope(t, lam)


def time_map(f, alpha):
    return f.time_map(alpha)


def generator(f, alpha, lam):
    return f.generator(alpha, lam)


def envelope_generator(f, alpha, lam):
    return f.envelope_generator(alpha, lam)
