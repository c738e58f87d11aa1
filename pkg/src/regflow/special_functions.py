"""Gamma and Bessel functions of the first kind for real order nu >= -1/2."""
import math

import numpy as np

from . import _kernels_py
from ._backend import kernels

NU_MIN = -0.5
NU_MAX = 50.0
ZERO_SCAN_START = 0.5
ZERO_SCAN_STEP = 0.1
ZERO_SCAN_CAP = 100.0

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _lanczos_sum(z):
    x = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        x += _LANCZOS[i] / (z + i)
    return x


def gamma(x):
    """Gamma function for x > 0.

    Uses the Lanczos approximation (g = 7, nine coefficients) with the
    reflection formula below 1/2.

    Raises
    ------
    ValueError
        If ``x <= 0`` or ``x`` is not finite.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"gamma: domain error, x = {x!r} must be > 0")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    half = t ** (0.5 * (z + 0.5))  # split the power to postpone overflow
    return math.sqrt(2.0 * math.pi) * half * (half * math.exp(-t)) * _lanczos_sum(z)


def log_gamma(x):
    """log Gamma(x) for x > 0, avoiding overflow for large x."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"log_gamma: domain error, x = {x!r} must be > 0")
    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * math.log(t) - t + math.log(_lanczos_sum(z))


def check_order(nu):
    nu = float(nu)
    if not math.isfinite(nu) or nu < NU_MIN or nu > NU_MAX:
        raise ValueError(f"Bessel order nu = {nu!r} outside supported range [{NU_MIN}, {NU_MAX}]")
    return nu


def _as_array(tau):
    arr = np.asarray(tau, dtype=np.float64)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("Bessel argument must be finite and >= 0")
    return arr


def bessel_j(nu, tau):
    """Bessel function of the first kind J_nu(tau), tau >= 0.

    Scalars in, scalar out; arrays in, array out.
    """
    nu = check_order(nu)
    arr = _as_array(tau)
    out = kernels.bessel_j(nu, arr.ravel()).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def normalized_bessel(nu, tau):
    """Return ``(u, 1 - u)`` with u(tau) = Gamma(nu+1) (2/tau)^nu J_nu(tau).

    u is the entire function sum_k (-tau^2/4)^k / (k! (nu+1)_k) with u(0) = 1;
    the complement is returned separately because it is accurate for small tau.
    """
    nu = check_order(nu)
    arr = _as_array(tau)
    u, om = kernels.normalized_bessel(nu, arr.ravel())
    return u.reshape(arr.shape), om.reshape(arr.shape)


def normalized_bessel_derivative(nu, tau):
    """d/dtau u_nu(tau) = -tau / (2(nu+1)) u_{nu+1}(tau)."""
    arr = _as_array(tau)
    up, _ = kernels.normalized_bessel(float(nu) + 1.0, arr.ravel())
    return -arr * up.reshape(arr.shape) / (2.0 * (float(nu) + 1.0))


def bessel_j_branch(nu, tau, branch):
    """Evaluate J_nu with a forced evaluation branch ('series', 'miller' or 'hankel').

    Diagnostic helper for branch-agreement checks at the switchover points.
    """
    nu = check_order(nu)
    arr = np.atleast_1d(_as_array(tau))
    if branch == "hankel":
        return _kernels_py._hankel(nu, arr)
    if branch == "series":
        u, _ = _kernels_py._series(nu, arr)
    elif branch == "miller":
        u = _kernels_py._miller_u(nu, arr)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return u * np.exp(nu * np.log(0.5 * arr) - log_gamma(nu + 1.0))


def series_switch():
    return _kernels_py.SERIES_MAX


def hankel_switch(nu):
    return _kernels_py.hankel_threshold(float(nu))


def first_positive_zero(nu, step=ZERO_SCAN_STEP, cap=ZERO_SCAN_CAP):
    """First positive zero j_{nu,1} of J_nu.

    Scans the normalised function u_nu (same sign as J_nu for tau > 0) from
    tau = 0.5 in increments of ``step`` until it changes sign, then bisects
    the bracket down to adjacent floating point numbers.

    Raises
    ------
    RuntimeError
        If no sign change is found below ``cap``.
    """
    nu = check_order(nu)

    def f(x):
        return float(kernels.normalized_bessel(nu, np.array([x]))[0][0])

    lo = ZERO_SCAN_START
    f_lo = f(lo)
    if f_lo <= 0.0:
        raise RuntimeError(f"J_{nu} not positive at scan start")
    hi = lo
    while True:
        hi = lo + step
        if hi > cap:
            raise RuntimeError(f"first zero of J_{nu} not bracketed below tau = {cap}")
        if f(hi) <= 0.0:
            break
        lo = hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi
