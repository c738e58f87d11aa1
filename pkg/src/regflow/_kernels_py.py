"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``REGFLOW_PURE_PYTHON=1`` is set).
"""
import math

import numpy as np

SERIES_MAX = 12.0
HANKEL_MIN = 25.0
_TINY = 1e-17


def hankel_threshold(nu):
    return max(HANKEL_MIN, nu * nu)


def _series(nu, tau):
    """Normalised series sum_k (-tau^2/4)^k / (k! (nu+1)_k) and its tail 1 - sum."""
    z = -0.25 * tau * tau
    term = np.ones_like(tau)
    tail = np.zeros_like(tau)
    comp = np.zeros_like(tau)
    k = 0
    while True:
        k += 1
        term = term * z / (k * (nu + k))
        # Neumaier summation of sum_{k>=1}
        s = tail + term
        big = np.abs(tail) >= np.abs(term)
        comp += np.where(big, (tail - s) + term, (term - s) + tail)
        tail = s
        if k > 4 and np.all(np.abs(term) <= _TINY * np.maximum(np.abs(tail + comp), 1e-300)):
            break
        if k > 400:
            break
    tail = tail + comp
    return 1.0 + tail, -tail


def _hankel(nu, tau):
    """Large-argument expansion of J_nu."""
    mu4 = 4.0 * nu * nu
    p = np.ones_like(tau)
    q = np.zeros_like(tau)
    a = np.ones_like(tau)
    prev = np.full_like(tau, np.inf)
    active = np.ones(tau.shape, dtype=bool)
    for k in range(1, 200):
        a = a * (mu4 - (2 * k - 1) ** 2) / (8.0 * k * tau)
        mag = np.abs(a)
        active &= (mag < prev) & (mag > 0.0)
        if not active.any():
            break
        sign = 1.0 if (k // 2) % 2 == 0 else -1.0
        if k % 2 == 0:
            p = np.where(active, p + sign * a, p)
        else:
            q = np.where(active, q + sign * a, q)
        prev = mag
        active &= mag > _TINY
    chi = tau - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * tau)) * (p * np.cos(chi) - q * np.sin(chi))


def _miller_u(nu, tau):
    """Normalised Bessel function via backward recurrence (Miller's algorithm)."""
    n_start = int(np.max(tau) + 10.0 * np.max(tau) ** (1.0 / 3.0) + 40.0)
    f_next = np.zeros_like(tau)
    f_cur = np.full_like(tau, 1e-30)
    total = np.zeros_like(tau)
    # weights c_0 = 1, c_{2m} = (nu + 2m) Gamma(nu+m) / (m! Gamma(nu+1))
    g = [0.0, 1.0]
    for m in range(1, n_start // 2 + 2):
        g.append(g[-1] * (nu + m) / (m + 1))
    for k in range(n_start, 0, -1):
        if k % 2 == 0:
            m = k // 2
            total += (nu + k) * g[m] * f_cur
        f_prev = (2.0 * (nu + k) / tau) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > 1e100
        if big.any():
            scale = np.where(big, 1e-100, 1.0)
            f_cur *= scale
            f_next *= scale
            total *= scale
    total += f_cur
    return f_cur / total


def normalized_bessel(nu, tau):
    """Return (u, 1 - u) with u(tau) = Gamma(nu+1) (2/tau)^nu J_nu(tau)."""
    tau = np.asarray(tau, dtype=np.float64)
    u = np.empty_like(tau)
    om = np.empty_like(tau)
    small = tau <= SERIES_MAX
    if small.any():
        u[small], om[small] = _series(nu, tau[small])
    hank = tau >= hankel_threshold(nu)
    if hank.any():
        th = tau[hank]
        factor = np.exp(math.lgamma(nu + 1.0) + nu * np.log(2.0 / th))
        u[hank] = factor * _hankel(nu, th)
        om[hank] = 1.0 - u[hank]
    mid = ~(small | hank)
    if mid.any():
        u[mid] = _miller_u(nu, tau[mid])
        om[mid] = 1.0 - u[mid]
    return u, om


def bessel_j(nu, tau):
    tau = np.asarray(tau, dtype=np.float64)
    out = np.empty_like(tau)
    zero = tau == 0.0
    if zero.any():
        out[zero] = 1.0 if nu == 0.0 else (0.0 if nu > 0.0 else np.inf)
    pos = ~zero
    if pos.any():
        tp = tau[pos]
        hank = tp >= hankel_threshold(nu)
        res = np.empty_like(tp)
        if hank.any():
            res[hank] = _hankel(nu, tp[hank])
        rest = ~hank
        if rest.any():
            tr = tp[rest]
            u, _ = normalized_bessel(nu, tr)
            res[rest] = u * np.exp(nu * np.log(0.5 * tr) - math.lgamma(nu + 1.0))
        out[pos] = res
    return out


def _hb_taylor(b, t, lam):
    """1 - rho_tilde for small t from the Taylor recurrence of the damped oscillator."""
    c_prev = np.ones_like(t)
    c_cur = np.zeros_like(t)
    om = np.zeros_like(t)
    tn = t.copy()
    prev = np.full_like(t, np.inf)
    for n in range(0, 200):
        c_new = -(b * (n + 1) * c_cur + lam * c_prev) / ((n + 2) * (n + 1))
        tn = tn * t
        term = c_new * tn
        om -= term
        c_prev, c_cur = c_cur, c_new
        # coefficients can vanish individually, so require two small terms in a row
        small = np.abs(term) + np.abs(prev) <= 1e-18 * np.maximum(np.abs(om), 1e-300)
        prev = term
        if n > 2 and np.all(small):
            break
    return om


def heavy_ball(b, t, lam):
    """Return (rho_tilde, 1 - rho_tilde) of the heavy-ball flow for damping b."""
    t, lam = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(lam, dtype=np.float64))
    rt = np.ones_like(t)
    om = np.zeros_like(t)
    s = 0.5 * b * t
    w = 1.0 - 4.0 * lam / (b * b)
    live = (t > 0.0) & (lam > 0.0)

    taylor = live & (s <= 0.5) & (lam * t * t <= 0.25)
    if taylor.any():
        om[taylor] = _hb_taylor(b, t[taylor], lam[taylor])
        rt[taylor] = 1.0 - om[taylor]

    rest = live & ~taylor
    crit = rest & (np.abs(w) * s * s < 1e-6)
    if crit.any():
        sc, wc = s[crit], w[crit]
        total = np.zeros_like(sc)
        even = np.ones_like(sc)
        odd = sc.copy()
        wk = np.ones_like(sc)
        for k in range(12):
            total += wk * (even + odd)
            even = even * sc * sc / ((2 * k + 1) * (2 * k + 2))
            odd = odd * sc * sc / ((2 * k + 2) * (2 * k + 3))
            wk = wk * wc
        rt[crit] = np.exp(-sc) * total
        om[crit] = 1.0 - rt[crit]

    over = rest & ~crit & (w > 0.0)
    if over.any():
        so, lo = s[over], lam[over]
        beta = np.sqrt(w[over])
        omb = (4.0 * lo / (b * b)) / (1.0 + beta)
        ea = so * omb
        eb = so * (1.0 + beta)
        r = 0.5 * (np.exp(-ea) + np.exp(-eb)) + np.exp(-ea) * (-np.expm1(-2.0 * beta * so)) / (2.0 * beta)
        o = 0.5 * (1.0 + 1.0 / beta) * (-np.expm1(-ea)) - (omb / (2.0 * beta)) * (-np.expm1(-eb))
        o = np.where(beta >= 0.5, o, 1.0 - r)
        rt[over] = r
        om[over] = o

    under = rest & ~crit & (w <= 0.0)
    if under.any():
        su = s[under]
        beta = np.sqrt(-w[under])
        r = np.exp(-su) * (np.cos(beta * su) + np.sin(beta * su) / beta)
        rt[under] = r
        om[under] = 1.0 - r
    return rt, om
