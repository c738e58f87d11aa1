# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: scalar loops over 1-D float64 arrays.

Same signatures and branch structure as ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, sqrt, cos, sin, fabs, lgamma, pow, M_PI, INFINITY

cnp.import_array()

cdef double SERIES_MAX = 12.0
cdef double HANKEL_MIN = 25.0
cdef double TINY = 1e-17


cpdef double hankel_threshold(double nu):
    return max(HANKEL_MIN, nu * nu)


cdef void _series(double nu, double tau, double* u, double* om) noexcept nogil:
    cdef double z = -0.25 * tau * tau
    cdef double term = 1.0, tail = 0.0, comp = 0.0, s
    cdef int k = 0
    while True:
        k += 1
        term = term * z / (k * (nu + k))
        s = tail + term
        if fabs(tail) >= fabs(term):
            comp += (tail - s) + term
        else:
            comp += (term - s) + tail
        tail = s
        if k > 4 and fabs(term) <= TINY * max(fabs(tail + comp), 1e-300):
            break
        if k > 400:
            break
    tail = tail + comp
    u[0] = 1.0 + tail
    om[0] = -tail


cdef double _hankel(double nu, double tau) noexcept nogil:
    cdef double mu4 = 4.0 * nu * nu
    cdef double p = 1.0, q = 0.0, a = 1.0, prev = INFINITY, mag, sign
    cdef int k
    for k in range(1, 200):
        a = a * (mu4 - (2 * k - 1) * (2 * k - 1)) / (8.0 * k * tau)
        mag = fabs(a)
        if mag >= prev or mag == 0.0:
            break
        sign = 1.0 if (k // 2) % 2 == 0 else -1.0
        if k % 2 == 0:
            p += sign * a
        else:
            q += sign * a
        prev = mag
        if mag <= TINY:
            break
    cdef double chi = tau - (0.5 * nu + 0.25) * M_PI
    return sqrt(2.0 / (M_PI * tau)) * (p * cos(chi) - q * sin(chi))


cdef double _miller_u(double nu, double tau) noexcept nogil:
    cdef int n_start = <int>(tau + 10.0 * pow(tau, 1.0 / 3.0) + 40.0)
    cdef double f_next = 0.0, f_cur = 1e-30, total = 0.0, f_prev
    cdef double g = 1.0
    cdef int k, m
    # g_m for the even index k = 2m, built upward once then consumed downward
    cdef int m_top = n_start // 2
    for m in range(1, m_top):
        g = g * (nu + m) / (m + 1)
    for k in range(n_start, 0, -1):
        if k % 2 == 0:
            m = k // 2
            total += (nu + k) * g * f_cur
            if m > 1:
                g = g * m / (nu + m - 1)
        f_prev = (2.0 * (nu + k) / tau) * f_cur - f_next
        f_next = f_cur
        f_cur = f_prev
        if fabs(f_cur) > 1e100:
            f_cur *= 1e-100
            f_next *= 1e-100
            total *= 1e-100
    total += f_cur
    return f_cur / total


def normalized_bessel(double nu, tau):
    """Return (u, 1 - u) with u(tau) = Gamma(nu+1) (2/tau)^nu J_nu(tau)."""
    arr = np.asarray(tau, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(arr).ravel()
    cdef Py_ssize_t n = x.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] om = np.empty(n)
    cdef double th = hankel_threshold(nu), lg = lgamma(nu + 1.0), xi, ui, oi
    with nogil:
        for i in range(n):
            xi = x[i]
            if xi <= SERIES_MAX:
                _series(nu, xi, &ui, &oi)
            elif xi >= th:
                ui = exp(lg + nu * log(2.0 / xi)) * _hankel(nu, xi)
                oi = 1.0 - ui
            else:
                ui = _miller_u(nu, xi)
                oi = 1.0 - ui
            u[i] = ui
            om[i] = oi
    return u.reshape(arr.shape), om.reshape(arr.shape)


def bessel_j(double nu, tau):
    arr = np.asarray(tau, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(arr).ravel()
    cdef Py_ssize_t n = x.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double th = hankel_threshold(nu), lg = lgamma(nu + 1.0), xi, ui, oi
    with nogil:
        for i in range(n):
            xi = x[i]
            if xi == 0.0:
                out[i] = 1.0 if nu == 0.0 else (0.0 if nu > 0.0 else INFINITY)
            elif xi >= th:
                out[i] = _hankel(nu, xi)
            else:
                if xi <= SERIES_MAX:
                    _series(nu, xi, &ui, &oi)
                else:
                    ui = _miller_u(nu, xi)
                out[i] = ui * exp(nu * log(0.5 * xi) - lg)
    return out.reshape(arr.shape)


cdef void _heavy_ball(double b, double t, double lam, double* rt, double* om) noexcept nogil:
    cdef double s = 0.5 * b * t
    cdef double w = 1.0 - 4.0 * lam / (b * b)
    cdef double c_prev, c_cur, c_new, tn, term, prev, acc, total, even, odd, wk
    cdef double beta, omb, ea, eb, r, o
    cdef int n, k
    if t <= 0.0 or lam <= 0.0:
        rt[0] = 1.0
        om[0] = 0.0
        return
    if s <= 0.5 and lam * t * t <= 0.25:
        c_prev = 1.0
        c_cur = 0.0
        acc = 0.0
        tn = t
        prev = INFINITY
        for n in range(200):
            c_new = -(b * (n + 1) * c_cur + lam * c_prev) / ((n + 2) * (n + 1))
            tn = tn * t
            term = c_new * tn
            acc -= term
            c_prev = c_cur
            c_cur = c_new
            # coefficients can vanish individually, so require two small terms in a row
            if n > 2 and fabs(term) + fabs(prev) <= 1e-18 * max(fabs(acc), 1e-300):
                break
            prev = term
        om[0] = acc
        rt[0] = 1.0 - acc
        return
    if fabs(w) * s * s < 1e-6:
        total = 0.0
        even = 1.0
        odd = s
        wk = 1.0
        for k in range(12):
            total += wk * (even + odd)
            even = even * s * s / ((2 * k + 1) * (2 * k + 2))
            odd = odd * s * s / ((2 * k + 2) * (2 * k + 3))
            wk = wk * w
        r = exp(-s) * total
        rt[0] = r
        om[0] = 1.0 - r
        return
    if w > 0.0:
        beta = sqrt(w)
        omb = (4.0 * lam / (b * b)) / (1.0 + beta)
        ea = s * omb
        eb = s * (1.0 + beta)
        r = 0.5 * (exp(-ea) + exp(-eb)) + exp(-ea) * (-expm1(-2.0 * beta * s)) / (2.0 * beta)
        if beta >= 0.5:
            o = 0.5 * (1.0 + 1.0 / beta) * (-expm1(-ea)) - (omb / (2.0 * beta)) * (-expm1(-eb))
        else:
            o = 1.0 - r
        rt[0] = r
        om[0] = o
        return
    beta = sqrt(-w)
    r = exp(-s) * (cos(beta * s) + sin(beta * s) / beta)
    rt[0] = r
    om[0] = 1.0 - r


def heavy_ball(double b, t, lam):
    """Return (rho_tilde, 1 - rho_tilde) of the heavy-ball flow for damping b."""
    tt, ll = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(lam, dtype=np.float64))
    shape = tt.shape
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tv = np.ascontiguousarray(tt).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lv = np.ascontiguousarray(ll).ravel()
    cdef Py_ssize_t n = tv.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rt = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] om = np.empty(n)
    cdef double r, o
    with nogil:
        for i in range(n):
            _heavy_ball(b, tv[i], lv[i], &r, &o)
            rt[i] = r
            om[i] = o
    return rt.reshape(shape), om.reshape(shape)
