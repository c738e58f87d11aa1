"""Direct integration of the flows, independent of the spectral machinery.

Uses an embedded Dormand-Prince 5(4) pair on the first-order system with
dense matrix-vector products only:

    Showalter         xi' = -A xi + g
    heavy ball        xi'' + b xi' = -A xi + g
    vanishing visc.   xi'' + (b/t) xi' = -A xi + g

with A = L^T L, g = L^T y_tilde and zero initial data.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .flow_filters import FilterKind

MAX_ORACLE_DIM = 64
VISCOSITY_T0 = 1e-4
PASS_TOL = 1e-6

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class StepSizeUnderflow(RuntimeError):
    def __init__(self, t):
        super().__init__(f"step size underflow at t = {t:.6e}")
        self.t = t


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray | None
    method_tag: str
    accepted_steps: int
    rejected_steps: int

    def state_at(self, t):
        """State at a recorded time (checkpoints are always recorded exactly)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not recorded")
        return self.states[i]

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            n = self.states.shape[1]
            w.writerow(["t"] + [f"x{i}" for i in range(n)])
            for t, x in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])


def _rhs(f, A, g):
    n = g.size
    if f.kind is FilterKind.SHOWALTER:
        return lambda t, z: g - A @ z
    b = f.b
    if f.kind is FilterKind.HEAVY_BALL:
        def rhs(t, z):
            x, v = z[:n], z[n:]
            return np.concatenate([v, g - A @ x - b * v])
        return rhs

    def rhs(t, z):
        x, v = z[:n], z[n:]
        return np.concatenate([v, g - A @ x - (b / t) * v])
    return rhs


def _dopri(fun, t0, z0, t_end, tol, stops, max_steps=2_000_000):
    """Adaptive DP5(4); every time in ``stops`` is hit exactly. Returns (times, states, acc, rej)."""
    t, z = t0, z0.copy()
    k1 = fun(t, z)
    scale0 = tol * (1.0 + np.abs(z))
    d0 = np.max(np.abs(z) / scale0)
    d1 = np.max(np.abs(k1) / scale0)
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(max(h, 1e-8), 0.1 * (t_end - t0) + 1e-300)
    times, states = [t], [z.copy()]
    stops = sorted(s for s in stops if s > t0)
    si = 0
    acc = rej = 0
    while t < t_end:
        target = stops[si] if si < len(stops) else t_end
        hit = False
        if t + h >= target:
            h = target - t
            hit = True
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(t)
        ks = [k1]
        for i in range(1, 7):
            zi = z + h * sum(a * k for a, k in zip(_A[i], ks))
            ks.append(fun(t + _C[i] * h, zi))
        z_new = z + h * sum(bb * k for bb, k in zip(_B5, ks) if bb != 0.0)
        err_vec = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        scale = tol * (1.0 + np.maximum(np.abs(z), np.abs(z_new)))
        err = float(np.max(np.abs(err_vec) / scale))
        if err <= 1.0:
            acc += 1
            t = target if hit else t + h
            z = z_new
            k1 = ks[6]  # first same as last
            times.append(t)
            states.append(z.copy())
            if hit and si < len(stops) and t == stops[si]:
                si += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-0.2)))
        else:
            rej += 1
            fac = max(0.2, 0.9 * err ** (-0.2))
        h *= fac
        if acc + rej > max_steps:
            raise StepSizeUnderflow(t)
    return np.array(times), np.array(states), acc, rej


def integrate_flow(matrix, f, y_tilde, t_end, tol=1e-9, checkpoints=(), t0=VISCOSITY_T0):
    """Integrate the flow of ``f`` for the operator ``matrix`` from t = 0 to ``t_end``.

    The vanishing-viscosity flow has a singular coefficient at t = 0; it is
    started at ``t0`` (default 1e-4) from the Taylor data xi = t0^2/(2(b+1)) g,
    xi' = t0/(b+1) g.

    Raises
    ------
    ValueError
        For operators larger than 64 x 64 or inconsistent shapes.
    StepSizeUnderflow
        If the step size collapses.
    """
    L = np.asarray(matrix, dtype=np.float64)
    if L.ndim != 2 or max(L.shape) > MAX_ORACLE_DIM:
        raise ValueError(f"oracle operators are limited to {MAX_ORACLE_DIM}x{MAX_ORACLE_DIM}")
    y = np.asarray(y_tilde, dtype=np.float64)
    if y.shape != (L.shape[0],):
        raise ValueError("y_tilde does not match the operator")
    A = L.T @ L
    g = L.T @ y
    n = L.shape[1]
    fun = _rhs(f, A, g)
    t_end = float(t_end)
    if f.kind is FilterKind.SHOWALTER:
        t0, z0 = 0.0, np.zeros(n)
    elif f.kind is FilterKind.HEAVY_BALL:
        t0, z0 = 0.0, np.zeros(2 * n)
    else:
        t0 = float(t0)
        z0 = np.concatenate([t0 * t0 / (2.0 * (f.b + 1.0)) * g, t0 / (f.b + 1.0) * g])
    stops = [float(c) for c in checkpoints if t0 < c <= t_end]
    times, states, acc, rej = _dopri(fun, t0, z0, t_end, tol, stops)
    if f.kind is FilterKind.SHOWALTER:
        xs, vs = states, None
    else:
        xs, vs = states[:, :n], states[:, n:]
    return Trajectory(times, xs, vs, f.label, acc, rej)


def energy(traj, matrix, y_tilde):
    """||xi'||^2 + ||L xi - y||^2 along a second-order trajectory."""
    L = np.asarray(matrix, dtype=np.float64)
    r = traj.states @ L.T - np.asarray(y_tilde)[None, :]
    return np.sum(traj.velocities ** 2, axis=1) + np.sum(r * r, axis=1)


@dataclass(frozen=True)
class OracleReport:
    method: str
    checkpoints: tuple
    deviations: tuple
    max_deviation: float
    passed: bool


def oracle_compare(matrix, f, y_tilde, t_checkpoints, tol=1e-9, threshold=PASS_TOL):
    """Relative deviation ||xi_ode(t) - xi_filter(t)|| / (1 + ||xi_filter(t)||) at each checkpoint."""
    from .spectral_core import apply_spectral_function, decompose

    cps = tuple(float(t) for t in t_checkpoints)
    traj = integrate_flow(matrix, f, y_tilde, max(cps), tol=tol, checkpoints=cps)
    L = np.asarray(matrix, dtype=np.float64)
    try:
        dec = decompose(L)
    except ValueError:
        dec = None
    devs = []
    for t in cps:
        if dec is None:
            ref = np.zeros(L.shape[1])
        else:
            ref = apply_spectral_function(dec, lambda lam, t=t: f.rho(np.full_like(lam, t), lam), y_tilde)
        x = traj.state_at(t)
        devs.append(float(np.linalg.norm(x - ref) / (1.0 + np.linalg.norm(ref))))
    mx = max(devs)
    return OracleReport(f.label, cps, tuple(devs), mx, mx <= threshold)
