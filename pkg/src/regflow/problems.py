"""Synthetic test problems and exact-norm noise."""
import csv
import os
from dataclasses import dataclass, field

import numpy as np
import toml

from .spectral_core import SpectralDecomposition, decompose

EPSILON = 0.05
FAMILIES = ("green",)


@dataclass(frozen=True, eq=False)
class Problem:
    """Operator, exact minimum-norm solution and exact data.

    Exactly one of ``matrix`` (dense operator) and ``sigma`` (diagonal
    operator diag(sigma)) is set.
    """

    x_dagger: np.ndarray
    y: np.ndarray
    meta: dict
    matrix: np.ndarray | None = None
    sigma: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self):
        return self.x_dagger.size

    def decomposition(self):
        if "dec" not in self._cache:
            if self.sigma is not None:
                self._cache["dec"] = SpectralDecomposition.from_diagonal(self.sigma)
            else:
                self._cache["dec"] = decompose(self.matrix)
        return self._cache["dec"]

    def dense(self):
        return np.diag(self.sigma) if self.sigma is not None else self.matrix

    def apply(self, x):
        if self.sigma is not None:
            return self.sigma * x
        return self.matrix @ x


@dataclass(frozen=True, eq=False)
class NoisyData:
    y_tilde: np.ndarray
    delta: float
    seed: int | None


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


def diagonal_problem(n, p, mu, seed=0, epsilon=EPSILON):
    """Diagonal operator sigma_k = k^{-p} with source order mu.

    w has components proportional to k^{-1/2-epsilon} with seeded random
    signs and unit norm; x_dagger = (L*L)^{mu/2} w and y = L x_dagger.  The
    spectral tail then behaves like lambda^{mu + epsilon/p}.
    """
    n = int(n)
    if n < 10:
        raise ValueError("diagonal_problem needs n >= 10")
    if not p > 0.0:
        raise ValueError("decay exponent p must be > 0")
    if mu < 0.0:
        raise ValueError("source order mu must be >= 0")
    k = np.arange(1, n + 1, dtype=np.float64)
    sigma = k ** (-float(p))
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=n)
    w = signs * k ** (-0.5 - epsilon)
    w /= np.linalg.norm(w)
    x = sigma ** float(mu) * w
    y = sigma * x
    _readonly(sigma, x, y)
    meta = {"family": "diagonal", "n": n, "p": float(p), "mu": float(mu), "seed": int(seed),
            "epsilon": float(epsilon)}
    return Problem(x, y, meta, sigma=sigma)


def green_matrix(n):
    """Midpoint discretisation of k(s,t) = s(1-t) for s <= t (symmetric) on [0,1]^2."""
    h = 1.0 / n
    s = (np.arange(n) + 0.5) * h
    lo = np.minimum.outer(s, s)
    hi = np.maximum.outer(s, s)
    return h * lo * (1.0 - hi), s


def integral_problem(n, family="green", seed=0):
    """Discretised integral equation; ``seed`` is recorded but the problem is deterministic."""
    n = int(n)
    if n < 16:
        raise ValueError("integral_problem needs n >= 16")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; known: {', '.join(FAMILIES)}")
    a, s = green_matrix(n)
    x = s * (1.0 - s)
    y = a @ x
    _readonly(a, x, y)
    meta = {"family": family, "n": n, "seed": int(seed)}
    return Problem(x, y, meta, matrix=a)


def add_noise(y, delta, seed=0):
    """y_tilde = y + delta g/||g|| with g seeded standard normal, so ||y_tilde - y|| = delta."""
    y = np.asarray(y, dtype=np.float64)
    delta = float(delta)
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    if delta == 0.0:
        return NoisyData(y.copy(), 0.0, seed)
    if y.size == 0:
        raise ValueError("cannot perturb zero-dimensional data")
    g = np.random.default_rng(seed).standard_normal(y.size)
    return NoisyData(y + delta * g / np.linalg.norm(g), delta, seed)


def _write_vector(path, v, name):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        for x in v:
            w.writerow([repr(float(x))])


def _read_vector(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[0]) for r in rows[1:] if r], dtype=np.float64)


def save_problem(problem, directory):
    """Write operator.csv (or sigma.csv), xdag.csv, y.csv and meta.toml."""
    os.makedirs(directory, exist_ok=True)
    if problem.sigma is not None:
        _write_vector(os.path.join(directory, "sigma.csv"), problem.sigma, "sigma")
    else:
        with open(os.path.join(directory, "operator.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in problem.matrix:
                w.writerow([repr(float(x)) for x in row])
    _write_vector(os.path.join(directory, "xdag.csv"), problem.x_dagger, "x_dagger")
    _write_vector(os.path.join(directory, "y.csv"), problem.y, "y")
    with open(os.path.join(directory, "meta.toml"), "w") as fh:
        toml.dump(problem.meta, fh)


def load_problem(directory):
    from .spectral_core import read_matrix_csv

    meta = toml.load(os.path.join(directory, "meta.toml"))
    x = _read_vector(os.path.join(directory, "xdag.csv"))
    y = _read_vector(os.path.join(directory, "y.csv"))
    sig_path = os.path.join(directory, "sigma.csv")
    if os.path.exists(sig_path):
        return Problem(x, y, meta, sigma=_read_vector(sig_path))
    return Problem(x, y, meta, matrix=read_matrix_csv(os.path.join(directory, "operator.csv")))
