"""Finite spectral calculus for a linear operator L given as a matrix.

Spectral values of L*L are lambda_k = sigma_k^2.  Functions g of L*L act
on data through the finite sum  sum_k g(lambda_k) sigma_k <u_k, y> v_k.
"""
import csv
import warnings
from dataclasses import dataclass

import numpy as np

REL_THRESHOLD = 1e-12
MERGE_RTOL = 1e-12


class UnattainableDataWarning(UserWarning):
    """Data has a component outside the range of L."""


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Thin SVD  L = sum_k sigma_k u_k v_k^T  with the numerical null space removed.

    For diagonal operators (``diagonal=True``) the singular vectors are the
    coordinate vectors and are not stored: ``left_vectors`` and
    ``right_vectors`` are ``None`` and coefficient maps reduce to indexing.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray | None
    right_vectors: np.ndarray | None
    shape: tuple
    diagonal: bool = False

    @property
    def operator_norm(self):
        return float(self.singular_values[0])

    @property
    def rank(self):
        return int(self.singular_values.size)

    @property
    def eigenvalues(self):
        """lambda_k = sigma_k^2, in the (descending) order of the singular values."""
        return self.singular_values ** 2

    @classmethod
    def from_diagonal(cls, sigma):
        """Decomposition of the square diagonal operator diag(sigma), sigma > 0 descending."""
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.ndim != 1 or sigma.size == 0:
            raise ValueError("sigma must be a nonempty 1-D array")
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0.0):
            raise ValueError("diagonal entries must be finite and > 0")
        if np.any(np.diff(sigma) > 0.0):
            raise ValueError("diagonal entries must be sorted descending")
        sigma = sigma.copy()
        sigma.setflags(write=False)
        return cls(sigma, None, None, (sigma.size, sigma.size), diagonal=True)

    # coefficient maps

    def data_coefficients(self, y):
        """<u_k, y> for every k."""
        y = _vector(y, self.shape[0], "data")
        if self.diagonal:
            return y[: self.rank].copy()
        return self.left_vectors.T @ y

    def solution_coefficients(self, x):
        """<v_k, x> for every k."""
        x = _vector(x, self.shape[1], "solution")
        if self.diagonal:
            return x[: self.rank].copy()
        return self.right_vectors.T @ x

    def synthesize(self, coeffs):
        """sum_k c_k v_k."""
        c = np.asarray(coeffs, dtype=np.float64)
        if self.diagonal:
            return c.copy()
        return self.right_vectors @ c

    def synthesize_data(self, coeffs):
        """sum_k c_k u_k."""
        c = np.asarray(coeffs, dtype=np.float64)
        if self.diagonal:
            return c.copy()
        return self.left_vectors @ c

    def apply(self, x):
        """L x."""
        return self.synthesize_data(self.singular_values * self.solution_coefficients(x))

    def reconstruct(self):
        """Dense matrix sum_k sigma_k u_k v_k^T."""
        if self.diagonal:
            return np.diag(self.singular_values)
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def _vector(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != n:
        raise ValueError(f"{what} vector must have length {n}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} vector contains non-finite entries")
    return x


def decompose(matrix, rel_threshold=REL_THRESHOLD):
    """Thin SVD of a dense matrix, dropping singular values below rel_threshold * sigma_1.

    Raises
    ------
    ValueError
        For non-finite input or the zero operator.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ValueError("matrix must be two-dimensional with m, n >= 1")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("zero operator")
    keep = s > rel_threshold * s[0]
    sv = s[keep].copy()
    uu = np.ascontiguousarray(u[:, keep])
    vv = np.ascontiguousarray(vt[keep].T)
    for arr in (sv, uu, vv):
        arr.setflags(write=False)
    return SpectralDecomposition(sv, uu, vv, a.shape)


def apply_spectral_function(dec, g, rhs):
    """g(L*L) L* rhs = sum_k g(lambda_k) sigma_k <u_k, rhs> v_k.

    ``g`` is called once with the array of eigenvalues lambda_k.
    """
    coeff = dec.data_coefficients(rhs)
    lam = dec.eigenvalues
    vals = np.asarray(g(lam), dtype=np.float64) * np.ones_like(lam)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise ValueError(f"spectral function is not finite at lambda = {float(lam[bad][0])!r}")
    return dec.synthesize(vals * dec.singular_values * coeff)


def min_norm_solution(dec, y, rtol=1e-8):
    """x_dagger = sum_k sigma_k^{-1} <u_k, y> v_k.

    Emits ``UnattainableDataWarning`` when the component of y outside
    span{u_k} exceeds ``rtol * ||y||``.
    """
    y = _vector(y, dec.shape[0], "data")
    coeff = dec.data_coefficients(y)
    ny = np.linalg.norm(y)
    if ny > 0.0:
        outside = np.linalg.norm(y - dec.synthesize_data(coeff)) if not dec.diagonal else 0.0
        if outside > rtol * ny:
            warnings.warn(
                f"data not attainable: component outside range of size {outside:.3e}",
                UnattainableDataWarning,
                stacklevel=2,
            )
    return dec.synthesize(coeff / dec.singular_values)


@dataclass(frozen=True, eq=False)
class SpectralTail:
    """Right-continuous step function e(lambda) = ||E_[0,lambda] x_dagger||^2.

    ``eigenvalues`` holds the distinct spectral values in ascending order
    (values within a relative 1e-12 are merged), ``increments`` the mass
    Delta e at each and ``cumulative`` the running sum.
    """

    eigenvalues: np.ndarray
    increments: np.ndarray
    cumulative: np.ndarray
    total: float

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        idx = np.searchsorted(self.eigenvalues, lam, side="right")
        padded = np.concatenate([[0.0], self.cumulative])
        out = padded[idx]
        return float(out) if out.ndim == 0 else out


def merge_spectrum(lam_desc, weights, rtol=MERGE_RTOL):
    """Group equal (within rtol) eigenvalues; return ascending values and summed weights."""
    lam = np.asarray(lam_desc, dtype=np.float64)[::-1]
    w = np.asarray(weights, dtype=np.float64)[::-1]
    if lam.size == 0:
        return lam, w
    starts = np.concatenate([[True], np.diff(lam) > rtol * lam[1:]])
    groups = np.cumsum(starts) - 1
    merged_w = np.bincount(groups, weights=w)
    merged_lam = lam[starts]
    return merged_lam, merged_w


def spectral_tail(dec, x_dagger):
    """Spectral tail of x_dagger; ``total`` is ||projection onto span{v_k}||^2."""
    c = dec.solution_coefficients(x_dagger)
    lam, inc = merge_spectrum(dec.eigenvalues, c * c)
    cum = np.cumsum(inc)
    for arr in (lam, inc, cum):
        arr.setflags(write=False)
    return SpectralTail(lam, inc, cum, float(cum[-1]) if cum.size else 0.0)


def read_matrix_csv(path):
    """Dense matrix from CSV (row-major); a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    a = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{path}: ragged rows")
    return a
