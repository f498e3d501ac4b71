"""Dense symmetric eigensolver and PSD pseudo-inverse.

The eigensolver is the classical row-cyclic Jacobi method, compiled with
numba. The sweep order is fixed and there is no pivoting randomness, so
identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
import numba
import numpy as np

from .errors import NonFinite, NotPSD

DEFAULT_RCOND = 1e-10
PSD_TOLERANCE = 1e-10
MAX_SWEEPS = 60


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Real symmetric matrix; construction symmetrizes as (A + A^T) / 2."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def order(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class EigenPairs:
    """Eigenvalues sorted descending with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def _as_array(a) -> np.ndarray:
    if isinstance(a, SymMatrix):
        return a.data
    return SymMatrix(a).data


@numba.njit(cache=True)
def _jacobi_sweeps(a, vt, tol, max_sweeps):
    """Row-cyclic Jacobi on symmetric ``a`` (modified in place).

    ``vt`` accumulates the rotations with eigenvectors stored as rows.
    Returns the number of sweeps performed.
    """
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if np.sqrt(2.0 * off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = a[p, p]
                aqq = a[q, q]
                for k in range(n):
                    if k == p or k == q:
                        continue
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                    a[k, p] = a[p, k]
                    a[k, q] = a[q, k]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vpk = vt[p, k]
                    vqk = vt[q, k]
                    vt[p, k] = c * vpk - s * vqk
                    vt[q, k] = s * vpk + c * vqk
    return max_sweeps


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    for col in range(vectors.shape[1]):
        v = vectors[:, col]
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if nz.size and v[nz[0]] < 0:
            vectors[:, col] = -v
    return vectors


def sym_eig(a) -> EigenPairs:
    """Eigen-decomposition of a real symmetric matrix.

    Returns values in descending order; the first component of each
    eigenvector with magnitude above 1e-12 is positive.
    """
    a = np.array(_as_array(a), dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")
    vt = np.eye(a.shape[0])
    norm = np.linalg.norm(a)
    if a.shape[0] > 1 and norm > 0:
        _jacobi_sweeps(a, vt, 1e-15 * norm, MAX_SWEEPS)
    values = np.diag(a).copy()
    v = vt.T
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    vectors /= np.linalg.norm(vectors, axis=0)
    vectors = _fix_signs(np.ascontiguousarray(vectors))
    return EigenPairs(values=values, vectors=vectors)


def pinv_psd(a, rcond: float = DEFAULT_RCOND) -> SymMatrix:
    """Pseudo-inverse of a positive semi-definite matrix.

    Eigenvalues above ``rcond`` times the largest are inverted; the rest
    are zeroed. Raises ``NotPSD`` if an eigenvalue falls below
    ``-1e-10 * ||A||_F``.
    """
    if not 0.0 < rcond < 1.0:
        raise ValueError("rcond must lie in (0, 1)")
    arr = _as_array(a)
    if not np.all(np.isfinite(arr)):
        raise NonFinite("matrix has non-finite entries")
    pairs = sym_eig(arr)
    norm = np.linalg.norm(arr)
    if pairs.values[-1] < -PSD_TOLERANCE * norm:
        raise NotPSD(f"eigenvalue {pairs.values[-1]:.3e} below tolerance")
    top = pairs.values[0]
    inv = np.zeros_like(pairs.values)
    if top > 0:
        keep = pairs.values > rcond * top
        inv[keep] = 1.0 / pairs.values[keep]
    vecs = pairs.vectors
    return SymMatrix((vecs * inv) @ vecs.T)


def ridge_inverse(a, lam: float = 1e-6) -> SymMatrix:
    """Inverse of ``A + lam * (trace(A) / n) * I``; the optional ridge mode."""
    arr = _as_array(a)
    n = arr.shape[0]
    shift = lam * np.trace(arr) / n
    if shift <= 0:
        return pinv_psd(arr)
    return pinv_psd(arr + shift * np.eye(n), rcond=1e-15)
