"""Quadratic-inference-function feature extraction.

A skeleton's pixel coordinates become a pair grid: an ``M x 2N`` matrix
whose row ``j`` is ``(x_j, y_0, x_j, y_1, ..., x_j, y_{N-1})``. Over a
training set of ``I`` grids we form the mean grid ``g``, the centered grids
``phi_i = X_i - g`` and their ``M x M`` covariance
``C = (1/I) sum phi_i phi_i^T``. The reduced operator

    Q = g^T C^+ g        (2N x 2N, independent of I)

is eigen-decomposed; the leading eigenpairs that explain more than a
fraction ``tau`` of the spectrum give the eigenveins ``e_k = Q v_k``. An
image's weight vector is

    w_k = 1/(N M) * sum_j e_k . (row_j(X) - row_j(g))

and templates are compared by Euclidean distance in that K-dim space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    AllZeroSpectrum,
    DimensionMismatch,
    EmptyCoordinateList,
    InsufficientCoordinates,
    InsufficientSamples,
)
from .raster import BinaryImage
from .roc import sweep_thresholds

MIN_POINTS = 8
DEFAULT_MAX_POINTS = 128
EVALUATED_TAUS = (0.9, 0.95)
VEIN_THRESHOLD_PERCENTILE = 99.0
VEIN_THRESHOLD_FACTOR = 1.5


@dataclass(frozen=True)
class TrainingDims:
    M: int
    N: int
    I: int

    def __post_init__(self):
        if min(self.M, self.N, self.I) < 1:
            raise ValueError(f"training dims must be >= 1, got {self}")


@dataclass(eq=False)
class VeinSpaceModel:
    """Trained vein space plus enrolled templates.

    ``mean`` is the ``M x 2N`` mean grid, ``eigenveins`` is ``K x 2N`` and each
    template is ``(label, weights)`` with ``weights`` of length ``K``.
    """

    dims: TrainingDims
    mean: np.ndarray
    tau: float
    eigenvalues: np.ndarray
    eigenveins: np.ndarray
    templates: list[tuple[str, np.ndarray]] = field(default_factory=list)
    theta_vein: float = np.inf
    theta_id: float = np.inf

    @property
    def K(self) -> int:
        return self.eigenveins.shape[0]

    @cached_property
    def basis(self) -> np.ndarray:
        return orthonormal_basis(self.eigenveins)

    def labels(self) -> list[str]:
        return [label for label, _ in self.templates]

    def enroll(self, label: str, weights: np.ndarray) -> "VeinSpaceModel":
        """Copy of the model with one more template appended."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.K,):
            raise DimensionMismatch(f"template length {weights.shape} != ({self.K},)")
        return replace(self, templates=[*self.templates, (str(label), weights)])


# --- coordinates and grids ---------------------------------------------------


def extract_coordinates(skel: BinaryImage) -> np.ndarray:
    """Foreground ``(x, y)`` pairs in raster order as an ``(n, 2)`` int array."""
    ys, xs = np.nonzero(skel.mask)
    return np.column_stack([xs, ys]).astype(np.int64)


def resample_indices(length: int, m: int) -> np.ndarray:
    """``round(t (length-1) / (m-1))`` for t = 0..m-1, halves rounded up."""
    if m == 1:
        return np.zeros(1, dtype=np.int64)
    t = np.arange(m, dtype=np.int64)
    return (2 * t * (length - 1) + (m - 1)) // (2 * (m - 1))


def resample(coords, m: int) -> np.ndarray:
    """Pick ``m`` points spread uniformly along the raster-ordered list."""
    coords = np.asarray(coords).reshape(-1, 2)
    if len(coords) == 0:
        raise EmptyCoordinateList("cannot resample an empty coordinate list")
    if m < 1:
        raise ValueError("m must be >= 1")
    return coords[resample_indices(len(coords), m)]


def build_pair_grid(coords, dims: TrainingDims) -> np.ndarray:
    """Lay out ``X_jk = (x_j, y_k)`` for the first M x's and N y's of ``coords``."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if len(coords) < max(dims.M, dims.N):
        raise DimensionMismatch(f"need {max(dims.M, dims.N)} coordinates, got {len(coords)}")
    grid = np.empty((dims.M, 2 * dims.N))
    grid[:, 0::2] = coords[: dims.M, 0][:, None]
    grid[:, 1::2] = coords[: dims.N, 1][None, :]
    return grid


def grid_from_coordinates(coords, dims: TrainingDims) -> np.ndarray:
    """Resample a skeleton's coordinates to the model dims and lay out the grid."""
    coords = np.asarray(coords).reshape(-1, 2)
    if len(coords) < MIN_POINTS:
        raise InsufficientCoordinates(f"{len(coords)} skeleton pixels < {MIN_POINTS}")
    xs = resample(coords, dims.M)[:, 0]
    ys = resample(coords, dims.N)[:, 1]
    width = max(dims.M, dims.N)
    merged = np.zeros((width, 2))
    merged[: dims.M, 0] = xs
    merged[: dims.N, 1] = ys
    return build_pair_grid(merged, dims)


def _check_shapes(grids) -> tuple[int, int]:
    if len(grids) == 0:
        raise DimensionMismatch("no grids supplied")
    shape = np.shape(grids[0])
    for g in grids:
        if np.shape(g) != shape:
            raise DimensionMismatch(f"grid shape {np.shape(g)} != {shape}")
    return shape


def mean_grid(grids: Sequence[np.ndarray]) -> np.ndarray:
    _check_shapes(grids)
    return np.mean(np.stack([np.asarray(g, dtype=np.float64) for g in grids]), axis=0)


def center(grid: np.ndarray, g: np.ndarray) -> np.ndarray:
    if np.shape(grid) != np.shape(g):
        raise DimensionMismatch(f"grid {np.shape(grid)} vs mean {np.shape(g)}")
    return np.asarray(grid, dtype=np.float64) - g


def covariance(centered: Sequence[np.ndarray]) -> linalg.SymMatrix:
    """``(1/I) sum phi_i phi_i^T`` as an ``M x M`` symmetric matrix."""
    _check_shapes(centered)
    stack = np.stack([np.asarray(c, dtype=np.float64) for c in centered])
    return linalg.SymMatrix(np.einsum("ijk,ilk->jl", stack, stack) / len(centered))


def build_qif(g: np.ndarray, c_inv) -> linalg.SymMatrix:
    """``Q = g^T C^- g``; order 2N regardless of the training-set size."""
    c = c_inv.data if isinstance(c_inv, linalg.SymMatrix) else np.asarray(c_inv)
    if c.shape != (g.shape[0], g.shape[0]):
        raise DimensionMismatch(f"inverse covariance {c.shape} vs mean grid rows {g.shape[0]}")
    return linalg.SymMatrix(g.T @ c @ g)


# --- eigenveins ----------------------------------------------------------------


def select_eigenveins(values, tau: float) -> int:
    """Smallest K whose leading-eigenvalue share strictly exceeds ``tau``.

    Negative eigenvalues are clamped to zero first.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if tau not in EVALUATED_TAUS:
        warnings.warn(f"tau={tau}; the method is evaluated at 0.9 and 0.95", stacklevel=2)
    v = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
    if v.size == 0:
        raise ValueError("no eigenvalues supplied")
    total = v.sum()
    if total <= 0:
        raise AllZeroSpectrum("all eigenvalues are zero")
    ratios = np.cumsum(v) / total
    above = np.flatnonzero(ratios > tau)
    return int(above[0]) + 1 if above.size else v.size


def make_eigenveins(q, pairs: linalg.EigenPairs, k: int) -> np.ndarray:
    """``e_k = Q v_k`` for the top ``k`` pairs, one eigenvein per row."""
    qd = q.data if isinstance(q, linalg.SymMatrix) else np.asarray(q)
    if k > qd.shape[0]:
        raise ValueError(f"K={k} exceeds matrix order {qd.shape[0]}")
    return (qd @ pairs.vectors[:, :k]).T.copy()


def orthonormal_basis(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal rows spanning ``vectors`` (modified Gram-Schmidt, two passes)."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    scale = max(np.linalg.norm(vectors, axis=1).max(initial=0.0), 1e-300)
    basis: list[np.ndarray] = []
    for v in vectors:
        w = v.copy()
        for _ in range(2):
            for b in basis:
                w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > tol * scale:
            basis.append(w / norm)
    if not basis:
        return np.zeros((0, vectors.shape[1]))
    return np.array(basis)


def project(grid: np.ndarray, g: np.ndarray, eigenveins: np.ndarray) -> np.ndarray:
    """Weight vector of ``grid`` in vein space."""
    if np.shape(grid) != np.shape(g):
        raise DimensionMismatch(f"grid {np.shape(grid)} vs mean {np.shape(g)}")
    if eigenveins.shape[1] != g.shape[1]:
        raise DimensionMismatch(f"eigenvein length {eigenveins.shape[1]} vs 2N={g.shape[1]}")
    m, two_n = g.shape
    row_sum = (np.asarray(grid, dtype=np.float64) - g).sum(axis=0)
    return eigenveins @ row_sum / ((two_n // 2) * m)


def residual(grid: np.ndarray, g: np.ndarray, eigenveins=None, *, basis=None) -> float:
    """Mean per-row squared distance from the eigenvein span, divided by 2N.

    Pass a precomputed orthonormal ``basis`` to skip Gram-Schmidt.
    """
    if np.shape(grid) != np.shape(g):
        raise DimensionMismatch(f"grid {np.shape(grid)} vs mean {np.shape(g)}")
    if basis is None:
        basis = orthonormal_basis(eigenveins)
    d = np.asarray(grid, dtype=np.float64) - g
    r = d - (d @ basis.T) @ basis
    return float(np.mean(np.sum(r * r, axis=1)) / g.shape[1])


# --- training -------------------------------------------------------------------


def training_dims(coordinate_lists, max_points: int = DEFAULT_MAX_POINTS) -> TrainingDims:
    counts = []
    for coords in coordinate_lists:
        n = len(coords)
        if n < MIN_POINTS:
            raise InsufficientCoordinates(f"{n} skeleton pixels < {MIN_POINTS}")
        counts.append(min(n, max_points))
    m = min(counts)
    return TrainingDims(M=m, N=m, I=len(counts))


def _euclid_matrix(w: np.ndarray) -> np.ndarray:
    diff = w[:, None, :] - w[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def default_theta_id(labels: Sequence[str], weights: np.ndarray) -> float:
    """Identification threshold from leave-one-out distances between templates.

    Each template is held out in turn: its nearest same-label template gives a
    genuine score and its nearest other-label template an impostor score. The
    threshold sits at the empirical equal-error point. With a single template
    per label there are no genuine scores, so half the median nearest-neighbour
    distance is used instead.
    """
    n = len(labels)
    if n < 2:
        return np.inf
    d = _euclid_matrix(weights)
    np.fill_diagonal(d, np.inf)
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    genuine, impostor = [], []
    for i in range(n):
        if np.any(same[i] & np.isfinite(d[i])):
            genuine.append(d[i][same[i]].min())
        if np.any(~same[i]):
            impostor.append(d[i][~same[i]].min())
    if genuine and impostor:
        return sweep_thresholds(genuine, impostor).eer_threshold
    return 0.5 * float(np.median(d.min(axis=1)))


def fit(
    grids: Sequence[np.ndarray],
    labels: Sequence[str],
    tau: float = 0.95,
    rcond: float = linalg.DEFAULT_RCOND,
    ridge: float | None = None,
) -> VeinSpaceModel:
    """Build the vein space from ready-made pair grids and enroll each one."""
    if len(grids) < 2:
        raise InsufficientSamples(f"need >= 2 training samples, got {len(grids)}")
    m, two_n = _check_shapes(grids)
    dims = TrainingDims(M=m, N=two_n // 2, I=len(grids))
    g = mean_grid(grids)
    c = covariance([center(x, g) for x in grids])
    c_inv = linalg.ridge_inverse(c, ridge) if ridge else linalg.pinv_psd(c, rcond)
    q = build_qif(g, c_inv)
    pairs = linalg.sym_eig(q)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        k = select_eigenveins(pairs.values, tau)
    eigenveins = make_eigenveins(q, pairs, k)
    model = VeinSpaceModel(
        dims=dims,
        mean=g,
        tau=float(tau),
        eigenvalues=pairs.values[:k].copy(),
        eigenveins=eigenveins,
    )
    weights = np.array([project(x, g, eigenveins) for x in grids])
    residuals = np.array([residual(x, g, basis=model.basis) for x in grids])
    theta_vein = VEIN_THRESHOLD_FACTOR * float(np.percentile(residuals, VEIN_THRESHOLD_PERCENTILE))
    model.templates = [(str(lab), w) for lab, w in zip(labels, weights)]
    model.theta_vein = max(theta_vein, 1e-12)
    model.theta_id = default_theta_id([str(x) for x in labels], weights)
    return model


def train(
    samples: Sequence[tuple[str, np.ndarray]],
    tau: float = 0.95,
    rcond: float = linalg.DEFAULT_RCOND,
    max_points: int = DEFAULT_MAX_POINTS,
    ridge: float | None = None,
) -> VeinSpaceModel:
    """Train on ``(label, coordinates)`` pairs and enroll one template per sample."""
    if len(samples) < 2:
        raise InsufficientSamples(f"need >= 2 training samples, got {len(samples)}")
    if tau not in EVALUATED_TAUS:
        warnings.warn(f"tau={tau}; the method is evaluated at 0.9 and 0.95", stacklevel=2)
    dims = training_dims([c for _, c in samples], max_points)
    grids = [grid_from_coordinates(c, dims) for _, c in samples]
    return fit(grids, [lab for lab, _ in samples], tau, rcond, ridge)


def probe_grid(model: VeinSpaceModel, coords) -> np.ndarray:
    """Pair grid for a new skeleton at the model's dims."""
    return grid_from_coordinates(coords, model.dims)
