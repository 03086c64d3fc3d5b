"""Eigenanalysis of estimated covariance surfaces and surface distances.

A covariance surface sampled on a uniform grid with spacing Delta turns
the integral operator into the symmetric matrix Delta * C; its
eigenvalues approximate the operator eigenvalues and its eigenvectors,
rescaled by 1/sqrt(Delta), approximate the eigenfunctions in the sense
that sum psi_k(t_j)^2 * Delta = 1.

Estimated surfaces need not be nonnegative definite (they come from a
local regression, not a Gram construction), so negative eigenvalues are
retained, not clipped; ``negative`` flags them so downstream consumers
can exclude the corresponding eigenfunctions from error metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EvaluationGrid, SurfaceEstimate, freeze_array

__all__ = ["EigenSystem", "align_signs", "eigendecompose", "hs_distance"]


@dataclass(frozen=True)
class EigenSystem:
    """Leading eigenpairs of a covariance surface on a grid.

    ``eigenvalues`` are sorted descending; column k of ``eigenfunctions``
    (shape M x K) is normalized so its squared values sum to 1/Delta,
    i.e. unit L2 norm under the rectangle rule. ``negative`` marks
    eigenvalues below zero.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: EvaluationGrid
    negative: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", freeze_array(self.eigenvalues))
        object.__setattr__(self, "eigenfunctions", freeze_array(self.eigenfunctions))
        object.__setattr__(self, "negative", freeze_array(self.negative, dtype=bool))
        if self.eigenfunctions.ndim != 2:
            raise ValueError("eigenfunctions must be an M x K matrix")
        if self.eigenfunctions.shape != (self.grid.m, self.eigenvalues.shape[0]):
            raise ValueError("eigenfunctions shape does not match grid and eigenvalues")
        if self.negative.shape != self.eigenvalues.shape:
            raise ValueError("negative flags must align with eigenvalues")

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    flipped = vectors.copy()
    for k in range(flipped.shape[1]):
        col = flipped[:, k]
        lead = col[np.argmax(np.abs(col))]
        if lead < 0:
            flipped[:, k] = -col
    return flipped


def eigendecompose(surface: SurfaceEstimate, k: int) -> EigenSystem:
    """Leading k eigenpairs of the operator induced by the surface.

    Parameters
    ----------
    surface : SurfaceEstimate
        Must be exactly symmetric (the triangle estimator and the
        symmetrized baseline both guarantee this) and finite.
    k : int
        Number of leading eigenpairs, 1 <= k <= M.

    Raises
    ------
    ValueError
        On non-symmetric or non-finite surfaces, or k out of range.
    """
    values = surface.values
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("eigendecomposition needs a square surface")
    if values.tobytes() != values.T.copy().tobytes():
        raise ValueError("surface is not exactly symmetric")
    if not np.all(np.isfinite(values)):
        raise ValueError("surface has non-finite entries; cannot eigendecompose")
    m = surface.grid.m
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    delta = surface.grid.spacing
    w, v = np.linalg.eigh(delta * values)
    order = np.argsort(w)[::-1][:k]
    eigvals = w[order]
    eigfuns = _canonical_signs(v[:, order] / np.sqrt(delta))
    return EigenSystem(
        eigenvalues=eigvals,
        eigenfunctions=eigfuns,
        grid=surface.grid,
        negative=eigvals < 0.0,
    )


def align_signs(est: EigenSystem, ref=None) -> EigenSystem:
    """Resolve the sign ambiguity of eigenfunctions against a reference.

    Each estimated eigenfunction is flipped, if needed, so its rectangle
    rule inner product with the reference function is nonnegative. The
    reference may be another EigenSystem on the same grid or an M x K'
    array of function values; columns beyond the reference's width, and
    exact-zero inner products, fall back to the canonical
    largest-entry-positive convention already in place.
    """
    if ref is None:
        return est
    if isinstance(ref, EigenSystem):
        if not np.array_equal(ref.grid.points, est.grid.points):
            raise ValueError("reference eigensystem lives on a different grid")
        ref_funs = ref.eigenfunctions
    else:
        ref_funs = np.asarray(ref, dtype=np.float64)
        if ref_funs.ndim != 2 or ref_funs.shape[0] != est.grid.m:
            raise ValueError("reference must be an M x K array on the same grid")
    flipped = est.eigenfunctions.copy()
    delta = est.grid.spacing
    k_common = min(flipped.shape[1], ref_funs.shape[1])
    for k in range(k_common):
        inner = float(flipped[:, k] @ ref_funs[:, k]) * delta
        if inner < 0:
            flipped[:, k] = -flipped[:, k]
    return EigenSystem(
        eigenvalues=est.eigenvalues,
        eigenfunctions=flipped,
        grid=est.grid,
        negative=est.negative,
    )


def hs_distance(a: np.ndarray, b: np.ndarray, grid: EvaluationGrid) -> float:
    """Hilbert-Schmidt distance of two surfaces by the rectangle rule.

    sqrt(Delta^2 * sum (a - b)^2) over all M^2 nodes, every node with
    full weight. For a constant difference c this gives
    Delta * M * |c| = |c| * M / (M - 1), within O(1/M) of the exact
    integral value |c|.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ValueError("surfaces must be two 2D arrays of equal shape")
    if a.shape != (grid.m, grid.m):
        raise ValueError("surface shape does not match the grid")
    diff = a - b
    return float(np.sqrt(grid.spacing**2 * np.sum(diff * diff)))
