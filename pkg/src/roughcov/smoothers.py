"""Local planar smoothers: second-moment surface, mean, and noise variance.

The second-moment smoother regresses raw cross-products Y_ij * Y_ik on
the plane {1, (T_ij - s), (T_ik - t)} with a product kernel, per-curve
weights 2 / (r_i (r_i - 1)), and one of two pair restrictions:

* ``triangle``: only strictly sub-diagonal cross-products (k < j, so
  T_ik < T_ij) are used; the surface is fitted on the closed lower
  triangle t <= s of the grid (diagonal nodes included, fitted from data
  strictly below the diagonal) and then reflected, G(s,t) = G(t,s).
  The reflection makes the output exactly symmetric, bit for bit, and
  the fit never straddles the diagonal ridge of a rough process.
* ``square``: the classical baseline; the identical planar fit on all
  off-diagonal cross-products (k != j, both orderings) at every grid
  node, symmetrized by averaging with its transpose.

Diagonal products Y_ij^2 are excluded under both restrictions, which is
what removes the measurement-error bias from the surface estimate.

Singular local fits are remediated per node: ridge 1e-10 * trace on the
normal matrix, then up to three local bandwidth doublings (sigma_n held
fixed), then the node is marked NaN and the surface flagged invalid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._fast import get_backend
from .core import (
    EvaluationGrid,
    SingularFitError,
    SparseFunctionalDataset,
    SurfaceEstimate,
    freeze_array,
    validate_dataset,
)
from .kernels import KernelSpec, eval_kernel

__all__ = [
    "RESTRICTIONS",
    "LocalFit",
    "RawPairSet",
    "build_pairs",
    "default_bandwidth",
    "estimate_both_surfaces",
    "estimate_covariance",
    "estimate_mean",
    "estimate_noise_variance",
    "estimate_surface_G",
    "fit_second_moment_at",
    "fit_via_determinant_representation",
    "select_bandwidth_cv",
]

RESTRICTIONS = ("lower_triangle_strict", "off_diagonal")

PIVOT_RTOL = 1e-12  # singularity: smallest LDL pivot below this times trace
RIDGE_SCALE = 1e-10  # remediation ridge, relative to the trace
MAX_H_DOUBLINGS = 3
CHUNK_PAIRS = 32768


@dataclass(frozen=True)
class RawPairSet:
    """Raw cross-products for the 2D smoother.

    Entry i carries the point (u, v) = (T_ij, T_ik), the product
    Y_ij * Y_ik, the curve weight 2 / (r (r - 1)), and the curve index.
    Under ``lower_triangle_strict`` every entry satisfies v < u and the
    weights of one curve sum to 1; ``off_diagonal`` holds both orderings.
    """

    u: np.ndarray
    v: np.ndarray
    product: np.ndarray
    weight: np.ndarray
    curve: np.ndarray
    restriction: str
    n_curves: int

    def __post_init__(self):
        for name in ("u", "v", "product", "weight"):
            object.__setattr__(self, name, freeze_array(getattr(self, name)))
        object.__setattr__(self, "curve", freeze_array(self.curve, dtype=np.int64))

    @property
    def n_pairs(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class LocalFit:
    """Planar WLS fit at one point: intercept, two slopes, smallest pivot."""

    a0: float
    a1: float
    a2: float
    condition_diag: float


def build_pairs(ds: SparseFunctionalDataset, restriction: str) -> RawPairSet:
    """Assemble the raw pair set under the given restriction.

    ``lower_triangle_strict`` keeps, per curve, every (j, k) with k < j as
    the point (T_ij, T_ik); since times are sorted these points lie
    strictly below the diagonal. ``off_diagonal`` keeps both orderings
    (k != j). Diagonal products are never included.

    Raises
    ------
    ValueError
        If the restriction is unknown or the dataset is invalid.
    """
    if restriction not in RESTRICTIONS:
        raise ValueError(
            f"unknown restriction {restriction!r}; choose from {RESTRICTIONS}"
        )
    check = validate_dataset(ds)
    if not check.ok:
        raise ValueError("invalid dataset:\n" + "\n".join(check.violations))
    us, vs, ps, ws, cs = [], [], [], [], []
    for i, curve in enumerate(ds.curves):
        t, y, r = curve.times, curve.values, curve.r
        k_idx, j_idx = np.triu_indices(r, k=1)  # k < j
        u = t[j_idx]
        v = t[k_idx]
        prod = y[j_idx] * y[k_idx]
        if restriction == "off_diagonal":
            u, v = np.concatenate([u, v]), np.concatenate([v, u])
            prod = np.concatenate([prod, prod])
        us.append(u)
        vs.append(v)
        ps.append(prod)
        ws.append(np.full(u.shape[0], 2.0 / (r * (r - 1))))
        cs.append(np.full(u.shape[0], i, dtype=np.int64))
    return RawPairSet(
        u=np.concatenate(us),
        v=np.concatenate(vs),
        product=np.concatenate(ps),
        weight=np.concatenate(ws),
        curve=np.concatenate(cs),
        restriction=restriction,
        n_curves=ds.n,
    )


# ---------------------------------------------------------------------------
# Per-node fits
# ---------------------------------------------------------------------------


def _node_moments(pairs, spec, s, t, h_override=None):
    """Brute-force kernel-weighted moment sums at one point (s, t)."""
    h = spec.h if h_override is None else h_override
    du = pairs.u - s
    dv = pairs.v - t
    wk = pairs.weight * eval_kernel(spec, du / h) * eval_kernel(spec, dv / h)
    wdu = wk * du
    wdv = wk * dv
    wy = wk * pairs.product
    normal = np.array(
        [
            [wk.sum(), wdu.sum(), wdv.sum()],
            [wdu.sum(), wdu @ du, wdu @ dv],
            [wdv.sum(), wdu @ dv, wdv @ dv],
        ]
    )
    rhs = np.array([wy.sum(), wy @ du, wy @ dv])
    return normal, rhs


def _ldl_pivots3(normal: np.ndarray) -> float:
    """Smallest pivot of the LDL^T factorization of a symmetric 3x3 matrix."""
    a, b, c = normal[0, 0], normal[0, 1], normal[0, 2]
    d, e, f = normal[1, 1], normal[1, 2], normal[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = d - b * b / a
        u32 = e - b * c / a
        d3 = f - c * c / a - u32 * u32 / d2
    pivots = np.array([a, d2, d3])
    if not np.all(np.isfinite(pivots)):
        return float("-inf")
    return float(pivots.min())


def fit_second_moment_at(pairs: RawPairSet, spec: KernelSpec, s: float, t: float) -> LocalFit:
    """Planar weighted least-squares fit of the raw products at (s, t).

    Minimizes, over (a0, a1, a2), the kernel-weighted sum of squared
    residuals of the products against a0 + a1 (u - s) + a2 (v - t); the
    intercept a0 is the second-moment estimate at (s, t). Intended for
    points of the closed lower triangle t <= s when ``pairs`` carries the
    triangle restriction; the baseline evaluates the same fit everywhere.

    Raises
    ------
    SingularFitError
        If the smallest pivot of the normal matrix falls below
        1e-12 * trace. Callers may remediate (see estimate_surface_G).
    ValueError
        If the pair set is empty.
    """
    if pairs.n_pairs == 0:
        raise ValueError("cannot fit on an empty pair set")
    normal, rhs = _node_moments(pairs, spec, s, t)
    trace = float(np.trace(normal))
    pivot_min = _ldl_pivots3(normal)
    if not (trace > 0.0 and pivot_min > PIVOT_RTOL * trace):
        raise SingularFitError(
            f"singular local fit at (s={s:.6g}, t={t:.6g}): smallest pivot "
            f"{pivot_min:.3e} vs tolerance {PIVOT_RTOL * max(trace, 0.0):.3e}"
        )
    sol = np.linalg.solve(normal, rhs)
    return LocalFit(
        a0=float(sol[0]), a1=float(sol[1]), a2=float(sol[2]),
        condition_diag=pivot_min,
    )


def fit_via_determinant_representation(
    pairs: RawPairSet, spec: KernelSpec, s: float, t: float
) -> float:
    """Second-moment value at (s, t) through the explicit cofactor formula.

    Accumulates the normalized moments A_pq = (n h^2)^{-1} sum of
    weight * W((u-s)/h) W((v-t)/h) (u-s)^p (v-t)^q (and S_pq with the
    product as response) and combines them as
    [M1 S00 - M2 S10 - M3 S01] / D with M1 = A20 A02 - A11^2,
    M2 = A10 A02 - A01 A11, M3 = A01 A20 - A10 A11 and D the determinant
    of the moment matrix. Kept as an independent oracle path for the
    closed-form WLS fit.

    Raises
    ------
    SingularFitError
        If |D| falls below 1e-12 * trace^3.
    """
    if pairs.n_pairs == 0:
        raise ValueError("cannot fit on an empty pair set")
    h = spec.h
    scale = 1.0 / (pairs.n_curves * h * h)
    du = pairs.u - s
    dv = pairs.v - t
    wk = scale * pairs.weight * eval_kernel(spec, du / h) * eval_kernel(spec, dv / h)
    a00 = wk.sum()
    a10 = (wk * du).sum()
    a01 = (wk * dv).sum()
    a20 = (wk * du * du).sum()
    a11 = (wk * du * dv).sum()
    a02 = (wk * dv * dv).sum()
    wy = wk * pairs.product
    s00 = wy.sum()
    s10 = (wy * du).sum()
    s01 = (wy * dv).sum()
    m1 = a20 * a02 - a11 * a11
    m2 = a10 * a02 - a01 * a11
    m3 = a01 * a20 - a10 * a11
    det = a00 * m1 - a10 * m2 - a01 * m3
    trace = a00 + a20 + a02
    if not abs(det) > PIVOT_RTOL * max(trace, 0.0) ** 3:
        raise SingularFitError(
            f"singular determinant representation at (s={s:.6g}, t={t:.6g}): "
            f"|D| = {abs(det):.3e}"
        )
    return float((m1 * s00 - m2 * s10 - m3 * s01) / det)


# ---------------------------------------------------------------------------
# Surface estimation over the grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Moments:
    """Kernel-weighted moment matrices over all grid nodes (M x M each)."""

    a00: np.ndarray
    a10: np.ndarray
    a01: np.ndarray
    a20: np.ndarray
    a11: np.ndarray
    a02: np.ndarray
    s00: np.ndarray
    s10: np.ndarray
    s01: np.ndarray

    def map(self, fn) -> "_Moments":
        return _Moments(**{k: fn(getattr(self, k)) for k in self.__dataclass_fields__})


def _moment_matrices(pairs, spec, grid, lower_only, backend, chunk=CHUNK_PAIRS):
    """Accumulate the nine moment matrices over all grid nodes.

    ``lower_only=True`` zeroes the strict upper triangle of every matrix
    (node (a, b) with b > a), matching the triangle evaluation region.
    """
    g = grid.points
    m = grid.m
    h = spec.h
    total = pairs.n_pairs
    out = np.zeros((5 * m, 3 * m))
    for lo in range(0, total, chunk):
        sl = slice(lo, min(lo + chunk, total))
        du = pairs.u[sl][None, :] - g[:, None]
        ku = eval_kernel(spec, du / h)
        dv = pairs.v[sl][None, :] - g[:, None]
        kv = eval_kernel(spec, dv / h)
        backend.accumulate(ku, du, kv, dv, pairs.weight[sl], pairs.product[sl], out)

    def blk(i, j):
        return np.ascontiguousarray(out[i * m : (i + 1) * m, j * m : (j + 1) * m])

    mo = _Moments(
        a00=blk(0, 0), a10=blk(1, 0), a01=blk(0, 1),
        a20=blk(2, 0), a11=blk(1, 1), a02=blk(0, 2),
        s00=blk(3, 0), s10=blk(4, 0), s01=blk(3, 1),
    )
    if lower_only:
        mo = mo.map(np.tril)
    return mo


def _offdiag_from_triangle(mo: _Moments) -> _Moments:
    """Exact identity: off-diagonal moments from full-grid triangle moments.

    Each swapped entry (v, u) contributes at node (a, b) what the original
    entry (u, v) contributes at node (b, a) with the du/dv exponents
    exchanged, so A_pq^off = A_pq + (A_qp)^T and likewise for S.
    """
    return _Moments(
        a00=mo.a00 + mo.a00.T,
        a10=mo.a10 + mo.a01.T,
        a01=mo.a01 + mo.a10.T,
        a20=mo.a20 + mo.a02.T,
        a11=mo.a11 + mo.a11.T,
        a02=mo.a02 + mo.a20.T,
        s00=mo.s00 + mo.s00.T,
        s10=mo.s10 + mo.s01.T,
        s01=mo.s01 + mo.s10.T,
    )


def _solve_nodes(mo: _Moments):
    """Vectorized LDL^T solve of the 3x3 normal systems at every node.

    Returns (a0, ok, pivot_min); nodes failing the pivot tolerance have
    ok False and must be remediated or discarded.
    """
    a, b, c = mo.a00, mo.a10, mo.a01
    d, e, f = mo.a20, mo.a11, mo.a02
    r1, r2, r3 = mo.s00, mo.s10, mo.s01
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = b / a
        l31 = c / a
        d2 = d - b * l21
        u32 = e - c * l21
        l32 = u32 / d2
        d3 = f - c * l31 - l32 * u32
        z2 = r2 - l21 * r1
        z3 = r3 - l31 * r1 - l32 * z2
        x3 = z3 / d3
        x2 = z2 / d2 - l32 * x3
        x1 = r1 / a - l21 * x2 - l31 * x3
    trace = a + d + f
    pivot_min = np.minimum(np.minimum(a, d2), d3)
    with np.errstate(invalid="ignore"):
        ok = (
            np.isfinite(x1)
            & (trace > 0.0)
            & (pivot_min > PIVOT_RTOL * trace)
        )
    return x1, ok, pivot_min


def _solve_ridged(normal, rhs):
    """Ridge the normal matrix and solve; None if still singular."""
    trace = float(np.trace(normal))
    if not trace > 0.0:
        return None
    ridged = normal + (RIDGE_SCALE * trace) * np.eye(3)
    if not _ldl_pivots3(ridged) > PIVOT_RTOL * np.trace(ridged):
        return None
    return float(np.linalg.solve(ridged, rhs)[0])


def _remediate_node(pairs, spec, s, t) -> float:
    """Remediation ladder at one failed node; NaN when everything fails."""
    normal, rhs = _node_moments(pairs, spec, s, t)
    value = _solve_ridged(normal, rhs)
    if value is not None:
        return value
    for k in range(1, MAX_H_DOUBLINGS + 1):
        h_k = spec.h * 2.0**k
        normal, rhs = _node_moments(pairs, spec, s, t, h_override=h_k)
        trace = float(np.trace(normal))
        if trace > 0.0 and _ldl_pivots3(normal) > PIVOT_RTOL * trace:
            return float(np.linalg.solve(normal, rhs)[0])
        value = _solve_ridged(normal, rhs)
        if value is not None:
            return value
    return float("nan")


def _finish_triangle(mo_lower, pairs, spec, grid):
    """Solve the closed lower triangle, remediate, reflect across the diagonal."""
    m = grid.m
    g = grid.points
    a0, ok, _ = _solve_nodes(mo_lower)
    values = np.zeros((m, m))
    rows, cols = np.tril_indices(m)
    values[rows, cols] = a0[rows, cols]
    n_singular = 0
    bad = np.argwhere(np.tril(~ok))
    for i, j in bad:
        values[i, j] = _remediate_node(pairs, spec, g[i], g[j])
        if not math.isfinite(values[i, j]):
            n_singular += 1
    upper = np.triu_indices(m, k=1)
    values[upper] = values.T[upper]  # exact bit-for-bit reflection
    return values, n_singular


def _finish_square(mo_full, ds, spec, grid):
    """Solve every node from the off-diagonal moments, remediate, average."""
    g = grid.points
    mo_sq = _offdiag_from_triangle(mo_full)
    a0, ok, _ = _solve_nodes(mo_sq)
    values = a0.copy()
    n_singular = 0
    bad = np.argwhere(~ok)
    if bad.size:
        off_pairs = build_pairs(ds, "off_diagonal")
        for i, j in bad:
            values[i, j] = _remediate_node(off_pairs, spec, g[i], g[j])
            if not math.isfinite(values[i, j]):
                n_singular += 1
    values = (values + values.T) / 2.0
    return values, n_singular


def estimate_surface_G(
    ds: SparseFunctionalDataset,
    spec: KernelSpec,
    grid: EvaluationGrid,
    method: str = "triangle",
    backend: str | None = None,
) -> SurfaceEstimate:
    """Estimate the second-moment surface G(s, t) = E[X(s) X(t)] on the grid.

    Parameters
    ----------
    ds : SparseFunctionalDataset
    spec : KernelSpec
        Kernel family and bandwidth h for the surface fit.
    grid : EvaluationGrid
    method : {"triangle", "square"}
        Triangle: fit strictly sub-diagonal cross-products on the closed
        lower triangle and reflect (exactly symmetric output). Square:
        the classical full-square baseline on all off-diagonal products,
        symmetrized by averaging.
    backend : str, optional
        Moment-accumulation backend ("numpy", "cython", None for auto).

    Returns
    -------
    SurfaceEstimate
        kind="second_moment". Nodes whose fit failed beyond the
        remediation ladder hold NaN; ``valid`` is False and
        ``n_singular_nodes`` counts the failed fit nodes.
    """
    if method not in ("triangle", "square"):
        raise ValueError(f"unknown method {method!r}; choose triangle or square")
    bk = get_backend(backend)
    pairs = build_pairs(ds, "lower_triangle_strict")
    if method == "triangle":
        mo = _moment_matrices(pairs, spec, grid, lower_only=True, backend=bk)
        values, n_singular = _finish_triangle(mo, pairs, spec, grid)
    else:
        mo = _moment_matrices(pairs, spec, grid, lower_only=False, backend=bk)
        values, n_singular = _finish_square(mo, ds, spec, grid)
    return SurfaceEstimate(
        grid=grid,
        values=values,
        bandwidth=spec.h,
        kind="second_moment",
        n_singular_nodes=n_singular,
        valid=n_singular == 0,
    )


def estimate_both_surfaces(
    ds: SparseFunctionalDataset,
    spec: KernelSpec,
    grid: EvaluationGrid,
    backend: str | None = None,
) -> dict[str, SurfaceEstimate]:
    """Triangle and square surfaces from one shared moment pass.

    Bitwise identical to two separate :func:`estimate_surface_G` calls;
    the full-grid moment accumulation (the expensive part) is done once.
    """
    bk = get_backend(backend)
    pairs = build_pairs(ds, "lower_triangle_strict")
    mo_full = _moment_matrices(pairs, spec, grid, lower_only=False, backend=bk)
    tri_values, tri_bad = _finish_triangle(mo_full.map(np.tril), pairs, spec, grid)
    sq_values, sq_bad = _finish_square(mo_full, ds, spec, grid)
    return {
        "triangle": SurfaceEstimate(
            grid=grid, values=tri_values, bandwidth=spec.h, kind="second_moment",
            n_singular_nodes=tri_bad, valid=tri_bad == 0,
        ),
        "square": SurfaceEstimate(
            grid=grid, values=sq_values, bandwidth=spec.h, kind="second_moment",
            n_singular_nodes=sq_bad, valid=sq_bad == 0,
        ),
    }


# ---------------------------------------------------------------------------
# 1D local-linear smoother (mean and squared-observation curves)
# ---------------------------------------------------------------------------


def _curve_points(ds):
    """All observations flattened, with curve-equal weights 1 / (n r_i)."""
    x = np.concatenate([c.times for c in ds.curves])
    y = np.concatenate([c.values for c in ds.curves])
    w = np.concatenate([np.full(c.r, 1.0 / (ds.n * c.r)) for c in ds.curves])
    return x, y, w


def _resolve_kernel(spec: KernelSpec, h: float) -> KernelSpec:
    # Same family at another bandwidth; sigma_n follows the schedule unless
    # the caller's spec already carries this exact bandwidth.
    if spec.h == h:
        return spec
    return KernelSpec(family=spec.family, h=h)


def _fit_curve_1d(x, y, w, kspec, grid):
    """Vectorized local-linear fit at every grid point, with remediation."""
    g = grid.points
    h = kspec.h
    dx = x[None, :] - g[:, None]
    wk = eval_kernel(kspec, dx / h) * w
    wdx = wk * dx
    a0 = wk.sum(axis=1)
    a1 = wdx.sum(axis=1)
    a2 = (wdx * dx).sum(axis=1)
    s0 = wk @ y
    s1 = wdx @ y
    with np.errstate(divide="ignore", invalid="ignore"):
        det = a0 * a2 - a1 * a1
        fitted = (s0 * a2 - s1 * a1) / det
        d2 = det / a0
    trace = a0 + a2
    pivot_min = np.minimum(a0, d2)
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(fitted) & (trace > 0.0) & (pivot_min > PIVOT_RTOL * trace)
    n_singular = 0
    for i in np.nonzero(~ok)[0]:
        fitted[i] = _remediate_curve_node(x, y, w, kspec, g[i])
        if not math.isfinite(fitted[i]):
            n_singular += 1
    return fitted, n_singular


def _curve_node_sums(x, y, w, kspec, s, h):
    dx = x - s
    wk = eval_kernel(kspec, dx / h) * w
    wdx = wk * dx
    return wk.sum(), wdx.sum(), wdx @ dx, wk @ y, wdx @ y


def _remediate_curve_node(x, y, w, kspec, s) -> float:
    def attempt(h, ridge):
        a0, a1, a2, s0, s1 = _curve_node_sums(x, y, w, kspec, s, h)
        trace = a0 + a2
        if ridge:
            if not trace > 0.0:
                return None
            a0 = a0 + RIDGE_SCALE * trace
            a2 = a2 + RIDGE_SCALE * trace
            trace = a0 + a2
        det = a0 * a2 - a1 * a1
        with np.errstate(divide="ignore", invalid="ignore"):
            pivot_min = min(a0, det / a0) if a0 > 0 else float("-inf")
        if trace > 0.0 and pivot_min > PIVOT_RTOL * trace:
            return float((s0 * a2 - s1 * a1) / det)
        return None

    value = attempt(kspec.h, ridge=True)
    if value is not None:
        return value
    for k in range(1, MAX_H_DOUBLINGS + 1):
        for ridge in (False, True):
            value = attempt(kspec.h * 2.0**k, ridge)
            if value is not None:
                return value
    return float("nan")


def estimate_mean(
    ds: SparseFunctionalDataset,
    spec: KernelSpec,
    h_mu: float,
    grid: EvaluationGrid,
) -> SurfaceEstimate:
    """Local-linear mean estimate mu(s) at every grid point.

    Uses curve-equal weights 1 / (n r_i); the fitted value is the
    intercept (S0 A2 - S1 A1) / (A0 A2 - A1^2) of the kernel-weighted
    moments. Degenerate nodes run the same remediation ladder as the
    surface smoother and end as NaN if nothing helps.
    """
    check = validate_dataset(ds)
    if not check.ok:
        raise ValueError("invalid dataset:\n" + "\n".join(check.violations))
    kspec = _resolve_kernel(spec, float(h_mu))
    x, y, w = _curve_points(ds)
    fitted, n_singular = _fit_curve_1d(x, y, w, kspec, grid)
    return SurfaceEstimate(
        grid=grid,
        values=fitted,
        bandwidth=kspec.h,
        kind="mean",
        n_singular_nodes=n_singular,
        valid=n_singular == 0,
    )


def estimate_covariance(
    ds: SparseFunctionalDataset,
    spec: KernelSpec,
    grid: EvaluationGrid,
    method: str = "triangle",
    h_mu: float | None = None,
    backend: str | None = None,
) -> SurfaceEstimate:
    """Covariance estimate C(s, t) = G(s, t) - mu(s) mu(t) on the grid.

    Symmetry of G and of the outer product make the output exactly
    symmetric. ``h_mu`` defaults to the surface bandwidth ``spec.h``.
    """
    surface = estimate_surface_G(ds, spec, grid, method=method, backend=backend)
    mu = estimate_mean(ds, spec, spec.h if h_mu is None else h_mu, grid)
    values = surface.values - np.outer(mu.values, mu.values)
    n_singular = surface.n_singular_nodes + mu.n_singular_nodes
    return SurfaceEstimate(
        grid=grid,
        values=values,
        bandwidth=spec.h,
        kind="covariance",
        n_singular_nodes=n_singular,
        valid=surface.valid and mu.valid,
    )


def estimate_noise_variance(
    ds: SparseFunctionalDataset,
    spec: KernelSpec,
    grid: EvaluationGrid,
    g_hat: SurfaceEstimate,
    h_mu: float | None = None,
) -> float:
    """Measurement-noise standard deviation from the diagonal gap.

    The squared observations have conditional mean G(t, t) + sigma^2, so
    sigma^2 is recovered as the integral over [0,1] (trapezoid rule on
    the grid) of a 1D local-linear smooth of {(T_ij, Y_ij^2)} minus the
    fitted second-moment diagonal, clamped at zero.

    Returns NaN when the smoothers involved left non-finite nodes.
    """
    if g_hat.kind != "second_moment":
        raise ValueError(f"g_hat must be a second-moment surface, got {g_hat.kind!r}")
    if not np.array_equal(g_hat.grid.points, grid.points):
        raise ValueError("g_hat was estimated on a different grid")
    check = validate_dataset(ds)
    if not check.ok:
        raise ValueError("invalid dataset:\n" + "\n".join(check.violations))
    kspec = _resolve_kernel(spec, spec.h if h_mu is None else float(h_mu))
    x, y, w = _curve_points(ds)
    v_hat, _ = _fit_curve_1d(x, y * y, w, kspec, grid)
    integrand = v_hat - np.diagonal(g_hat.values)
    sigma_sq = float(np.trapezoid(integrand, grid.points))
    if not math.isfinite(sigma_sq):
        return float("nan")
    return math.sqrt(max(0.0, sigma_sq))


# ---------------------------------------------------------------------------
# Bandwidth selection
# ---------------------------------------------------------------------------


def default_bandwidth(n: int, grid_m: int, r_bar: float) -> float:
    """Rate-driven default h = (log n / n)^{1/4}, clamped to sane limits.

    The floor max(1/M, 1/r_bar) keeps at least a grid cell and an
    average inter-observation gap inside the window; the cap is 0.5.
    """
    n = max(int(n), 1)
    raw = (math.log(n) / n) ** 0.25 if n >= 2 else 0.0
    floor = max(1.0 / grid_m, 1.0 / max(r_bar, 1.0))
    return float(min(max(raw, floor), 0.5))


def select_bandwidth_cv(
    ds: SparseFunctionalDataset,
    grid: EvaluationGrid,
    family: str = "exp_sequence",
    n_folds: int = 5,
    n_candidates: int = 10,
    seed: int = 0,
    backend: str | None = None,
) -> float:
    """Curve-wise K-fold cross-validation over a log-spaced bandwidth grid.

    For each candidate h the triangle surface is fitted on the training
    curves and scored by the weighted squared prediction error of the
    held-out raw products, predicted by bilinear interpolation of the
    fitted surface. Ties resolve to the smaller bandwidth. This refits
    n_folds * n_candidates surfaces, so it is an optional, offline
    selector rather than a default.
    """
    check = validate_dataset(ds)
    if not check.ok:
        raise ValueError("invalid dataset:\n" + "\n".join(check.violations))
    if ds.n < 2:
        raise ValueError("cross-validation needs at least 2 curves")
    n_folds = max(2, min(int(n_folds), ds.n))
    floor = max(1.0 / grid.m, 1.0 / max(ds.r_bar, 1.0))
    lo = min(max(floor, 1e-3), 0.45)
    candidates = np.geomspace(lo, 0.5, int(n_candidates))
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(ds.n), n_folds)
    g = grid.points
    scores = np.zeros(candidates.shape[0])
    for fold in folds:
        held = set(int(i) for i in fold)
        train = SparseFunctionalDataset(
            curves=tuple(c for i, c in enumerate(ds.curves) if i not in held)
        )
        test = SparseFunctionalDataset(
            curves=tuple(c for i, c in enumerate(ds.curves) if i in held)
        )
        test_pairs = build_pairs(test, "lower_triangle_strict")
        points = np.column_stack([test_pairs.u, test_pairs.v])
        for ih, h in enumerate(candidates):
            spec = KernelSpec(family=family, h=float(h))
            surface = estimate_surface_G(train, spec, grid, "triangle", backend)
            if not surface.valid:
                scores[ih] = np.inf
                continue
            interp = RegularGridInterpolator((g, g), surface.values, method="linear")
            resid = test_pairs.product - interp(points)
            scores[ih] += float(np.sum(test_pairs.weight * resid * resid))
    return float(candidates[int(np.argmin(scores))])
