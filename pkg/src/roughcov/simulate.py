"""Sampling designs, latent processes with known covariances, and noise.

Every simulator is a deterministic function of (spec, seed) and draws
Gaussian finite-dimensional laws exactly: Brownian motion through
independent increments across the sorted design times, the OU process
through its exact autoregressive recursion started from X(0) = 0,
geometric Brownian motion as exp of a Brownian path, and the remaining
Gaussian families through a Cholesky factor of the analytic covariance
(with a small diagonal jitter ladder for factorizations that sit on the
positive-semidefinite boundary). No discretization scheme is involved,
so simulated paths match the analytic covariances to Monte-Carlo error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    Curve,
    NoiseModel,
    NumericalError,
    SparseFunctionalDataset,
)

__all__ = [
    "PROCESS_KINDS",
    "DesignSpec",
    "ProcessSpec",
    "add_noise",
    "analytic_covariance",
    "analytic_mean",
    "eval_g3",
    "example2_curve",
    "example2_mean",
    "sample_design",
    "simulate_paths",
]

PROCESS_KINDS = (
    "brownian_motion",
    "brownian_bridge",
    "ornstein_uhlenbeck",
    "geometric_bm",
    "matern_half",
    "example2",
    "custom_covariance",
)

EXAMPLE2_SCORE_VARIANCE = 0.2


@dataclass(frozen=True)
class DesignSpec:
    """Random observation-time design: r i.i.d. Uniform[0,1] times per curve, sorted."""

    n: int
    r: int
    law: str = "uniform_iid"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.r < 2:
            raise ValueError(f"r must be >= 2, got {self.r}")
        if self.law != "uniform_iid":
            raise ValueError(f"unknown design law {self.law!r}")


@dataclass(frozen=True)
class ProcessSpec:
    """A latent process from the catalog, with its parameters.

    ``beta`` applies to ornstein_uhlenbeck, ``rho`` to matern_half.
    ``custom_covariance`` requires a vectorizable ``covariance(s, t)``
    callable and accepts an optional ``mean(s)`` callable.
    """

    kind: str
    beta: float = 1.0
    rho: float = 5.0
    covariance: Callable | None = None
    mean: Callable | None = None

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ValueError(
                f"unknown process kind {self.kind!r}; choose from {PROCESS_KINDS}"
            )
        if self.kind == "ornstein_uhlenbeck" and not self.beta > 0:
            raise ValueError(f"ornstein_uhlenbeck needs beta > 0, got {self.beta}")
        if self.kind == "matern_half" and not self.rho > 0:
            raise ValueError(f"matern_half needs rho > 0, got {self.rho}")
        if self.kind == "custom_covariance" and self.covariance is None:
            raise ValueError("custom_covariance needs a covariance callable")


def sample_design(spec: DesignSpec) -> list[np.ndarray]:
    """Draw the observation times: n vectors of r sorted Uniform[0,1] values.

    Deterministic given ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    times = rng.uniform(0.0, 1.0, size=(spec.n, spec.r))
    times.sort(axis=1)
    return [times[i] for i in range(spec.n)]


def eval_g3(s):
    """Piecewise cubic basis function with knots at 1/4, 1/2, 3/4.

    g3(s) = s^3 - 4(s-1/4)_+^3 + 6(s-1/2)_+^3 - 4(s-3/4)_+^3, which is C^2
    on [0,1] and vanishes at both endpoints.

    Raises
    ------
    ValueError
        If any argument lies outside [0, 1].
    """
    arr = np.asarray(s, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("eval_g3 is defined on [0, 1]")
    out = arr**3
    for knot, coef in ((0.25, -4.0), (0.5, 6.0), (0.75, -4.0)):
        out = out + coef * np.maximum(arr - knot, 0.0) ** 3
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out)
    return out


def example2_mean(s):
    """Mean function 5(s - 0.6)^2 of the smooth example process."""
    arr = np.asarray(s, dtype=np.float64)
    out = 5.0 * (arr - 0.6) ** 2
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out)
    return out


def _example2_basis(s) -> np.ndarray:
    """Basis g_1 = 1, g_2 = sin(2*pi*s), g_3 = eval_g3, stacked as rows."""
    arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    return np.stack(
        [np.ones_like(arr), np.sin(2.0 * np.pi * arr), eval_g3(arr)], axis=0
    )


def example2_curve(times, z) -> np.ndarray:
    """One smooth-example path: mean(t) + sum_j z_j g_j(t) for given scores z."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (3,):
        raise ValueError(f"expected 3 scores, got shape {z.shape}")
    return example2_mean(np.asarray(times, float)) + z @ _example2_basis(times)


def analytic_covariance(proc: ProcessSpec, s, t):
    """Ground-truth covariance C(s, t) of the process; broadcasts over arrays."""
    s_arr = np.asarray(s, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    kind = proc.kind
    if kind == "brownian_motion":
        out = np.minimum(s_arr, t_arr)
    elif kind == "brownian_bridge":
        out = np.minimum(s_arr, t_arr) - s_arr * t_arr
    elif kind == "ornstein_uhlenbeck":
        b = proc.beta
        mn = np.minimum(s_arr, t_arr)
        out = np.exp(-b * (s_arr + t_arr)) * (np.exp(2.0 * b * mn) - 1.0) / (2.0 * b)
    elif kind == "geometric_bm":
        mn = np.minimum(s_arr, t_arr)
        out = np.exp((s_arr + t_arr) / 2.0) * (np.exp(mn) - 1.0)
    elif kind == "matern_half":
        out = np.exp(-np.abs(s_arr - t_arr) / proc.rho)
    elif kind == "example2":
        bs, bt = np.broadcast_arrays(s_arr, t_arr)
        gs = _example2_basis(bs.ravel())
        gt = _example2_basis(bt.ravel())
        prod = EXAMPLE2_SCORE_VARIANCE * np.einsum("ki,ki->i", gs, gt)
        out = prod.reshape(bs.shape)
    else:  # custom_covariance
        out = np.asarray(proc.covariance(s_arr, t_arr), dtype=np.float64)
    if np.ndim(s) == 0 and np.ndim(t) == 0:
        return float(out)
    return out


def analytic_mean(proc: ProcessSpec, s):
    """Ground-truth mean function of the process; broadcasts over arrays."""
    s_arr = np.asarray(s, dtype=np.float64)
    if proc.kind == "example2":
        out = example2_mean(s_arr)
    elif proc.kind == "geometric_bm":
        out = np.exp(s_arr / 2.0)
    elif proc.kind == "custom_covariance" and proc.mean is not None:
        out = np.asarray(proc.mean(s_arr), dtype=np.float64)
    else:
        out = np.zeros_like(s_arr)
    if np.ndim(s) == 0:
        return float(out)
    return out


def _covariance_matrix(proc: ProcessSpec, times: np.ndarray) -> np.ndarray:
    return analytic_covariance(proc, times[:, None], times[None, :])


def _cholesky_with_jitter(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding 1e-12/1e-10/1e-8 to the diagonal if needed."""
    jitters = (0.0, 1e-12, 1e-10, 1e-8)
    for jit in jitters:
        shifted = mat if jit == 0.0 else mat + jit * np.eye(mat.shape[0])
        try:
            return np.linalg.cholesky(shifted)
        except np.linalg.LinAlgError:
            continue
    min_eig = float(np.linalg.eigvalsh(mat).min())
    raise NumericalError(
        "Cholesky factorization failed after the diagonal jitter ladder "
        f"(1e-12, 1e-10, 1e-8): smallest eigenvalue is {min_eig:.3e}; "
        "the supplied covariance is not positive semidefinite"
    )


def _same_design(design: Sequence[np.ndarray]) -> bool:
    first = design[0]
    return all(
        d.shape == first.shape and np.array_equal(d, first) for d in design[1:]
    )


def _brownian_paths(design, rng) -> list[np.ndarray]:
    # Exact simulation: independent Gaussian increments across sorted times,
    # started from W(0) = 0.
    if _same_design(design):
        t = design[0]
        dt = np.diff(t, prepend=0.0)
        z = rng.standard_normal((len(design), t.shape[0]))
        paths = np.cumsum(z * np.sqrt(dt), axis=1)
        return [paths[i] for i in range(len(design))]
    out = []
    for t in design:
        dt = np.diff(t, prepend=0.0)
        z = rng.standard_normal(t.shape[0])
        out.append(np.cumsum(z * np.sqrt(dt)))
    return out


def _ou_paths(design, beta, rng) -> list[np.ndarray]:
    # Exact AR(1) recursion for the OU process dX = -beta X dt + dW, X(0) = 0:
    # X(t_1) ~ N(0, (1 - e^{-2 b t_1}) / (2b)),
    # X(t_{j+1}) = e^{-b d} X(t_j) + N(0, (1 - e^{-2 b d}) / (2b)), d = t_{j+1} - t_j.
    def marginal_var(dt):
        return (1.0 - np.exp(-2.0 * beta * dt)) / (2.0 * beta)

    if _same_design(design):
        t = design[0]
        n, r = len(design), t.shape[0]
        z = rng.standard_normal((n, r))
        x = np.empty((n, r))
        x[:, 0] = math.sqrt(marginal_var(t[0])) * z[:, 0]
        for j in range(1, r):
            d = t[j] - t[j - 1]
            x[:, j] = math.exp(-beta * d) * x[:, j - 1] + math.sqrt(
                marginal_var(d)
            ) * z[:, j]
        return [x[i] for i in range(n)]
    out = []
    for t in design:
        r = t.shape[0]
        z = rng.standard_normal(r)
        x = np.empty(r)
        x[0] = math.sqrt(marginal_var(t[0])) * z[0]
        for j in range(1, r):
            d = t[j] - t[j - 1]
            x[j] = math.exp(-beta * d) * x[j - 1] + math.sqrt(marginal_var(d)) * z[j]
        out.append(x)
    return out


def _cholesky_paths(proc, design, rng) -> list[np.ndarray]:
    if _same_design(design):
        t = design[0]
        factor = _cholesky_with_jitter(_covariance_matrix(proc, t))
        z = rng.standard_normal((len(design), t.shape[0]))
        paths = z @ factor.T
        return [paths[i] for i in range(len(design))]
    out = []
    for t in design:
        factor = _cholesky_with_jitter(_covariance_matrix(proc, t))
        out.append(factor @ rng.standard_normal(t.shape[0]))
    return out


def simulate_paths(proc: ProcessSpec, design: Sequence[np.ndarray], seed: int):
    """Draw latent path values X_i(T_ij) at the design times.

    Parameters
    ----------
    proc : ProcessSpec
    design : sequence of sorted time vectors (as from :func:`sample_design`)
    seed : int

    Returns
    -------
    list of ndarray
        One value vector per curve, aligned with ``design``.

    Raises
    ------
    NumericalError
        If a user-supplied custom covariance is not positive semidefinite
        (after the diagonal jitter ladder).
    """
    design = [np.asarray(t, dtype=np.float64) for t in design]
    rng = np.random.default_rng(seed)
    kind = proc.kind
    if kind == "brownian_motion":
        return _brownian_paths(design, rng)
    if kind == "geometric_bm":
        return [np.exp(w) for w in _brownian_paths(design, rng)]
    if kind == "ornstein_uhlenbeck":
        return _ou_paths(design, proc.beta, rng)
    if kind == "example2":
        scores = rng.normal(
            0.0, math.sqrt(EXAMPLE2_SCORE_VARIANCE), size=(len(design), 3)
        )
        return [example2_curve(t, scores[i]) for i, t in enumerate(design)]
    paths = _cholesky_paths(proc, design, rng)
    if kind == "custom_covariance" and proc.mean is not None:
        paths = [p + np.asarray(proc.mean(t), float) for p, t in zip(paths, design)]
    return paths


def add_noise(
    design: Sequence[np.ndarray],
    latent: Sequence[np.ndarray],
    noise: NoiseModel,
    seed: int = 0,
) -> SparseFunctionalDataset:
    """Form the observed dataset Y_ij = X_i(T_ij) + U_ij, U_ij iid N(0, sigma^2).

    With sigma = 0 the latent values are returned unchanged (no RNG draw).
    """
    if len(design) != len(latent):
        raise ValueError("design and latent values must have the same length")
    sigma = noise.std_dev
    rng = np.random.default_rng(seed) if sigma > 0.0 else None
    curves = []
    for t, x in zip(design, latent):
        x = np.asarray(x, dtype=np.float64)
        y = x if rng is None else x + sigma * rng.standard_normal(x.shape[0])
        curves.append(Curve(times=t, values=y))
    return SparseFunctionalDataset(curves=tuple(curves))
