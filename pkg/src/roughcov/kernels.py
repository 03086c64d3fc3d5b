"""Kernel families for the local planar smoothers.

The sequence families shrink the scale sigma_n with the bandwidth so the
kernel mass at |u| >= 1 stays below h^4, which keeps the bias of the
second-moment smoother at the local-linear rate while the support stays
the whole real line. Everywhere-positive kernels also guarantee the
weighted design never degenerates just because a window is empty, which
is the failure mode of compactly supported kernels under sparse designs
(epanechnikov_reference exists to demonstrate exactly that).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FAMILIES",
    "KernelSpec",
    "eval_kernel",
    "eval_product_kernel",
    "sigma_schedule",
]

FAMILIES = ("exp_sequence", "hybrid_sequence", "epanechnikov_reference")


def sigma_schedule(h: float) -> float:
    """Scale sigma_n guaranteeing kernel tail mass W(1) <= h^4.

    sigma_n = 1 / (4*ln(1/h) + 1), so exp(-1/sigma_n) = e^-1 * h^4 <= h^4.

    Parameters
    ----------
    h : float
        Bandwidth, strictly inside (0, 1).

    Returns
    -------
    float

    Raises
    ------
    ValueError
        If ``h`` is outside (0, 1); the schedule needs ln(1/h) > 0.
    """
    h = float(h)
    if not (0.0 < h < 1.0):
        raise ValueError(f"sigma_schedule requires 0 < h < 1, got {h}")
    return 1.0 / (4.0 * math.log(1.0 / h) + 1.0)


@dataclass(frozen=True)
class KernelSpec:
    """A univariate kernel family with its bandwidth and scale.

    For the sequence families ``sigma_n`` defaults to ``sigma_schedule(h)``;
    pass it explicitly to override (required when h == 1, where the
    schedule is undefined). ``epanechnikov_reference`` ignores sigma_n.
    """

    family: str
    h: float
    sigma_n: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {FAMILIES}"
            )
        h = float(self.h)
        if not (0.0 < h <= 1.0) or not math.isfinite(h):
            raise ValueError(f"bandwidth h must lie in (0, 1], got {h}")
        object.__setattr__(self, "h", h)
        sig = self.sigma_n
        if sig is None and self.family != "epanechnikov_reference":
            sig = sigma_schedule(h)
        if sig is not None:
            sig = float(sig)
            if not (sig > 0.0) or not math.isfinite(sig):
                raise ValueError(f"sigma_n must be positive, got {sig}")
        object.__setattr__(self, "sigma_n", sig)


def eval_kernel(spec: KernelSpec, u):
    """Evaluate the univariate kernel W(u); accepts scalars or arrays.

    exp_sequence:            exp(-|u| / sigma_n)
    hybrid_sequence:         exp(-|u|) for |u| < 1, exp(-|u| / sigma_n) else
    epanechnikov_reference:  0.75 * max(0, 1 - u^2)
    """
    u_arr = np.asarray(u, dtype=np.float64)
    if spec.family == "exp_sequence":
        out = np.exp(-np.abs(u_arr) / spec.sigma_n)
    elif spec.family == "hybrid_sequence":
        au = np.abs(u_arr)
        out = np.where(au < 1.0, np.exp(-au), np.exp(-au / spec.sigma_n))
    else:
        out = 0.75 * np.maximum(0.0, 1.0 - u_arr * u_arr)
    if np.isscalar(u) or np.ndim(u) == 0:
        return float(out)
    return out


def eval_product_kernel(spec: KernelSpec, u, v):
    """Product kernel K(u, v) = W(u) * W(v).

    Callers pass the bandwidth-scaled arguments u = (T - s)/h and
    v = (T' - t)/h; the bandwidth matrix diag(h^2, h^2) lives there.
    """
    return eval_kernel(spec, u) * eval_kernel(spec, v)
