"""Domain types, validation, grid construction, and dataset I/O.

All types are immutable after construction: numpy arrays are stored
C-contiguous with the writeable flag cleared, so instances are safe to
share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Curve",
    "EvaluationGrid",
    "NoiseModel",
    "NumericalError",
    "SingularFitError",
    "SparseFunctionalDataset",
    "SurfaceEstimate",
    "ValidationResult",
    "freeze_array",
    "make_grid",
    "read_dataset_csv",
    "validate_dataset",
    "write_dataset_csv",
]

SURFACE_KINDS = ("mean", "second_moment", "covariance")


class SingularFitError(RuntimeError):
    """A local weighted least-squares system is numerically singular."""


class NumericalError(RuntimeError):
    """A matrix factorization failed beyond remediation."""


def freeze_array(values, dtype=np.float64) -> np.ndarray:
    """Return a C-contiguous, read-only copy of ``values``."""
    arr = np.array(values, dtype=dtype, order="C", copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Curve:
    """One observed curve: sorted times in [0,1] and the values at them."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", freeze_array(self.times))
        object.__setattr__(self, "values", freeze_array(self.values))

    @property
    def r(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class SparseFunctionalDataset:
    """n curves, each observed at its own times with noisy values.

    Curves are stored ragged (per-curve arrays), not as a rectangular
    matrix, because the number of observations may vary across curves.
    Construction does not validate; use :func:`validate_dataset`.
    """

    curves: tuple[Curve, ...]

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))

    @property
    def n(self) -> int:
        return len(self.curves)

    @property
    def n_observations(self) -> int:
        return sum(c.r for c in self.curves)

    @property
    def r_bar(self) -> float:
        """Mean number of observations per curve."""
        return self.n_observations / max(self.n, 1)


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of dataset validation; violations are data, not exceptions."""

    ok: bool
    violations: tuple[str, ...] = ()


def validate_dataset(ds: SparseFunctionalDataset) -> ValidationResult:
    """Check the dataset invariants and report every violation found.

    Checks, per curve: times strictly increasing, times within [0,1],
    times/values of equal length, and at least two observations (pairs
    with k < j must exist). Also requires at least one curve.

    Parameters
    ----------
    ds : SparseFunctionalDataset

    Returns
    -------
    ValidationResult
        ``ok`` is True when no violation was found.
    """
    violations: list[str] = []
    if ds.n < 1:
        violations.append("dataset has no curves (n must be >= 1)")
    for i, curve in enumerate(ds.curves):
        t, y = curve.times, curve.values
        if t.shape[0] != y.shape[0]:
            violations.append(
                f"curve {i}: times and values have different lengths "
                f"({t.shape[0]} vs {y.shape[0]})"
            )
        if t.shape[0] < 2:
            violations.append(f"curve {i}: r < 2 (needs at least one pair)")
        if t.shape[0] >= 2 and not np.all(np.diff(t) > 0):
            violations.append(f"curve {i}: times not strictly increasing")
        if t.shape[0] and (t.min() < 0.0 or t.max() > 1.0):
            violations.append(f"curve {i}: times outside [0, 1]")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            violations.append(f"curve {i}: non-finite entries")
    return ValidationResult(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class EvaluationGrid:
    """Equispaced evaluation grid on [0,1] including both endpoints."""

    points: np.ndarray
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "points", freeze_array(self.points))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def m(self) -> int:
        return self.points.shape[0]


def make_grid(m: int) -> EvaluationGrid:
    """Build the equispaced grid 0 = t_1 < ... < t_M = 1.

    Parameters
    ----------
    m : int
        Number of grid points, at least 2.

    Returns
    -------
    EvaluationGrid
        Grid with spacing 1/(m-1); the endpoints are included so the
        smoothers' boundary behavior is exercised.

    Raises
    ------
    ValueError
        If ``m < 2``.
    """
    m = int(m)
    if m < 2:
        raise ValueError(f"grid needs at least 2 points, got {m}")
    return EvaluationGrid(points=np.linspace(0.0, 1.0, m), spacing=1.0 / (m - 1))


@dataclass(frozen=True)
class SurfaceEstimate:
    """A function estimate on a grid: mean vector or second-moment/covariance matrix.

    ``values`` is an (M,) vector for ``kind="mean"`` and an (M, M) matrix
    otherwise. Matrix kinds produced by the triangle estimator are exactly
    symmetric (bit-for-bit) by the reflection construction. Nodes where
    the local fit failed beyond remediation hold NaN; ``valid`` is False
    and ``n_singular_nodes`` counts them.
    """

    grid: EvaluationGrid
    values: np.ndarray
    bandwidth: float | None
    kind: str
    n_singular_nodes: int = 0
    valid: bool = True

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        object.__setattr__(self, "values", freeze_array(self.values))
        m = self.grid.m
        expected = (m,) if self.kind == "mean" else (m, m)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"(expected {expected} for kind {self.kind!r})"
            )


@dataclass(frozen=True)
class NoiseModel:
    """Additive i.i.d. Gaussian measurement noise with standard deviation sigma."""

    std_dev: float
    distribution: str = "gaussian"

    def __post_init__(self):
        sd = float(self.std_dev)
        if not np.isfinite(sd) or sd < 0.0:
            raise ValueError(f"noise std_dev must be finite and >= 0, got {sd}")
        object.__setattr__(self, "std_dev", sd)
        if self.distribution != "gaussian":
            raise ValueError(f"unsupported noise distribution {self.distribution!r}")


# ---------------------------------------------------------------------------
# Dataset file format: CSV with header `curve_id,time,value`, rows sorted by
# (curve_id, time). Readers reject unsorted rows within a curve and curve ids
# that reappear after a different id.
# ---------------------------------------------------------------------------

CSV_HEADER = ("curve_id", "time", "value")


def write_dataset_csv(ds: SparseFunctionalDataset, path) -> None:
    """Write the dataset in the canonical CSV format (curve ids 0..n-1)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i, curve in enumerate(ds.curves):
            for t, y in zip(curve.times, curve.values):
                writer.writerow((i, repr(float(t)), repr(float(y))))


def read_dataset_csv(path) -> SparseFunctionalDataset:
    """Read a dataset from the canonical CSV format.

    Raises
    ------
    ValueError
        On a malformed header, times out of order within a curve, or a
        curve id that reappears after the file moved on to another curve.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(
                f"expected CSV header {','.join(CSV_HEADER)!r}, got {header!r}"
            )
        times: dict[str, list[float]] = {}
        values: dict[str, list[float]] = {}
        order: list[str] = []
        current: str | None = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
            cid, t_str, y_str = row
            t, y = float(t_str), float(y_str)
            if cid != current:
                if cid in times:
                    raise ValueError(
                        f"line {lineno}: curve id {cid!r} reappears after another "
                        "curve; rows must be grouped by curve_id"
                    )
                times[cid] = []
                values[cid] = []
                order.append(cid)
                current = cid
            if times[cid] and t <= times[cid][-1]:
                raise ValueError(
                    f"line {lineno}: times not strictly increasing within "
                    f"curve {cid!r}"
                )
            times[cid].append(t)
            values[cid].append(y)
    curves = tuple(Curve(times=times[cid], values=values[cid]) for cid in order)
    return SparseFunctionalDataset(curves=curves)
