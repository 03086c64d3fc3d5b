"""Monte Carlo experiment harness for the surface estimators.

Two canned study designs mirror the simulation settings used throughout
the package: ``example1_bm`` (standard Brownian motion, zero mean, rough
paths) and ``example2_smooth`` (a smooth rank-3 process with a quadratic
mean), plus ``custom`` for user-supplied process specs. Each replication
draws a fresh design, latent paths and noise, fits the requested
estimators, and records Hilbert-Schmidt error against the true
covariance, the estimated noise level, and eigenvalue/eigenfunction
errors for the leading components.

Reproducibility: replication rho uses rep_seed = base_seed XOR rho, and
three independent substreams (design, paths, noise) are derived from it
via numpy's SeedSequence. Reports serialize with sorted keys and no
timestamps, so identical configs produce byte-identical JSON.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import EvaluationGrid, NoiseModel, NumericalError, SurfaceEstimate, make_grid
from .kernels import KernelSpec
from .simulate import (
    DesignSpec,
    ProcessSpec,
    add_noise,
    analytic_covariance,
    analytic_mean,
    sample_design,
    simulate_paths,
)
from .smoothers import (
    default_bandwidth,
    estimate_both_surfaces,
    estimate_mean,
    estimate_noise_variance,
    estimate_surface_G,
)
from .spectral import align_signs, eigendecompose, hs_distance

__all__ = [
    "EXAMPLES",
    "ExperimentConfig",
    "ExperimentReport",
    "TruthModel",
    "build_truth",
    "rate_study",
    "run_experiment",
]

EXAMPLES = ("example1_bm", "example2_smooth", "custom")

N_EIGENFUNCTIONS_CHECKED = 4  # leading eigenfunction errors reported per record


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one Monte Carlo study.

    ``h_surface`` and ``h_mean`` default to the rate-driven bandwidth
    (log n / n)^{1/4} when None. ``n_eigen`` is the number of eigenpairs
    extracted per replication; it defaults to 20 (example1, custom) or
    17 (example2) and is clamped to the grid size.
    """

    example: str = "example1_bm"
    n: int = 100
    r: int = 50
    replications: int = 100
    sigma_noise: float = 0.2
    grid_size: int = 51
    kernel_family: str = "exp_sequence"
    kernel_sigma: float | None = None
    h_surface: float | None = None
    h_mean: float | None = None
    methods: tuple = ("triangle", "square")
    base_seed: int = 0
    n_eigen: int | None = None
    process: ProcessSpec | None = None

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example!r}; choose from {EXAMPLES}")
        if self.example == "custom" and self.process is None:
            raise ValueError("custom experiments need an explicit process spec")
        if self.n < 1 or self.r < 2 or self.replications < 1:
            raise ValueError("need n >= 1, r >= 2, replications >= 1")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be nonnegative")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods or any(m not in ("triangle", "square") for m in self.methods):
            raise ValueError("methods must be a nonempty subset of {'triangle', 'square'}")

    @property
    def process_spec(self) -> ProcessSpec:
        if self.example == "example1_bm":
            return ProcessSpec(kind="brownian_motion")
        if self.example == "example2_smooth":
            return ProcessSpec(kind="example2")
        return self.process

    @property
    def k_eigen(self) -> int:
        if self.n_eigen is not None:
            k = self.n_eigen
        elif self.example == "example2_smooth":
            k = 17
        else:
            k = 20
        return max(1, min(int(k), self.grid_size))


@dataclass(frozen=True)
class TruthModel:
    """Ground truth evaluated on the grid, for error metrics."""

    mean_values: np.ndarray
    cov_values: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # M x (up to N_EIGENFUNCTIONS_CHECKED)
    n_identifiable: int


def _discrete_truth_eigs(cov_values, grid, k):
    """Leading eigenpairs of the true surface plus an identifiability count.

    An eigenfunction error is meaningful only while the true eigenvalue
    is well separated from its neighbor and from zero; the count stops
    at the first violation.
    """
    # Custom covariance callables need not be bitwise symmetric; enforce it.
    sym = (cov_values + cov_values.T) / 2.0
    dummy = SurfaceEstimate(grid=grid, values=sym, bandwidth=None, kind="covariance")
    eig = eigendecompose(dummy, k)
    lam = eig.eigenvalues
    scale = max(abs(lam[0]), 1e-300)
    n_ident = 0
    for i in range(lam.shape[0]):
        gap = lam[i] - lam[i + 1] if i + 1 < lam.shape[0] else lam[i]
        if lam[i] > 1e-8 * scale and gap > 1e-8 * scale:
            n_ident += 1
        else:
            break
    return eig, n_ident


def build_truth(config: ExperimentConfig, grid: EvaluationGrid) -> TruthModel:
    """True mean, covariance surface and leading eigenstructure on the grid.

    Brownian motion uses the analytic eigenpairs
    lambda_k = 4 / ((2k-1)^2 pi^2), psi_k(t) = sqrt(2) sin((k - 1/2) pi t);
    the other examples use the discrete eigendecomposition of the true
    surface on the grid.
    """
    g = grid.points
    proc = config.process_spec
    mean_values = analytic_mean(proc, g)
    cov_values = analytic_covariance(proc, g[:, None], g[None, :])
    k_fun = min(N_EIGENFUNCTIONS_CHECKED, grid.m)
    if config.example == "example1_bm":
        ks = np.arange(1, config.k_eigen + 1)
        eigenvalues = 4.0 / ((2.0 * ks - 1.0) ** 2 * math.pi**2)
        funs = np.column_stack(
            [np.sqrt(2.0) * np.sin((k - 0.5) * math.pi * g) for k in range(1, k_fun + 1)]
        )
        n_ident = k_fun
    else:
        eig, n_ident = _discrete_truth_eigs(cov_values, grid, config.k_eigen)
        eigenvalues = eig.eigenvalues
        funs = eig.eigenfunctions[:, :k_fun]
    return TruthModel(
        mean_values=mean_values,
        cov_values=cov_values,
        eigenvalues=eigenvalues,
        eigenfunctions=funs,
        n_identifiable=min(n_ident, k_fun),
    )


def _sanitize(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


@dataclass(frozen=True)
class ExperimentReport:
    """Everything one study produced: config echo, truth, records, summary."""

    config: dict
    truth: dict
    records: tuple
    failures: tuple
    summary: dict

    def to_json(self, indent: int = 2) -> str:
        payload = {
            "config": self.config,
            "truth": self.truth,
            "records": list(self.records),
            "failures": list(self.failures),
            "summary": self.summary,
        }
        return json.dumps(_sanitize(payload), sort_keys=True, indent=indent)


def _config_echo(config: ExperimentConfig) -> dict:
    echo = dataclasses.asdict(config)
    proc = echo.pop("process", None)
    if proc is not None:
        # Callables in custom specs are not serializable; keep the scalars.
        echo["process"] = {
            "kind": proc["kind"],
            "beta": proc["beta"],
            "rho": proc["rho"],
            "has_custom_covariance": proc["covariance"] is not None,
            "has_custom_mean": proc["mean"] is not None,
        }
    else:
        echo["process"] = None
    echo["methods"] = list(config.methods)
    return echo


def _replication_seeds(base_seed: int, replication: int):
    rep_seed = int(base_seed) ^ int(replication)
    design_seed, path_seed, noise_seed = np.random.SeedSequence(rep_seed).generate_state(
        3, dtype=np.uint64
    )
    return rep_seed, int(design_seed), int(path_seed), int(noise_seed)


def _eigen_metrics(cov_surface, truth, k_eigen, grid):
    """Eigenvalues plus absolute-eigenvalue and L2-eigenfunction errors."""
    eig = eigendecompose(cov_surface, k_eigen)
    aligned = align_signs(eig, truth.eigenfunctions)
    eigenvalues = aligned.eigenvalues
    n_val = min(N_EIGENFUNCTIONS_CHECKED, k_eigen, truth.eigenvalues.shape[0])
    value_errors = [
        float(abs(eigenvalues[k] - truth.eigenvalues[k])) for k in range(n_val)
    ]
    fun_errors = []
    delta = grid.spacing
    for k in range(min(N_EIGENFUNCTIONS_CHECKED, k_eigen)):
        if k >= truth.n_identifiable or aligned.negative[k]:
            fun_errors.append(None)
            continue
        diff = aligned.eigenfunctions[:, k] - truth.eigenfunctions[:, k]
        fun_errors.append(float(np.sqrt(delta * np.sum(diff * diff))))
    return {
        "eigenvalues": [float(v) for v in eigenvalues],
        "eigenvalue_errors": value_errors,
        "eigenfunction_errors": fun_errors,
        "n_negative_eigenvalues": int(np.sum(eig.negative)),
    }


def _quantile_block(values):
    finite = np.array([v for v in values if v is not None and math.isfinite(v)])
    if finite.size == 0:
        return {"median": None, "q25": None, "q75": None, "n": 0}
    return {
        "median": float(np.median(finite)),
        "q25": float(np.quantile(finite, 0.25)),
        "q75": float(np.quantile(finite, 0.75)),
        "n": int(finite.size),
    }


def _summarize(records, methods):
    summary = {}
    for method in methods:
        rows = [r for r in records if r["method"] == method]
        block = {
            "hs_error": _quantile_block([r["hs_error"] for r in rows]),
            "sigma_hat": _quantile_block([r["sigma_hat"] for r in rows]),
            "n_records": len(rows),
            "n_invalid": sum(1 for r in rows if not r["valid"]),
            "mean_singular_nodes": (
                float(np.mean([r["n_singular_nodes"] for r in rows])) if rows else None
            ),
        }
        for name in ("eigenvalue_errors", "eigenfunction_errors"):
            per_k = []
            for k in range(N_EIGENFUNCTIONS_CHECKED):
                vals = [
                    r[name][k]
                    for r in rows
                    if r[name] is not None and k < len(r[name]) and r[name][k] is not None
                ]
                per_k.append(_quantile_block(vals)["median"])
            block[f"median_{name}"] = per_k
        summary[method] = block
    return summary


def run_experiment(
    config: ExperimentConfig,
    backend: str | None = None,
    surface_sink=None,
) -> ExperimentReport:
    """Run every replication of a study and summarize the results.

    A replication that raises (numerically impossible simulation or a
    fit error that escapes remediation) is recorded under ``failures``
    and skipped; its index and error message are preserved so callers
    can decide whether to treat the study as failed.

    ``surface_sink``, if given, is called as
    ``surface_sink(replication, method, grid, cov_values)`` for every
    valid fitted covariance surface (used by the CLI to dump surfaces).
    """
    grid = make_grid(config.grid_size)
    truth = build_truth(config, grid)
    proc = config.process_spec
    # The design size is fixed, so bandwidths are the same in every
    # replication; building the kernel here also fails fast on bad h.
    h_surface = (
        config.h_surface
        if config.h_surface is not None
        else default_bandwidth(config.n, grid.m, float(config.r))
    )
    h_mean = config.h_mean if config.h_mean is not None else h_surface
    spec = KernelSpec(
        family=config.kernel_family, h=float(h_surface), sigma_n=config.kernel_sigma
    )
    records = []
    failures = []
    for rho in range(config.replications):
        rep_seed, design_seed, path_seed, noise_seed = _replication_seeds(
            config.base_seed, rho
        )
        try:
            records.extend(
                _run_one(
                    config, grid, truth, proc, rho, rep_seed,
                    design_seed, path_seed, noise_seed, spec, float(h_mean), backend,
                    surface_sink,
                )
            )
        except (NumericalError, ValueError, np.linalg.LinAlgError) as exc:
            failures.append(
                {"replication": rho, "seed": rep_seed, "error": f"{type(exc).__name__}: {exc}"}
            )
    summary = _summarize(records, config.methods)
    summary["n_replications"] = config.replications
    summary["n_failed"] = len(failures)
    truth_echo = {
        "eigenvalues": [float(v) for v in truth.eigenvalues[:N_EIGENFUNCTIONS_CHECKED]],
        "n_identifiable": truth.n_identifiable,
    }
    return ExperimentReport(
        config=_config_echo(config),
        truth=truth_echo,
        records=tuple(records),
        failures=tuple(failures),
        summary=summary,
    )


def _run_one(
    config, grid, truth, proc, rho, rep_seed, design_seed, path_seed, noise_seed,
    spec, h_mean, backend, surface_sink=None,
):
    design = sample_design(
        DesignSpec(n=config.n, r=config.r, seed=design_seed)
    )
    latent = simulate_paths(proc, design, seed=path_seed)
    ds = add_noise(design, latent, NoiseModel(std_dev=config.sigma_noise), seed=noise_seed)
    if len(config.methods) == 2:
        surfaces = estimate_both_surfaces(ds, spec, grid, backend=backend)
    else:
        only = config.methods[0]
        surfaces = {only: estimate_surface_G(ds, spec, grid, only, backend=backend)}
    mu = estimate_mean(ds, spec, h_mean, grid)
    out = []
    for method in config.methods:
        g_hat = surfaces[method]
        record = {
            "replication": rho,
            "seed": rep_seed,
            "method": method,
            "h_surface": float(spec.h),
            "h_mean": float(h_mean),
            "n_singular_nodes": int(g_hat.n_singular_nodes + mu.n_singular_nodes),
            "valid": bool(g_hat.valid and mu.valid),
            "hs_error": None,
            "sigma_hat": None,
            "eigenvalues": None,
            "eigenvalue_errors": None,
            "eigenfunction_errors": None,
            "n_negative_eigenvalues": None,
        }
        if record["valid"]:
            cov_values = g_hat.values - np.outer(mu.values, mu.values)
            cov_surface = SurfaceEstimate(
                grid=grid, values=cov_values, bandwidth=spec.h, kind="covariance"
            )
            record["hs_error"] = hs_distance(cov_values, truth.cov_values, grid)
            sigma_hat = estimate_noise_variance(ds, spec, grid, g_hat, h_mu=h_mean)
            record["sigma_hat"] = sigma_hat if math.isfinite(sigma_hat) else None
            record.update(_eigen_metrics(cov_surface, truth, config.k_eigen, grid))
            if surface_sink is not None:
                surface_sink(rho, method, grid, cov_values)
        out.append(record)
    return out


def rate_study(
    config: ExperimentConfig, n_values, backend: str | None = None
) -> list[dict]:
    """Median triangle HS error across sample sizes, with rate ratios.

    The ratio column divides the median error by sqrt(log n / n); under
    the advertised convergence rate it stays bounded as n grows.
    """
    if "triangle" not in config.methods:
        raise ValueError("rate_study tracks the triangle estimator; add it to methods")
    rows = []
    for n in n_values:
        sub = dataclasses.replace(config, n=int(n))
        report = run_experiment(sub, backend=backend)
        median_hs = report.summary["triangle"]["hs_error"]["median"]
        h_used = (
            sub.h_surface
            if sub.h_surface is not None
            else default_bandwidth(sub.n, sub.grid_size, float(sub.r))
        )
        rate = math.sqrt(math.log(n) / n)
        rows.append(
            {
                "n": int(n),
                "h": float(h_used),
                "median_hs": median_hs,
                "rate_ratio": None if median_hs is None else float(median_hs / rate),
            }
        )
    return rows
