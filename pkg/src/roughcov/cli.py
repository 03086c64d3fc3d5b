"""Command line interface: simulate, estimate, spectrum, experiment.

File formats
------------
Datasets travel as long-format CSV (curve_id,time,value), see core.py.
Surfaces travel as an M x M matrix CSV whose header line is the grid
itself, row-major below it. Floats are written with repr so every file
round-trips bit for bit; rerunning a command on the same inputs yields
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from ._fast import available_backends
from .core import (
    EvaluationGrid,
    NoiseModel,
    SurfaceEstimate,
    make_grid,
    read_dataset_csv,
    write_dataset_csv,
)
from .experiments import ExperimentConfig, run_experiment
from .kernels import FAMILIES, KernelSpec
from .simulate import DesignSpec, ProcessSpec, add_noise, sample_design, simulate_paths
from .smoothers import (
    default_bandwidth,
    estimate_mean,
    estimate_noise_variance,
    estimate_surface_G,
)
from .spectral import eigendecompose

__all__ = ["main", "read_surface_csv", "write_surface_csv"]

_KERNEL_ALIASES = {
    "exp": "exp_sequence",
    "hybrid": "hybrid_sequence",
    "epanechnikov": "epanechnikov_reference",
}

_PROCESS_ALIASES = {
    "bm": "brownian_motion",
    "bridge": "brownian_bridge",
    "ou": "ornstein_uhlenbeck",
    "gbm": "geometric_bm",
    "matern": "matern_half",
    "example2": "example2",
}


def _kernel_family(name: str) -> str:
    resolved = _KERNEL_ALIASES.get(name, name)
    if resolved not in FAMILIES:
        choices = sorted(set(_KERNEL_ALIASES) | set(FAMILIES))
        raise ValueError(f"unknown kernel {name!r}; choose from {choices}")
    return resolved


def write_surface_csv(path, grid: EvaluationGrid, values: np.ndarray) -> None:
    """Matrix CSV with the grid as header line, rows in grid order."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (grid.m, grid.m):
        raise ValueError("surface shape does not match the grid")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(repr(float(x)) for x in grid.points) + "\n")
        for row in values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_surface_csv(path):
    """Inverse of write_surface_csv; returns (grid, values)."""
    with open(path, newline="") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty surface file")
    points = np.array([float(tok) for tok in lines[0].split(",")])
    m = points.shape[0]
    if m < 2:
        raise ValueError(f"{path}: grid needs at least 2 points")
    if len(lines) - 1 != m:
        raise ValueError(f"{path}: expected {m} matrix rows, found {len(lines) - 1}")
    values = np.empty((m, m))
    for i, line in enumerate(lines[1:]):
        row = [float(tok) for tok in line.split(",")]
        if len(row) != m:
            raise ValueError(f"{path}: row {i} has {len(row)} columns, expected {m}")
        values[i] = row
    spacing = float(points[-1] - points[0]) / (m - 1)
    if not np.allclose(np.diff(points), spacing):
        raise ValueError(f"{path}: grid is not uniform")
    grid = EvaluationGrid(points=points, spacing=spacing)
    return grid, values


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _meta_path(out: str) -> Path:
    return Path(out).with_suffix(".meta.json")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    kind = _PROCESS_ALIASES[args.process]
    proc = ProcessSpec(kind=kind, beta=args.beta, rho=args.rho)
    # Same substream convention as the experiment harness: one user seed
    # fans out into independent design, path and noise streams.
    seq = np.random.SeedSequence(args.seed).generate_state(3, dtype=np.uint64)
    design = sample_design(DesignSpec(n=args.n, r=args.r, seed=int(seq[0])))
    latent = simulate_paths(proc, design, seed=int(seq[1]))
    ds = add_noise(design, latent, NoiseModel(std_dev=args.sigma), seed=int(seq[2]))
    write_dataset_csv(ds, args.out)
    _write_json(
        _meta_path(args.out),
        {
            "process": kind,
            "beta": args.beta,
            "rho": args.rho,
            "n": args.n,
            "r": args.r,
            "sigma_noise": args.sigma,
            "seed": args.seed,
            "design_law": "uniform_iid",
        },
    )
    print(f"wrote {args.out} ({ds.n} curves, {ds.n_observations} observations)")
    return 0


def _cmd_estimate(args) -> int:
    ds = read_dataset_csv(args.input)
    grid = make_grid(args.grid_size)
    h_g = args.h_g if args.h_g is not None else default_bandwidth(ds.n, grid.m, ds.r_bar)
    h_mu = args.h_mu if args.h_mu is not None else h_g
    family = _kernel_family(args.kernel)
    spec = KernelSpec(family=family, h=float(h_g), sigma_n=args.sigma_n)
    surface = estimate_surface_G(ds, spec, grid, method=args.method, backend=args.backend)
    mu = estimate_mean(ds, spec, float(h_mu), grid)
    cov = SurfaceEstimate(
        grid=grid,
        values=surface.values - np.outer(mu.values, mu.values),
        bandwidth=spec.h,
        kind="covariance",
        n_singular_nodes=surface.n_singular_nodes + mu.n_singular_nodes,
        valid=surface.valid and mu.valid,
    )
    sigma_hat = estimate_noise_variance(ds, spec, grid, surface, h_mu=float(h_mu))
    prefix = args.out_prefix
    mean_path = f"{prefix}_mean.csv"
    cov_path = f"{prefix}_cov.csv"
    with open(mean_path, "w", newline="") as fh:
        fh.write("time,mean\n")
        for t, v in zip(grid.points, mu.values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
    write_surface_csv(cov_path, grid, cov.values)
    _write_json(
        f"{prefix}_meta.json",
        {
            "method": args.method,
            "kernel_family": family,
            "sigma_n": spec.sigma_n,
            "h_g": float(h_g),
            "h_mu": float(h_mu),
            "grid_size": grid.m,
            "n_curves": ds.n,
            "n_observations": ds.n_observations,
            "n_singular_nodes": int(cov.n_singular_nodes),
            "sigma_hat": None if not math.isfinite(sigma_hat) else sigma_hat,
            "valid": bool(cov.valid),
        },
    )
    print(f"wrote {mean_path}, {cov_path}, {prefix}_meta.json")
    if not cov.valid:
        print(
            f"warning: {cov.n_singular_nodes} singular fit nodes remain NaN",
            file=sys.stderr,
        )
    return 0


def _cmd_spectrum(args) -> int:
    grid, values = read_surface_csv(args.input)
    surface = SurfaceEstimate(grid=grid, values=values, bandwidth=None, kind="covariance")
    k = args.k if args.k is not None else min(20, grid.m)
    eig = eigendecompose(surface, k)
    _write_json(
        args.out,
        {
            "grid": [float(x) for x in grid.points],
            "eigenvalues": [float(v) for v in eig.eigenvalues],
            "eigenfunctions": [[float(v) for v in row] for row in eig.eigenfunctions],
            "negative": [bool(b) for b in eig.negative],
        },
    )
    print(f"wrote {args.out} ({k} eigenpairs)")
    return 0


def _load_experiment_config(path, fast: bool) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError("experiment config must be a JSON object")
    if "kernel_family" in raw:
        raw["kernel_family"] = _kernel_family(raw["kernel_family"])
    if "methods" in raw:
        raw["methods"] = tuple(raw["methods"])
    proc = raw.pop("process", None)
    if proc is not None:
        allowed = {k: proc[k] for k in ("kind", "beta", "rho") if k in proc}
        raw["process"] = ProcessSpec(**allowed)
    try:
        config = ExperimentConfig(**raw)
    except TypeError as exc:
        raise ValueError(f"bad experiment config: {exc}") from exc
    if fast:
        config = dataclasses.replace(config, replications=min(config.replications, 20))
    return config


def _cmd_experiment(args) -> int:
    config = _load_experiment_config(args.config, args.fast)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sink = None
    if args.dump_surfaces:
        surf_dir = out_dir / "surfaces"
        surf_dir.mkdir(exist_ok=True)

        def sink(rho, method, grid, values):
            write_surface_csv(surf_dir / f"rep{rho:04d}_{method}_cov.csv", grid, values)

    report = run_experiment(config, backend=args.backend, surface_sink=sink)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    _write_summary_csv(out_dir / "summary.csv", config, report)
    n_failed = report.summary["n_failed"]
    print(
        f"{config.example}: {config.replications} replications, "
        f"{n_failed} failed; wrote {out_dir / 'report.json'}"
    )
    return 2 if n_failed else 0


def _write_summary_csv(path, config, report) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "metric", "median", "q25", "q75", "n"])
        for method in config.methods:
            block = report.summary[method]
            for metric in ("hs_error", "sigma_hat"):
                q = block[metric]
                writer.writerow(
                    [method, metric, fmt(q["median"]), fmt(q["q25"]), fmt(q["q75"]), q["n"]]
                )
            for name in ("eigenvalue_errors", "eigenfunction_errors"):
                for kk, med in enumerate(block[f"median_{name}"], start=1):
                    writer.writerow([method, f"{name[:-1]}_{kk}", fmt(med), "", "", ""])


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughcov",
        description="Covariance estimation for sparsely observed rough functional data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic sparse dataset")
    p_sim.add_argument("--process", choices=sorted(_PROCESS_ALIASES), default="bm")
    p_sim.add_argument("--n", type=int, required=True, help="number of curves")
    p_sim.add_argument("--r", type=int, required=True, help="observations per curve")
    p_sim.add_argument("--sigma", type=float, default=0.2, help="noise std dev")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--beta", type=float, default=1.0, help="OU mean reversion")
    p_sim.add_argument("--rho", type=float, default=5.0, help="Matern inverse range")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="fit mean and covariance surfaces")
    p_est.add_argument("--in", dest="input", required=True, help="dataset CSV")
    p_est.add_argument("--method", choices=("triangle", "square"), default="triangle")
    p_est.add_argument("--kernel", default="exp", help="exp | hybrid | epanechnikov")
    p_est.add_argument("--h-g", type=float, default=None, help="surface bandwidth")
    p_est.add_argument("--h-mu", type=float, default=None, help="mean bandwidth")
    p_est.add_argument("--sigma-n", type=float, default=None, help="kernel scale override")
    p_est.add_argument("--grid-size", type=int, default=51)
    p_est.add_argument("--backend", choices=available_backends(), default=None)
    p_est.add_argument("--out-prefix", required=True)
    p_est.set_defaults(func=_cmd_estimate)

    p_spec = sub.add_parser("spectrum", help="eigendecompose a covariance CSV")
    p_spec.add_argument("--in", dest="input", required=True, help="covariance CSV")
    p_spec.add_argument("--k", type=int, default=None, help="number of eigenpairs")
    p_spec.add_argument("--out", required=True, help="output JSON path")
    p_spec.set_defaults(func=_cmd_spectrum)

    p_exp = sub.add_parser("experiment", help="run a Monte Carlo study")
    p_exp.add_argument("--config", required=True, help="JSON experiment config")
    p_exp.add_argument("--out-dir", required=True)
    p_exp.add_argument("--dump-surfaces", action="store_true")
    p_exp.add_argument("--fast", action="store_true", help="cap replications at 20")
    p_exp.add_argument("--backend", choices=available_backends(), default=None)
    p_exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
