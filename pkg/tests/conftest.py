import time

import numpy as np
import pytest

from roughcov import (
    DesignSpec,
    ExperimentConfig,
    KernelSpec,
    NoiseModel,
    ProcessSpec,
    add_noise,
    estimate_both_surfaces,
    estimate_noise_variance,
    make_grid,
    rate_study,
    run_experiment,
    sample_design,
    simulate_paths,
)


def make_bm_dataset(n, r, sigma, seed):
    """One synthetic Brownian-motion dataset with the standard seed fan-out."""
    seeds = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    design = sample_design(DesignSpec(n=n, r=r, seed=int(seeds[0])))
    paths = simulate_paths(ProcessSpec(kind="brownian_motion"), design, seed=int(seeds[1]))
    return add_noise(design, paths, NoiseModel(std_dev=sigma), seed=int(seeds[2]))


@pytest.fixture(scope="session")
def small_bm_dataset():
    return make_bm_dataset(n=40, r=12, sigma=0.2, seed=42)


@pytest.fixture(scope="session")
def noiseless_dense_runs():
    """100 noiseless dense BM replications (n=200, r=50, sigma=0).

    Shared by the sup-norm method comparison and the sigma-hat-at-zero
    checks, which both quantify the same runs; one fit per method per
    replication, via the shared moment pass. With no measurement noise
    there is no variance-bias tradeoff to respect for the triangle fit
    (the sub-diagonal target is affine here), so these runs smooth
    heavily: hybrid kernel near the top of the valid bandwidth range.
    """
    grid = make_grid(51)
    true_g = np.minimum(grid.points[:, None], grid.points[None, :])
    spec = KernelSpec("hybrid_sequence", h=0.9)
    runs = []
    for rep in range(100):
        ds = make_bm_dataset(n=200, r=50, sigma=0.0, seed=909 ^ rep)
        both = estimate_both_surfaces(ds, spec, grid)
        sup_tri = float(np.max(np.abs(both["triangle"].values - true_g)))
        sup_sq = float(np.max(np.abs(both["square"].values - true_g)))
        sigma_hat = estimate_noise_variance(ds, spec, grid, both["triangle"])
        runs.append(
            {
                "sup_triangle": sup_tri,
                "sup_square": sup_sq,
                "sigma_hat": sigma_hat,
                "valid": both["triangle"].valid and both["square"].valid,
            }
        )
    return runs


def _timed(fn):
    start = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def bm_spectrum_report():
    """Dense BM study for the spectrum and noise-level checks.

    50 replications at n=200, r=50, sigma=0.2, triangle method, default
    kernel and bandwidth. Returns (report, elapsed_seconds).
    """
    config = ExperimentConfig(
        example="example1_bm", n=200, r=50, replications=50,
        sigma_noise=0.2, methods=("triangle",), base_seed=1105,
    )
    return _timed(lambda: run_experiment(config))


@pytest.fixture(scope="session")
def comparison_reports():
    """Paired triangle-versus-square studies at n=100, r in {20, 50}.

    100 replications each, sigma=0.2, shared data per replication. The
    hybrid kernel keeps a practically wide smoothing window (the pure
    exponential sequence narrows to h*sigma_n and drowns the square
    method's diagonal bias in variance at this sample size, muting the
    very contrast the comparison is about). Returns
    {r: (report, elapsed_seconds)}.
    """
    out = {}
    for r, seed in ((20, 1120), (50, 1150)):
        config = ExperimentConfig(
            example="example1_bm", n=100, r=r, replications=100,
            sigma_noise=0.2, kernel_family="hybrid_sequence", base_seed=seed,
        )
        out[r] = _timed(lambda c=config: run_experiment(c))
    return out


@pytest.fixture(scope="session")
def example2_report():
    """Smooth rank-3 study at n=200, r=50: parity of the two methods.

    100 replications, both methods, defaults otherwise.
    Returns (report, elapsed_seconds).
    """
    config = ExperimentConfig(
        example="example2_smooth", n=200, r=50, replications=100,
        sigma_noise=0.2, base_seed=1107,
    )
    return _timed(lambda: run_experiment(config))


@pytest.fixture(scope="session")
def bm_rate_table():
    """Triangle HS error versus n on dense BM data (rate check).

    n in {50, 100, 200, 400}, r=50, 50 replications each, default
    bandwidth per n. Returns (rows, elapsed_seconds).
    """
    config = ExperimentConfig(
        example="example1_bm", n=50, r=50, replications=50,
        sigma_noise=0.2, methods=("triangle",), base_seed=1108,
    )
    return _timed(lambda: rate_study(config, (50, 100, 200, 400)))
