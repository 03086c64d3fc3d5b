"""Covariance estimation for functional data with rough sample paths.

The package fits the second-moment surface of a process observed
sparsely and with noise, using local planar regression restricted to
strictly sub-diagonal cross-products and reflection across the diagonal.
That restriction avoids smoothing across the non-differentiable ridge
that rough processes (Brownian-like paths) put on the diagonal, where
the classical full-square smoother loses accuracy. The classical
smoother is included as the ``square`` method for comparison.

Quick start::

    from roughcov import (
        DesignSpec, KernelSpec, NoiseModel, ProcessSpec,
        add_noise, estimate_covariance, make_grid, sample_design,
        simulate_paths,
    )

    design = sample_design(DesignSpec(n=200, r=50, seed=1))
    paths = simulate_paths(design, ProcessSpec(kind="bm"), seed=2)
    ds = add_noise(design, paths, NoiseModel(std_dev=0.2), seed=3)
    grid = make_grid(51)
    cov = estimate_covariance(ds, KernelSpec("exp_sequence", h=0.35), grid)
"""

from ._fast import available_backends, get_backend
from .core import (
    Curve,
    EvaluationGrid,
    NoiseModel,
    NumericalError,
    SingularFitError,
    SparseFunctionalDataset,
    SurfaceEstimate,
    ValidationResult,
    make_grid,
    read_dataset_csv,
    validate_dataset,
    write_dataset_csv,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    build_truth,
    rate_study,
    run_experiment,
)
from .kernels import FAMILIES, KernelSpec, eval_kernel, eval_product_kernel, sigma_schedule
from .simulate import (
    PROCESS_KINDS,
    DesignSpec,
    ProcessSpec,
    add_noise,
    analytic_covariance,
    analytic_mean,
    sample_design,
    simulate_paths,
)
from .smoothers import (
    LocalFit,
    RawPairSet,
    build_pairs,
    default_bandwidth,
    estimate_both_surfaces,
    estimate_covariance,
    estimate_mean,
    estimate_noise_variance,
    estimate_surface_G,
    fit_second_moment_at,
    fit_via_determinant_representation,
    select_bandwidth_cv,
)
from .spectral import EigenSystem, align_signs, eigendecompose, hs_distance

__version__ = "0.1.0"

__all__ = [
    "Curve",
    "DesignSpec",
    "EigenSystem",
    "EvaluationGrid",
    "ExperimentConfig",
    "ExperimentReport",
    "FAMILIES",
    "KernelSpec",
    "LocalFit",
    "NoiseModel",
    "NumericalError",
    "PROCESS_KINDS",
    "ProcessSpec",
    "RawPairSet",
    "SingularFitError",
    "SparseFunctionalDataset",
    "SurfaceEstimate",
    "ValidationResult",
    "add_noise",
    "align_signs",
    "analytic_covariance",
    "analytic_mean",
    "available_backends",
    "build_pairs",
    "build_truth",
    "default_bandwidth",
    "eigendecompose",
    "estimate_both_surfaces",
    "estimate_covariance",
    "estimate_mean",
    "estimate_noise_variance",
    "estimate_surface_G",
    "eval_kernel",
    "eval_product_kernel",
    "fit_second_moment_at",
    "fit_via_determinant_representation",
    "get_backend",
    "hs_distance",
    "make_grid",
    "rate_study",
    "read_dataset_csv",
    "run_experiment",
    "sample_design",
    "select_bandwidth_cv",
    "sigma_schedule",
    "simulate_paths",
    "validate_dataset",
    "write_dataset_csv",
    "__version__",
]
