"""Acceptance gate: ten release criteria, one printed verdict line each.

Each test prints ``[PASS]``/``[FAIL] C<k> <label>: <detail>`` through the
capture bypass so the verdicts are visible in any pytest run, then
asserts. Criteria with runtime targets time the work they own; the
Monte-Carlo criteria consume the session-scoped report fixtures so the
simulations run once for the whole suite.
"""

import json
import time

import numpy as np
import pytest

from roughcov.cli import main
from roughcov.core import Curve, NoiseModel, SparseFunctionalDataset, make_grid
from roughcov.kernels import KernelSpec, eval_kernel
from roughcov.simulate import (
    DesignSpec,
    ProcessSpec,
    add_noise,
    sample_design,
    simulate_paths,
)
from roughcov.smoothers import (
    RawPairSet,
    build_pairs,
    estimate_covariance,
    estimate_mean,
    estimate_surface_G,
    fit_second_moment_at,
    fit_via_determinant_representation,
)

from conftest import make_bm_dataset

TRUE_LAMBDA_1 = 4.0 / np.pi**2
TRUE_LAMBDA_2 = 4.0 / (9.0 * np.pi**2)


def _verdict(capsys, label, passed, detail):
    with capsys.disabled():
        print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
    assert passed, f"{label}: {detail}"


def _brute_wls(pairs, spec, s, t):
    h = spec.h
    w = (
        pairs.weight
        * eval_kernel(spec, (pairs.u - s) / h)
        * eval_kernel(spec, (pairs.v - t) / h)
    )
    design = np.column_stack([np.ones(pairs.n_pairs), pairs.u - s, pairs.v - t])
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(design * sw[:, None], pairs.product * sw, rcond=None)
    return beta


def _paired_hs(report):
    by_rep = {}
    for rec in report.records:
        if rec["valid"] and rec["hs_error"] is not None:
            by_rep.setdefault(rec["replication"], {})[rec["method"]] = rec["hs_error"]
    return [
        (d["triangle"], d["square"])
        for d in by_rep.values()
        if "triangle" in d and "square" in d
    ]


def test_c01_wls_oracle_equivalence(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(50):
        ds = make_bm_dataset(
            n=int(rng.integers(3, 6)), r=int(rng.integers(3, 7)),
            sigma=0.2, seed=1000 + i,
        )
        pairs = build_pairs(ds, "lower_triangle_strict")
        spec = KernelSpec("exp_sequence", h=float(rng.uniform(0.15, 0.6)))
        s = float(rng.uniform(0.0, 1.0))
        t = float(rng.uniform(0.0, s))
        fit = fit_second_moment_at(pairs, spec, s, t)
        beta = _brute_wls(pairs, spec, s, t)
        det = fit_via_determinant_representation(pairs, spec, s, t)
        for got, want in [
            (fit.a0, beta[0]), (fit.a1, beta[1]), (fit.a2, beta[2]), (det, fit.a0),
        ]:
            worst = max(worst, abs(got - want) / (abs(want) + 1e-12))
    elapsed = time.perf_counter() - start
    _verdict(
        capsys, "C1 WLS oracle equivalence",
        worst < 1e-9 and elapsed < 10.0,
        f"max relative deviation {worst:.2e} over 50 instances "
        f"(limit 1e-09), {elapsed:.1f}s (limit 10s)",
    )


def test_c02_exactness_suite(capsys):
    start = time.perf_counter()
    grid = make_grid(21)
    spec = KernelSpec("exp_sequence", h=0.3)

    design = sample_design(DesignSpec(n=8, r=7, seed=2))
    const = SparseFunctionalDataset(
        curves=tuple(Curve(times=t, values=np.full(t.shape, 2.5)) for t in design)
    )
    affine = SparseFunctionalDataset(
        curves=tuple(Curve(times=t, values=1.0 - 2.0 * t) for t in design)
    )

    errs = {
        "constant mean": np.max(np.abs(estimate_mean(const, spec, 0.3, grid).values - 2.5)),
        "affine mean": np.max(
            np.abs(estimate_mean(affine, spec, 0.3, grid).values - (1.0 - 2.0 * grid.points))
        ),
        "constant second moment": np.max(
            np.abs(estimate_surface_G(const, spec, grid, "triangle").values - 2.5**2)
        ),
        "constant covariance": np.max(np.abs(estimate_covariance(const, spec, grid).values)),
    }

    rng = np.random.default_rng(5)
    u = rng.uniform(0.05, 1.0, 80)
    v = u * rng.uniform(0.0, 0.95, 80)
    plane = RawPairSet(
        u=u, v=v, product=2.0 + 3.0 * u - 1.0 * v,
        weight=np.full(80, 1 / 80), curve=np.zeros(80, dtype=np.int64),
        restriction="lower_triangle_strict", n_curves=1,
    )
    plane_err = 0.0
    for s, t in [(0.5, 0.25), (0.9, 0.9), (0.3, 0.0), (1.0, 0.4)]:
        fit = fit_second_moment_at(plane, spec, s, t)
        plane_err = max(
            plane_err,
            abs(fit.a0 - (2.0 + 3.0 * s - t)), abs(fit.a1 - 3.0), abs(fit.a2 + 1.0),
        )
    errs["affine surface"] = plane_err

    elapsed = time.perf_counter() - start
    worst = max(errs.values())
    _verdict(
        capsys, "C2 exactness suite",
        worst < 1e-8 and elapsed < 5.0,
        f"worst abs error {worst:.2e} over {len(errs)} checks "
        f"(limit 1e-08), {elapsed:.1f}s (limit 5s)",
    )


def test_c03_reflection_invariant(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(33)
    kinds = ("brownian_motion", "ornstein_uhlenbeck", "example2")
    families = ("exp_sequence", "hybrid_sequence", "epanechnikov_reference")
    asymmetric = 0
    for case in range(200):
        seeds = np.random.SeedSequence(3000 + case).generate_state(3, dtype=np.uint64)
        design = sample_design(
            DesignSpec(n=int(rng.integers(2, 13)), r=int(rng.integers(3, 9)),
                       seed=int(seeds[0]))
        )
        paths = simulate_paths(
            ProcessSpec(kind=kinds[case % 3]), design, seed=int(seeds[1])
        )
        sigma = float(rng.choice([0.0, 0.2, 0.5]))
        ds = add_noise(design, paths, NoiseModel(std_dev=sigma), seed=int(seeds[2]))
        spec = KernelSpec(families[(case // 3) % 3], h=float(rng.uniform(0.05, 0.9)))
        grid = make_grid(int(rng.integers(5, 32)))
        est = estimate_surface_G(ds, spec, grid, "triangle")
        if est.values.tobytes() != est.values.T.tobytes():
            asymmetric += 1
    elapsed = time.perf_counter() - start
    _verdict(
        capsys, "C3 reflection invariant",
        asymmetric == 0 and elapsed < 30.0,
        f"{asymmetric} of 200 fuzz cases bitwise asymmetric "
        f"(limit 0), {elapsed:.1f}s (limit 30s)",
    )


def test_c04_kernel_schedule_bound(capsys):
    worst = -np.inf
    for family in ("exp_sequence", "hybrid_sequence"):
        for h in (0.5, 0.2, 0.1, 0.05):
            w1 = float(eval_kernel(KernelSpec(family, h=h), 1.0))
            worst = max(worst, w1 / h**4)
    _verdict(
        capsys, "C4 kernel schedule bound",
        worst <= 1.0,
        f"max W(1)/h^4 = {worst:.4f} over scheduled families, "
        f"h in {{0.5, 0.2, 0.1, 0.05}} (limit 1)",
    )


def test_c05_brownian_spectrum(capsys, bm_spectrum_report):
    report, elapsed = bm_spectrum_report
    lam1 = float(np.median(
        [rec["eigenvalues"][0] for rec in report.records if rec["valid"]]
    ))
    lam2 = float(np.median(
        [rec["eigenvalues"][1] for rec in report.records if rec["valid"]]
    ))
    rel1 = abs(lam1 / TRUE_LAMBDA_1 - 1.0)
    rel2 = abs(lam2 / TRUE_LAMBDA_2 - 1.0)
    _verdict(
        capsys, "C5 Brownian motion spectrum",
        rel1 < 0.15 and rel2 < 0.25 and elapsed < 300.0,
        f"median lam1 {lam1:.5f} off by {rel1:.1%} (limit 15%), "
        f"median lam2 {lam2:.5f} off by {rel2:.1%} (limit 25%), "
        f"{elapsed:.0f}s (limit 300s)",
    )


def test_c06_rough_case_comparison(capsys, comparison_reports):
    details = []
    ok = True
    total = 0.0
    for r in (20, 50):
        report, elapsed = comparison_reports[r]
        total += elapsed
        paired = _paired_hs(report)
        tri = float(np.median([p[0] for p in paired]))
        sq = float(np.median([p[1] for p in paired]))
        wins = sum(p[0] < p[1] for p in paired)
        ok = ok and tri < sq and wins >= 0.70 * len(paired)
        details.append(
            f"r={r}: median {tri:.4f} vs {sq:.4f}, wins {wins}/{len(paired)}"
        )
    ok = ok and total < 900.0
    _verdict(
        capsys, "C6 rough-case comparison",
        ok,
        "; ".join(details) + f" (need win rate >= 70%), {total:.0f}s (limit 900s)",
    )


def test_c07_smooth_case_parity(capsys, example2_report):
    report, _ = example2_report
    paired = _paired_hs(report)
    tri = float(np.median([p[0] for p in paired]))
    sq = float(np.median([p[1] for p in paired]))
    ratio = tri / sq
    _verdict(
        capsys, "C7 smooth-case parity",
        0.5 <= ratio <= 2.0,
        f"median HS ratio triangle/square {ratio:.3f} over "
        f"{len(paired)} replications (limits [0.5, 2.0])",
    )


def test_c08_convergence_rate(capsys, bm_rate_table):
    rows, _ = bm_rate_table
    medians = [row["median_hs"] for row in rows]
    ratios = [row["rate_ratio"] for row in rows]
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    spread = max(ratios) / min(ratios)
    _verdict(
        capsys, "C8 convergence rate",
        decreasing and spread < 3.0,
        f"median HS {['%.4f' % m for m in medians]} for n in {[r['n'] for r in rows]} "
        f"(strictly decreasing: {decreasing}), rate-ratio spread {spread:.2f} (limit 3)",
    )


def test_c09_noise_variance_sanity(capsys, bm_spectrum_report, noiseless_dense_runs):
    report, _ = bm_spectrum_report
    noisy = report.summary["triangle"]["sigma_hat"]["median"]
    clean = float(np.median([run["sigma_hat"] for run in noiseless_dense_runs]))
    _verdict(
        capsys, "C9 noise variance sanity",
        0.15 <= noisy <= 0.25 and clean <= 0.05,
        f"sigma 0.2 -> median sigma_hat {noisy:.4f} (limits [0.15, 0.25]); "
        f"sigma 0 -> median sigma_hat {clean:.4f} (limit 0.05)",
    )


def test_c10_deterministic_reports(capsys, tmp_path):
    config = {
        "example": "example1_bm", "n": 15, "r": 6, "replications": 2,
        "sigma_noise": 0.2, "grid_size": 21, "base_seed": 17,
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    blobs = []
    for name in ("first", "second"):
        out_dir = tmp_path / name
        rc = main(["experiment", "--config", str(cfg), "--out-dir", str(out_dir)])
        assert rc == 0
        blobs.append((out_dir / "report.json").read_bytes())
    identical = blobs[0] == blobs[1]
    _verdict(
        capsys, "C10 deterministic reports",
        identical,
        f"rerun report.json byte-identical: {identical} "
        f"({len(blobs[0])} bytes)",
    )
