"""Acceptance gate: one test per criterion, each recording a pass/fail line."""

import math
import time

import numpy as np
import pytest

from ompsupport.conditions import (
    THM1_SUFFICIENT,
    calibrate_c,
    necessary_snr_threshold,
    sufficient_delta_ceiling,
    sufficient_snr_threshold,
)
from ompsupport.harness import ExperimentConfig, base_frame, run_experiment, run_trial
from ompsupport.metrics import (
    SparseSignal,
    compute_mar,
    compute_snr,
    exact_rip_constant,
    lemma_property_checks,
    support_error_rate,
)
from ompsupport.omp import FixedIterations, identify_index, omp_run, verify_iteration_inequalities
from ompsupport.synth import (
    AdversarialOffSupport,
    IsotropicGaussianDirection,
    UniformMagnitude,
    appendix_a_instance,
    derive_seed,
    gaussian_matrix,
    noise_at_snr,
    randomized_frame,
    sparse_signal,
)


def test_criterion_1_counterexample_reproduction(criterion):
    t0 = time.perf_counter()
    problems = []
    for k in (1, 2, 3, 5):
        m = k + 5
        inst = appendix_a_instance(k, m, 0.0)
        snr = compute_snr(inst.phi, inst.x, inst.v)
        if snr != k:
            problems.append(f"K={k}: SNR={snr}")
        if compute_mar(inst.x) != 1:
            problems.append(f"K={k}: MAR")
        if exact_rip_constant(inst.phi, k + 1).delta > 1e-12:
            problems.append(f"K={k}: delta")
        if not identify_index(inst.phi, inst.y)[2]:
            problems.append(f"K={k}: no tie")
        bad = appendix_a_instance(k, m, 0.1)
        tr = omp_run(bad.phi, bad.y, FixedIterations(k))
        rho = support_error_rate(bad.x.support, tr.final_support).error_rate
        if tr.iterations[0].selected_index != m or m in bad.x.support or rho != pytest.approx(1 / k):
            problems.append(f"K={k}: eps=0.1 first={tr.iterations[0].selected_index} rho={rho}")
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 1.0
    criterion(1, ok, f"{elapsed:.3f}s; {'; '.join(problems) or 'all values reproduced'}")
    assert ok, problems


# -- criteria 2 and 6 share one seeded corpus -------------------------------------

THM1_CONFIG = """
seed=2024
m=12
n=16
k=1,2,3
snr=thm1x1
profile=uniform:1:2
signs=random
noise=isotropic,adversarial
matrix=lowrip
diagnostics=on
"""


@pytest.fixture(scope="module")
def thm1_corpus():
    cfg = ExperimentConfig.from_text(THM1_CONFIG)
    cells = cfg.cells()
    t0 = time.perf_counter()
    records = [run_trial(cells[i % len(cells)], i // len(cells), cfg, i) for i in range(500)]
    return records, time.perf_counter() - t0


def test_criterion_2_sufficient_condition_soundness(criterion, thm1_corpus):
    records, elapsed = thm1_corpus
    qualified, recovered, margin_bad, mar_bad = 0, 0, 0, 0
    blocked: dict[int, list[float]] = {}
    for r in records:
        if r.error or r.verdict(THM1_SUFFICIENT) != "pass":
            blocked.setdefault(r.k, []).append(r.delta_k1 if r.delta_k1 is not None else math.nan)
            continue
        qualified += 1
        # margin recomputed independently of the harness
        rk = math.sqrt(r.k)
        thr = 2 * rk * (1 + r.delta_k1) / ((1 - (rk + 1) * r.delta_k1) * math.sqrt(r.mar))
        margin_bad += math.sqrt(r.snr_actual) - thr < 1e-6
        mar_bad += not 0.25 <= r.mar <= 1
        recovered += bool(r.exact_recovery)
    detail = f"{recovered}/500 recovered, {qualified}/500 meet the hypothesis, {elapsed:.1f}s"
    for k, ds in sorted(blocked.items()):
        detail += (f"; K={k}: {len(ds)} trials blocked, min delta_{k + 1}={min(ds):.4f}"
                   f" vs ceiling {sufficient_delta_ceiling(k):.4f}")
    ok = recovered == 500 and qualified == 500 and not margin_bad and not mar_bad and elapsed < 120
    criterion(2, ok, detail)
    assert ok, detail


def test_criterion_3_threshold_reduction(criterion):
    exact = all(necessary_snr_threshold(k, 0.0, 1.0, squared=True) == k for k in range(1, 21))
    violations, points = 0, 0
    for k in range(1, 11):
        ceiling = sufficient_delta_ceiling(k)
        for d in np.linspace(0, ceiling, 10, endpoint=False):
            for mar in (0.25, 0.5, 1.0):
                points += 1
                violations += sufficient_snr_threshold(k, d, mar) < necessary_snr_threshold(k, d, mar)
    ok = exact and violations == 0 and points == 300
    criterion(3, ok, f"exact K reduction for K=1..20: {exact}; {violations} violations on {points} grid points")
    assert ok


def test_criterion_4_residual_decrease(criterion):
    t0 = time.perf_counter()
    snrs = [1.0, 10.0, 100.0, 1e4, math.inf]
    bad_dec = bad_orth = bad_mono = iters = 0
    for i in range(1000):
        k = 1 + i % 4
        snr = snrs[(i // 4) % len(snrs)]
        seed = derive_seed(99, "fir", i)
        phi = gaussian_matrix(16, 32, seed)
        x = sparse_signal(32, k, UniformMagnitude(0.5, 2.0, True), seed)
        v = np.zeros(16) if math.isinf(snr) else noise_at_snr(
            phi @ x.dense(), snr, IsotropicGaussianDirection(), seed)
        tr = omp_run(phi, phi @ x.dense() + v, FixedIterations(k))
        d1 = exact_rip_constant(phi, 1).delta
        rep = verify_iteration_inequalities(phi, x, v, tr, {1: d1})
        iters += len(rep.checks)
        bad_dec += sum(not c.decrease_ok for c in rep.checks)
        bad_orth += sum(not c.orthogonality_ok for c in rep.checks)
        norms = [np.linalg.norm(tr.residual(j)) for j in range(k + 1)]
        bad_mono += sum(b > a + 1e-12 for a, b in zip(norms, norms[1:]))
        # orthogonality after the last update as well
        A = phi[:, np.array(tr.final_support) - 1]
        y = tr.y
        bad_orth += np.abs(A.T @ tr.final_residual).max() > 1e-9 * np.linalg.norm(y) * np.linalg.norm(A, axis=0).max()
    elapsed = time.perf_counter() - t0
    ok = bad_dec == bad_orth == bad_mono == 0 and elapsed < 60
    criterion(4, ok, f"{iters} iterations in 1000 runs, violations: decrease {bad_dec}, "
                     f"orthogonality {bad_orth}, monotonicity {bad_mono}; {elapsed:.1f}s")
    assert ok


def test_criterion_5_correlation_bounds(criterion):
    evaluated = trials = bad_u = bad_v = 0
    for i in range(200):
        k = 1 + i % 3
        seed = derive_seed(5, "prop1", i)
        if i % 2:
            phi = randomized_frame(base_frame(5, 12, 16, k + 1, 1500), seed)
        else:
            phi = gaussian_matrix(12, 16, seed)
            phi /= np.linalg.norm(phi, axis=0)
        x = sparse_signal(16, k, UniformMagnitude(1.0, 2.0, True), seed)
        snr = [3.0, 30.0, 300.0, 3000.0][(i // 6) % 4]
        mode = AdversarialOffSupport() if i % 4 < 2 else IsotropicGaussianDirection()
        v = noise_at_snr(phi @ x.dense(), snr, mode, seed, phi=phi, support=x.support)
        tr = omp_run(phi, phi @ x.dense() + v, FixedIterations(k))
        deltas = {o: exact_rip_constant(phi, o).delta for o in {1, k, k + 1}}
        rep = verify_iteration_inequalities(phi, x, v, tr, deltas)
        checks = [c for c in rep.checks if c.bounds_evaluated]
        trials += bool(checks)
        evaluated += len(checks)
        bad_u += sum(not c.u_ok for c in checks)
        bad_v += sum(not c.vbar_ok for c in checks)
    ok = trials == 200 and bad_u == bad_v == 0
    criterion(5, ok, f"{trials} trials, {evaluated} correct-so-far iterations checked, "
                     f"violations: lower {bad_u}, upper {bad_v}")
    assert ok


def test_criterion_6_distortion_bound(criterion, thm1_corpus):
    records, _ = thm1_corpus
    exact = [r for r in records if not r.error and r.exact_recovery]
    bad = sum(r.l2_distortion > r.noise_norm / math.sqrt(1 - r.delta_k) for r in exact)
    ok = bad == 0 and len(exact) > 0
    criterion(6, ok, f"{bad} violations over {len(exact)} exact-recovery trials of criterion 2 "
                     f"({500 - len(exact)} trials of that corpus did not run)")
    assert ok


def test_criterion_7_lemma_suite(criterion):
    t0 = time.perf_counter()
    mono_bad, failures, checks = 0, {}, 0
    for s in range(50):
        phi = gaussian_matrix(8, 12, derive_seed(7, "lemma", s))
        rep = lemma_property_checks(phi, max_order=3, pairs=10_000, seed=s, tol=1e-8)
        d = rep.deltas
        mono_bad += not d[1] <= d[2] <= d[3]
        for name, c in rep.lemmas.items():
            checks += c.checks
            if c.violations:
                failures[name] = failures.get(name, 0) + c.violations
    elapsed = time.perf_counter() - t0
    ok = mono_bad == 0 and not failures and elapsed < 120
    criterion(7, ok, f"{checks} inequality checks on 50 matrices, monotonicity failures {mono_bad}, "
                     f"violations {failures or 0}; {elapsed:.1f}s")
    assert ok


THM3_CONFIGS = [
    "m=10\nn=14\nk=1\nmatrix=lowrip:2k,normalized",
    "m=10\nn=14\nk=2\nmatrix=lowrip:2k",
    "m=8\nn=10\nk=3\nmatrix=lowrip:2k",
]


def test_criterion_8_approximate_recovery(criterion):
    limit = run_experiment(ExperimentConfig.from_text(
        "seed=8\nm=12\nn=12\nk=1,2,3\ntrials=20\nmatrix=orthogonal\nprofile=uniform:1:4\n"
        "signs=random"), write=False)
    limit_ok = all(r.rho_error == 0 for r in limit.records) and len(limit.records) == 60

    rows, skipped = [], 0
    for text in THM3_CONFIGS:
        cfg = ExperimentConfig.from_text(
            "seed=8\ntrials=30\nsnr=thm3x1,thm3x4,thm3x30\nprofile=equal\nsigns=random\n"
            "noise=isotropic,adversarial\n" + text)
        for r in run_experiment(cfg, write=False).records:
            if r.error:
                skipped += 1
                continue
            assert r.kappa == 1 and r.snr_actual >= r.delta_2k ** -1.5 * (1 - 1e-12)
            rows.append((r.rho_error, r.kappa, r.delta_2k))
    rows += [(r.rho_error, r.kappa, r.delta_2k) for r in limit.records]
    res = calibrate_c(rows)
    zero_bad = sum(d <= 1e-12 and rho > 0 for rho, _, d in rows)
    ok = limit_ok and res.finite and zero_bad == 0 and res.trials > 0
    criterion(8, ok, f"orthonormal noise-free rho=0: {limit_ok}; C*={res.c_star:.4g} over "
                     f"{res.trials} trials ({res.zero_delta_trials} with delta_2K=0, "
                     f"{skipped} skipped with delta_2K >= 1); max rho "
                     f"{max(r[0] for r in rows):.3g}")
    assert ok


def test_criterion_9_determinism(criterion, tmp_path):
    text = ("seed=9\nm=10\nn=14\nk=1,2\ntrials=8\nsnr=3,thm1x1.5,thm3x2,noise-free\n"
            "profile=uniform:1:2,equal\nsigns=random\nnoise=isotropic,adversarial\n"
            "matrix=lowrip,normalized\ndiagnostics=on\nframe_steps=400\n")
    outs = {}
    for name, workers in (("serial1", 1), ("serial2", 1), ("parallel", 4)):
        cfg = ExperimentConfig.from_text(text + f"workers={workers}\nout_dir={tmp_path / name}")
        res = run_experiment(cfg)
        outs[name] = tuple(res.paths[f].read_bytes() for f in ("trials", "cells"))
    ok = outs["serial1"] == outs["serial2"] == outs["parallel"]
    criterion(9, ok, f"trials.csv and cells.csv byte-identical across 2 serial runs and 1 "
                     f"parallel run ({len(outs['serial1'][0])} + {len(outs['serial1'][1])} bytes)")
    assert ok
