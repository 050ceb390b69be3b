"""Acceptance suite: one test per criterion, at the agreed tolerances.

The Monte Carlo criteria share one default study (K=32, nu=0.5, T=0.25,
delta=0.5, Sine noise, M in {16, 32, 64, 128}, R=16, N=200) with a master
seed fixed before any result was inspected. Expect about ten minutes on a
single core.
"""

import math
import time

import numpy as np
import pytest

from snse_em.cli import main
from snse_em.experiments import (GronwallInstance, StudyConfig, exp_moment_probe, gronwall_check, gronwall_constant,
                                 gronwall_suite, holder_probe, martingale_probe, run_study)
from snse_em.experiments.sampling import ALL_PARTS
from snse_em.experiments.studies import _moment_root
from snse_em.noise import NoiseKind, NoiseModel, verify_assumptions
from snse_em.solver import SolverParams, em_step, run_trajectory
from snse_em.spectral import (ConfigurationError, GridSpec, convective, divergence_defect, gradient,
                              hermitian_defect, inner, laplacian, leray_project, norm, random_field,
                              taylor_green, to_physical, trilinear)
from snse_em.wiener import coarsen, sample_path, spawn_sample_stream

SEED = 20240607
RATE_BAND = (0.30, 0.70)

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def default_study():
    cfg = StudyConfig(master_seed=SEED)
    return run_study(cfg, threads=1, parts=ALL_PARTS)


def within(x, band):
    return band[0] <= x <= band[1]


def test_criterion_01_velocity_rate(default_study, acceptance_log):
    slope = default_study.velocity.fit("err_L2_rms").slope
    ok = within(slope, (0.35, 0.70))
    acceptance_log.append((1, ok, f"slope (E max|e|^2)^(1/2) = {slope:.4f}, band [0.35, 0.70]; "
                               f"wall {default_study.wall_seconds:.0f} s"))
    assert ok


def test_criterion_02_energy_rate(default_study, acceptance_log):
    slope = default_study.velocity.fit("err_energy").slope
    ok = within(slope, RATE_BAND)
    acceptance_log.append((2, ok, f"slope (E k sum |grad e|^2)^(1/2) = {slope:.4f}, band {list(RATE_BAND)}"))
    assert ok


def test_criterion_03_pressure_rate(default_study, acceptance_log):
    slope = default_study.pressure.fit("err_pressure").slope
    ok = within(slope, RATE_BAND)
    acceptance_log.append((3, ok, f"slope (E |E_P|^2)^(1/2) = {slope:.4f}, band {list(RATE_BAND)}"))
    assert ok


def test_criterion_04_higher_moments(default_study, acceptance_log):
    cfg, table = default_study.config, default_study.velocity
    s4, s8 = table.fit("err_L2_m4").slope, table.fit("err_L2_m8").slope
    p95 = table.fit("err_path_p95").slope
    # Lyapunov: (E X^a)^(1/a) is nondecreasing in a
    err = np.array([r.max_error for r in default_study.records])
    orders = sorted(set(cfg.velocity_orders) | {2.0})
    monotone = True
    for j in range(err.shape[1]):
        stats = [_moment_root(err[:, j], a) for a in orders]
        for (lo, se_lo), (hi, se_hi) in zip(stats, stats[1:]):
            monotone &= lo <= hi + 2 * math.hypot(se_lo, se_hi)
    ok = within(s4, RATE_BAND) and within(s8, RATE_BAND) and monotone and p95 >= 0.3
    acceptance_log.append((4, ok, f"m4 {s4:.4f}, m8 {s8:.4f}, p95 {p95:.4f}, Lyapunov monotone {monotone}"))
    assert ok


def test_criterion_05_deterministic_oracle(acceptance_log):
    grid, nu, T, a0, M = GridSpec(), 0.5, 0.25, 1.0, 128
    k = T / M
    path = sample_path(1, T, M)
    rec = run_trajectory(taylor_green(grid, a0), path, SolverParams(nu, k), NoiseModel("sine", 0.0),
                         checkpoint_times=path.times())
    worst = 0.0
    for n, snap in zip(rec.checkpoint_steps, rec.snapshots):
        expected = taylor_green(grid, a0 / (1 + 2 * nu * k) ** n)
        worst = max(worst, float(np.max(np.abs(snap.coeffs - expected.coeffs))))
    study = run_study(StudyConfig(master_seed=SEED, noise_strength=0.0, samples=2))
    rate = study.velocity.fit("err_L2_rms").slope
    ok = worst <= 1e-9 and abs(rate - 1.0) <= 0.1
    acceptance_log.append((5, ok, f"max amplitude mismatch {worst:.2e} over {len(rec.snapshots)} times; "
                               f"deterministic rate {rate:.4f}"))
    assert ok


def test_criterion_06_structural_suite(acceptance_log):
    t0 = time.perf_counter()
    worst = dict(idem=0.0, orth=0.0, div=0.0, herm=0.0, skew=0.0, parseval=0.0)
    rng = np.random.default_rng(SEED)
    for modes in (8, 16, 32):
        grid = GridSpec(modes)
        for _ in range(5):
            v = random_field(grid, rng, max_mode=modes // 2)
            p = leray_project(v)
            nv = norm(v)
            worst["idem"] = max(worst["idem"], norm(leray_project(p) - p) / nv)
            worst["orth"] = max(worst["orth"], abs(inner(p, v - p)) / nv**2)
            for out in (gradient(v.u1), laplacian(v.u1), p, convective(p, v)):
                worst["herm"] = max(worst["herm"], hermitian_defect(out.coeffs))
            # skew symmetry is exact for fields inside the dealiased band
            u, w = leray_project(random_field(grid, rng)), random_field(grid, rng)
            worst["skew"] = max(worst["skew"], abs(trilinear(u, w, w)) / (norm(u, "H1") * norm(w, "H1") ** 2))
            f = random_field(grid, rng, max_mode=modes // 2 - 1, mean_zero=False)
            quad = math.sqrt(grid.area * np.mean(np.sum(to_physical(f) ** 2, axis=0)))
            worst["parseval"] = max(worst["parseval"], abs(norm(f) - quad) / quad)
    # divergence-free preservation by the scheme
    grid = GridSpec()
    u = leray_project(random_field(grid, rng)) * 2.0
    params = SolverParams(0.5, 0.25 / 32)
    for kind in NoiseKind:
        x = u
        for dw in sample_path(3, 0.25, 32).increments:
            x = em_step(x, float(dw), params, NoiseModel(kind, 0.5)).velocity
            worst["div"] = max(worst["div"], divergence_defect(x))
    fields = []
    for i in range(30):
        f = random_field(grid, rng, decay=0.75)
        fields.append(f * (3.0 * (i % 5 + 1) / norm(f)))
    verifier = all(verify_assumptions(NoiseModel(kind, 0.5), fields).ok for kind in NoiseKind)
    elapsed = time.perf_counter() - t0
    ok = (worst["idem"] <= 1e-12 and worst["orth"] <= 1e-12 and worst["div"] <= 1e-12 and worst["herm"] <= 1e-13
          and worst["skew"] <= 1e-10 and worst["parseval"] <= 1e-12 and verifier and elapsed < 60)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    acceptance_log.append((6, ok, f"{detail}; verifier {verifier}; {elapsed:.1f} s"))
    assert ok


def test_criterion_07_wiener_statistics(acceptance_log):
    n, T, M = 100_000, 0.25, 16
    w = np.array([sample_path(spawn_sample_stream(SEED, i), T, M).values()[-1] for i in range(n)])
    z = w / math.sqrt(T)
    within_5se = []
    for m, gauss in ((1, 1.0), (2, 3.0), (3, 15.0)):
        x = z ** (2 * m)
        se = np.std(x, ddof=1) / math.sqrt(n)
        within_5se.append(abs(x.mean() - gauss) <= 5 * se)
    fine = sample_path(SEED, T, 2048)
    exact = all(np.array_equal(coarsen(coarsen(fine, a), b).increments, coarsen(fine, a * b).increments)
                for a, b in ((2, 2), (4, 4), (2, 64), (16, 8)))
    # coarse increments are left-to-right sums of the generated ones
    c16 = coarsen(fine, 128)
    exact &= all(c16.increments[i] == sum(fine.increments[128 * i:128 * (i + 1)].tolist()) for i in range(16))
    ok = all(within_5se) and exact
    acceptance_log.append((7, ok, f"moments 2,4,6 within 5 SE {within_5se}; nested coarsening bit-exact {exact}"))
    assert ok


def test_criterion_08_martingale_probe(acceptance_log):
    # Z_n has zero conditional mean for every reference multiple; R = 16 keeps the cost down
    cfg = StudyConfig(master_seed=SEED, samples=500, coarse_steps=(16,), reference_multiple=16)
    rep = martingale_probe(cfg)
    ok = len(rep.steps) == 4 and rep.passed
    acceptance_log.append((8, ok, f"normalized |mean M_l| at l={list(rep.steps)}: "
                               f"{np.array2string(rep.normalized, precision=3)} (<= 3), N={rep.n_samples}"))
    assert ok


def test_criterion_09_exponential_moment(default_study, acceptance_log):
    cfg = default_study.config
    rep = exp_moment_probe(cfg, records=default_study.records)
    rejected = False
    try:
        StudyConfig(master_seed=SEED, sigma=cfg.sigma0 * 1.0001)
    except ConfigurationError:
        rejected = True
    ok = rep.sigma == cfg.sigma0 and rep.finite and rep.stable and rejected
    acceptance_log.append((9, ok, f"sigma0 {rep.sigma0:.6g}; E exp = {np.array2string(rep.estimate, precision=5)}; "
                               f"variation {np.array2string(rep.variation, precision=4)} (< 0.10); "
                               f"sigma > sigma0 rejected {rejected}"))
    assert ok


def test_criterion_10_gronwall(acceptance_log):
    suite = gronwall_suite(SEED, instances=1000, samples=400, steps=12, q=0.5, alpha=1.5)
    zero = gronwall_check(GronwallInstance.constant(4, 12), 0.5, 1.5)
    ones = gronwall_check(GronwallInstance.constant(4, 12, F=1.0, X=1.0), 0.5, 1.5)
    analytic = (zero.lhs == 0.0 and zero.rhs == 0.0 and ones.lhs == 1.0
                and ones.rhs == gronwall_constant(0.5, 1.5) and ones.holds)
    ok = suite.passed and analytic
    acceptance_log.append((10, ok, f"{suite.summary()}; analytic examples exact {analytic}"))
    assert ok


def test_criterion_11_holder(default_study, acceptance_log):
    rep = holder_probe(default_study.config, records=default_study.records)
    ok = rep.slope >= 0.35
    acceptance_log.append((11, ok, f"increment slope {rep.slope:.4f} (>= 0.35)"))
    assert ok


def test_criterion_12_thread_reproducibility(tmp_path, acceptance_log):
    cfg = tmp_path / "repro.cfg"
    cfg.write_text(f"master_seed = {SEED}\nsamples = 8\n")
    codes = [main(["converge", "--config", str(cfg), "--out", str(tmp_path / f"t{n}"), "--threads", str(n)])
             for n in (1, 8)]
    a, b = ((tmp_path / f"t{n}" / "table.csv").read_bytes() for n in (1, 8))
    ok = codes == [0, 0] and a == b
    acceptance_log.append((12, ok, f"exit codes {codes}; table.csv identical {a == b} ({len(a)} bytes)"))
    assert ok
