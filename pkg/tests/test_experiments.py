"""Convergence studies, probes and the stochastic Gronwall check."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snse_em.experiments import (ConvergenceTable, GronwallInstance, StudyConfig, StudyFailure, check_hypothesis,
                                 exp_moment_probe, fit_rate, generate_instance, gronwall_check, gronwall_constant,
                                 gronwall_suite, holder_probe, map_samples, martingale_probe, run_study,
                                 stability_probe)
from snse_em.experiments.sampling import ALL_PARTS, martingale_steps
from snse_em.spectral import ConfigurationError, GridSpec, norm, taylor_green

G16 = GridSpec(16)


def small(**kw) -> StudyConfig:
    base = dict(grid=G16, coarse_steps=(4, 8, 16), reference_multiple=4, samples=4, master_seed=11)
    base.update(kw)
    return StudyConfig(**base)


class TestFitRate:
    def test_exact_power_laws(self):
        ks = 0.25 / np.array([16, 32, 64, 128])
        for rate in (1.0, 0.5):
            fit = fit_rate(ks, 3.0 * ks**rate)
            assert fit.slope == pytest.approx(rate, abs=1e-12)
            assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
            assert fit.ci == pytest.approx(0.0, abs=1e-10)

    def test_noisy_half_rate(self):
        rng = np.random.default_rng(3)
        ks = 0.25 / 2.0 ** np.arange(4, 9)
        errors = ks**0.5 * (1 + 0.01 * rng.uniform(-1, 1, size=5))
        fit = fit_rate(ks, errors)
        assert abs(fit.slope - 0.5) < 0.02
        assert fit.ci > 0

    @pytest.mark.parametrize("ks,errs", [([0.1, 0.05], [1.0, 0.5]), ([0.1, 0.05, 0.02], [1.0, 0.0, 0.2]),
                                         ([0.1, 0.05, 0.02], [1.0, 0.5])])
    def test_invalid(self, ks, errs):
        with pytest.raises(ValueError):
            fit_rate(np.array(ks), np.array(errs))


class TestStudyConfig:
    def test_defaults(self):
        cfg = StudyConfig()
        assert cfg.grid.modes == 32 and cfg.coarse_steps == (16, 32, 64, 128)
        assert cfg.reference_steps == 2048 and cfg.samples == 200
        assert cfg.velocity_orders == (1.0, 1.8, 4.0, 8.0)
        assert cfg.sigma0 == pytest.approx(1 / (16 * (0.5 * 2 * math.pi) ** 2))

    @pytest.mark.parametrize("kw,key", [
        (dict(samples=1), "samples"),
        (dict(q_orders=(1.2,)), "q_orders"),
        (dict(m_orders=(2,)), "m_orders"),
        (dict(viscosity=0.0), "viscosity"),
        (dict(sigma=1.0), "sigma"),
        (dict(noise_kind="tanh"), "noise_kind"),
        (dict(initial="vortex"), "initial"),
        (dict(gronwall_q=0.8, gronwall_alpha=1.5), "gronwall_alpha"),
        (dict(amplitude_min=0.5), "amplitude_min"),
    ])
    def test_rejected(self, kw, key):
        with pytest.raises(ConfigurationError, match=key):
            StudyConfig(**kw)

    def test_non_divisor_is_named(self):
        with pytest.raises(ConfigurationError, match="M=48"):
            StudyConfig(coarse_steps=(16, 48, 64), reference_multiple=1)

    def test_ladder_sorted_and_halving(self):
        cfg = StudyConfig(coarse_steps=(64, 16, 32))
        assert cfg.coarse_steps == (16, 32, 64)
        assert cfg.with_halved_step().coarse_steps == (32, 64, 128)

    def test_sample_amplitude_range_and_determinism(self):
        cfg = small(amplitude_min=0.5, amplitude_max=1.5)
        amps = [cfg.sample_amplitude(i) for i in range(20)]
        assert all(0.5 <= a <= 1.5 for a in amps) and len(set(amps)) == 20
        assert amps == [cfg.sample_amplitude(i) for i in range(20)]

    def test_sample_seeds_distinct(self):
        cfg = StudyConfig(master_seed=5)
        assert len({cfg.sample_seed(i) for i in range(1000)}) == 1000


class TestConvergenceTable:
    def test_sorted_and_csv(self):
        t = ConvergenceTable([0.01, 0.04, 0.02], 7, {"a": [0.1, 0.2, np.sqrt(2) * 0.1]})
        assert list(t.ks) == [0.04, 0.02, 0.01]
        lines = t.to_csv().splitlines()
        assert lines[0] == "k,n_samples,a"
        assert lines[1] == "0.040000000000000001,7,0.20000000000000001"
        assert lines[-2].startswith("slope,,") and lines[-1].startswith("ci,,")
        assert float(lines[-2].split(",")[2]) == pytest.approx(0.5, abs=1e-12)

    def test_short_or_zero_columns_give_nan_fit(self):
        t = ConvergenceTable([0.1, 0.05], 2, {"a": [1.0, 0.5]})
        assert math.isnan(t.fit("a").slope)
        t = ConvergenceTable([0.1, 0.05, 0.02], 2, {"a": [0.0, 0.0, 0.0]})
        assert math.isnan(t.fit("a").slope)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ConvergenceTable([0.1], 2, {"a": [-1.0]})


class TestStudies:
    @pytest.mark.parametrize("rate", [0.5, 1.0])
    def test_synthetic_injection_recovers_rate(self, rate):
        res = run_study(StudyConfig(master_seed=1, synthetic_rate=rate, synthetic_constant=2.0, samples=3))
        assert res.synthetic
        for name, fit in res.velocity.fits.items():
            assert fit.slope == pytest.approx(rate, abs=1e-12), name
        assert res.pressure.fit("err_pressure").slope == pytest.approx(rate, abs=1e-12)

    def test_columns_of_converge_table(self):
        res = run_study(StudyConfig(master_seed=1, synthetic_rate=0.5, samples=2))
        header = res.velocity.to_csv().splitlines()[0]
        assert header == "k,n_samples,err_L2_q0.5,err_L2_q0.9,err_L2_m4,err_L2_m8,err_energy,err_path_p95"

    def test_reference_equal_to_coarse_gives_zero_error(self):
        res = run_study(small(coarse_steps=(8,), reference_multiple=1, samples=2))
        for col in res.velocity.columns.values():
            assert np.all(col == 0)
        assert np.all(res.pressure.columns["err_pressure"] == 0)

    def test_deterministic_taylor_green_rate(self):
        cfg = small(noise_strength=0.0, samples=2, coarse_steps=(16, 32, 64), reference_multiple=16,
                    amplitude=1.0)
        res = run_study(cfg)
        assert res.velocity.fit("err_L2_rms").slope == pytest.approx(1.0, abs=0.1)
        # without noise every sample is the same trajectory
        assert np.array_equal(res.records[0].max_error, res.records[1].max_error)

    def test_deterministic_pressure_closed_form(self):
        cfg = small(noise_strength=0.0, samples=2, coarse_steps=(4, 8), reference_multiple=8, amplitude=1.3)
        res = run_study(cfg)

        def pressure_sum(m):
            k = cfg.horizon / m
            a = 1.3 / (1 + 2 * cfg.viscosity * k) ** np.arange(1, m + 1)
            return k * np.sum(a**2) / 4

        s_ref = pressure_sum(cfg.reference_steps)
        for j, m in enumerate(cfg.coarse_steps):
            # ||cos 2x + cos 2y|| = 2 pi on the default torus
            expected = abs(pressure_sum(m) - s_ref) * 2 * math.pi
            assert res.records[0].pressure[j] == pytest.approx(expected, rel=1e-8)

    def test_errors_decrease_under_refinement(self):
        res = run_study(small(samples=6))
        col = res.velocity.columns["err_L2_rms"]
        assert np.all(np.diff(col) < 0)

    def test_thread_count_does_not_change_records(self):
        cfg = small(samples=3)
        a = map_samples(cfg, ALL_PARTS, threads=1)
        b = map_samples(cfg, ALL_PARTS, threads=2)
        for ra, rb in zip(a, b):
            assert ra.index == rb.index and ra.seed == rb.seed
            for name in ("max_error", "energy", "pressure", "stab_max", "stab_incr", "martingale"):
                assert np.array_equal(getattr(ra, name), getattr(rb, name)), name
            assert ra.l2sq_final == rb.l2sq_final

    def test_retry_halves_step_and_succeeds(self):
        cfg = StudyConfig(grid=G16, coarse_steps=(2, 4), reference_multiple=2, samples=2, picard_max_iters=12,
                          amplitude=3.0, master_seed=1, max_retries=4)
        res = run_study(cfg)
        assert res.retries == 1
        assert res.config.coarse_steps == (4, 8)

    def test_exhausted_retries_raise(self):
        cfg = StudyConfig(grid=G16, coarse_steps=(2, 4), reference_multiple=2, samples=2, picard_max_iters=8,
                          amplitude=3.0, master_seed=1, max_retries=1)
        with pytest.raises(StudyFailure, match="1 retries"):
            run_study(cfg)


class TestStabilityProbe:
    def test_deterministic_max_is_initial_energy(self):
        cfg = small(noise_strength=0.0, samples=2)
        rep = stability_probe(cfg)
        u0 = taylor_green(G16, 1.0)
        # max over n of ||grad u^n||^2 sits at n = 0 under pure dissipation
        g0 = norm(u0, "H1") ** 2
        assert np.all(rep.max_energy >= g0)
        assert np.all(rep.max_energy - g0 <= 0.5 * g0)
        assert rep.bounded

    def test_zero_initial_with_sine_noise_stays_zero(self):
        rep = stability_probe(small(initial="zero", samples=2))
        assert np.all(rep.max_energy == 0) and np.all(rep.increments == 0)

    def test_constant_noise_does_not_move_zero(self):
        # cos(0) is spatially constant and the mean mode is not evolved
        rep = stability_probe(small(initial="zero", noise_kind="cosine", samples=2))
        assert np.all(rep.max_energy == 0)

    def test_cosine_noise_is_bounded(self):
        rep = stability_probe(small(noise_kind="cosine", samples=8))
        assert np.all(rep.max_energy > 0) and np.all(np.isfinite(rep.max_energy))
        assert rep.bounded


class TestExpMomentProbe:
    def test_zero_initial_is_one(self):
        rep = exp_moment_probe(small(initial="zero", samples=2))
        assert np.all(rep.estimate == 1.0) and rep.stable

    def test_sigma_zero_is_one(self):
        rep = exp_moment_probe(small(samples=2), sigma=0.0)
        assert np.all(rep.estimate == 1.0)

    def test_sigma_above_threshold_rejected(self):
        cfg = small(samples=2)
        with pytest.raises(ConfigurationError, match="sigma"):
            exp_moment_probe(cfg, sigma=1.01 * cfg.sigma0)

    def test_cosine_at_threshold_is_stable(self):
        rep = exp_moment_probe(small(noise_kind="cosine", samples=8))
        assert rep.sigma == rep.sigma0
        assert rep.finite and rep.stable
        assert len(rep.times) == 2


class TestHolderProbe:
    def test_needs_multiple_of_64(self):
        with pytest.raises(ConfigurationError, match="64"):
            holder_probe(small(reference_multiple=2))

    def test_deterministic_slope_is_one(self):
        rep = holder_probe(small(noise_strength=0.0, samples=2, coarse_steps=(16,), reference_multiple=8))
        assert rep.slope == pytest.approx(1.0, abs=0.05)

    def test_noisy_slope_near_half(self):
        cfg = small(samples=8, coarse_steps=(16,), reference_multiple=8, noise_strength=1.0, amplitude=0.2)
        rep = holder_probe(cfg)
        assert 0.35 <= rep.slope <= 0.75


class TestMartingaleProbe:
    def test_checkpoints(self):
        assert martingale_steps(small()) == (1, 2, 3, 4)
        assert martingale_steps(small(coarse_steps=(2, 4))) == (1, 2)

    def test_deterministic_is_zero(self):
        rep = martingale_probe(small(noise_strength=0.0, samples=2))
        assert np.all(rep.mean == 0) and rep.passed

    def test_reference_equal_to_coarse_is_zero(self):
        rep = martingale_probe(small(coarse_steps=(8,), reference_multiple=1, samples=2))
        # only storage round-off survives
        assert np.all(np.abs(rep.mean) <= 1e-30) and rep.passed

    def test_small_noisy_run(self):
        rep = martingale_probe(small(samples=16))
        assert rep.n_samples == 16 and np.all(np.isfinite(rep.normalized))


class TestGronwall:
    def test_analytic_zero_example(self):
        res = gronwall_check(GronwallInstance.constant(2, 5), 0.5, 1.5)
        assert res.lhs == 0.0 and res.rhs == 0.0 and res.holds

    def test_analytic_ones_example(self):
        res = gronwall_check(GronwallInstance.constant(2, 5, F=1.0, X=1.0), 0.5, 1.5)
        assert res.lhs == 1.0
        assert res.rhs == gronwall_constant(0.5, 1.5) == pytest.approx(5 ** (2 / 3), rel=1e-15)

    def test_hypothesis_violation_named(self):
        inst = GronwallInstance.constant(3, 4, F=1.0, X=1.0)
        inst.X[2, 3] = 1.5
        with pytest.raises(ValueError, match="sample 2, n=3"):
            check_hypothesis(inst)

    def test_negative_and_nonzero_start_rejected(self):
        inst = GronwallInstance.constant(2, 3, F=1.0, X=1.0)
        inst.G[1, 2] = -0.1
        with pytest.raises(ValueError, match="G must be nonnegative"):
            check_hypothesis(inst)
        inst = GronwallInstance.constant(2, 3, F=1.0, M=0.5, X=1.0)
        with pytest.raises(ValueError, match="M_0"):
            check_hypothesis(inst)

    def test_q_alpha_constraint(self):
        with pytest.raises(ValueError, match="q \\* alpha"):
            gronwall_check(GronwallInstance.constant(2, 3), 0.8, 1.5)

    @given(st.integers(0, 2**32 - 1))
    def test_generator_satisfies_hypothesis(self, seed):
        inst = generate_instance(np.random.default_rng(seed), 50, 8)
        check_hypothesis(inst)

    def test_generated_martingale_is_centred(self):
        inst = generate_instance(np.random.default_rng(0), 20000, 10)
        m = inst.M[:, -1]
        assert abs(m.mean()) <= 4 * m.std() / math.sqrt(len(m))

    def test_suite_small(self):
        suite = gronwall_suite(3, instances=50, samples=200)
        assert suite.passed and suite.summary() == "50/50 hold"
        ratios = [r.lhs / r.rhs for r in suite.results if r.rhs > 0]
        assert max(ratios) < 1
