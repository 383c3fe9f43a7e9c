import math

import numpy as np
import pytest

from sdesobol.model import OuModel, SdeModel, UncertainParam
from sdesobol.montecarlo import (
    EulerConfig,
    ExitTimeKernel,
    PathTruncationError,
    SurvivalKernel,
    boundary_shift,
    double_mc_sobol,
    double_mc_sobol_suite,
    inner_average,
    kernel_values,
    philox_stream,
    simulate_exit_time,
    simulate_survival,
)
from sdesobol.sobol import DegenerateVarianceError


def brownian_model(sbar):
    return OuModel(mu1=0.0, sigma1=0.0, mu2=sbar, sigma2=0.0)


def table1_model():
    return OuModel(mu1=1.0, sigma1=0.2, mu2=9.0, sigma2=0.2)


Z_MID = np.array([0.5, 0.5])


def survival_series(t, x, sbar, kmax=199):
    return sum(
        4.0 / (k * math.pi) * math.sin(k * math.pi * x / 10.0)
        * math.exp(-sbar ** 2 * k ** 2 * math.pi ** 2 * t / 200.0)
        for k in range(1, kmax + 1, 2)
    )


class TestBoundaryShift:
    def test_formula(self):
        cfg = EulerConfig(dt=1e-3)
        assert boundary_shift(9.0, cfg) == pytest.approx(0.5826 * 9.0 * math.sqrt(1e-3))

    def test_dt_halving_scales_by_inverse_sqrt2(self):
        c1 = boundary_shift(9.0, EulerConfig(dt=1e-3))
        c2 = boundary_shift(9.0, EulerConfig(dt=5e-4))
        assert c2 / c1 == pytest.approx(1.0 / math.sqrt(2.0))

    def test_override_disables_shift(self):
        cfg = EulerConfig(dt=1e-3, boundary_shift_const=0.0)
        assert boundary_shift(9.0, cfg) == 0.0


class TestExitTime:
    def test_immediate_exit_near_boundary(self):
        cfg = EulerConfig(dt=1e-3, seed=1)
        rng = philox_stream(1, 1)
        c = boundary_shift(9.0, cfg)
        t = simulate_exit_time(brownian_model(9.0), Z_MID, 0.5 * c, cfg, rng)
        assert t == 0.0

    def test_times_are_step_multiples(self):
        cfg = EulerConfig(dt=1e-3, seed=2)
        rng = philox_stream(2, 1)
        vals = kernel_values(table1_model(), Z_MID, 500, ExitTimeKernel(5.0), cfg, rng)
        assert np.all(vals >= 0.0)
        steps = vals / cfg.dt
        assert np.allclose(steps, np.round(steps))

    def test_brownian_mean_exit_time(self):
        # E[tau] = x (10 - x) / sigma^2 = 25/81 from the elliptic closed form
        cfg = EulerConfig(dt=1e-3, seed=3)
        rng = philox_stream(3, 1)
        vals = kernel_values(brownian_model(9.0), Z_MID, 30_000, ExitTimeKernel(5.0), cfg, rng)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - 25.0 / 81.0) < 3.0 * se

    def test_boundary_shift_beats_naive_scheme(self):
        model = brownian_model(9.0)
        means = {}
        for label, const in (("shifted", 0.5826), ("naive", 0.0)):
            cfg = EulerConfig(dt=1e-3, seed=4, boundary_shift_const=const)
            rng = philox_stream(4, 1)
            vals = kernel_values(model, Z_MID, 40_000, ExitTimeKernel(5.0), cfg, rng)
            means[label] = vals.mean()
        true_val = 25.0 / 81.0
        assert abs(means["shifted"] - true_val) < abs(means["naive"] - true_val)
        # the naive scheme overestimates exit times by O(sqrt(dt))
        assert means["naive"] - true_val > 0.01

    def test_truncation_is_an_error(self):
        cfg = EulerConfig(dt=1e-3, seed=5, max_steps=10)
        rng = philox_stream(5, 1)
        with pytest.raises(PathTruncationError) as excinfo:
            kernel_values(brownian_model(2.0), Z_MID, 200, ExitTimeKernel(5.0), cfg, rng)
        assert excinfo.value.n_truncated > 0

    def test_generic_engine_agrees_with_affine_fast_path(self):
        # same dynamics through the generic per-step walk: means agree
        sbar = 9.0
        generic = SdeModel(
            drift=lambda x, z: np.zeros_like(np.asarray(x, dtype=float)),
            diffusion=lambda x, z: sbar * np.ones_like(np.asarray(x, dtype=float)),
            params=(UncertainParam("xi1", 0), UncertainParam("xi2", 1)),
            domain=(0.0, 10.0),
        )
        cfg = EulerConfig(dt=2e-3, seed=6)
        fast = kernel_values(brownian_model(sbar), Z_MID, 20_000,
                             ExitTimeKernel(5.0), cfg, philox_stream(6, 1))
        slow = kernel_values(generic, Z_MID, 20_000,
                             ExitTimeKernel(5.0), cfg, philox_stream(6, 2))
        se = math.hypot(fast.std(ddof=1) / math.sqrt(fast.size),
                        slow.std(ddof=1) / math.sqrt(slow.size))
        assert abs(fast.mean() - slow.mean()) < 3.5 * se


class TestSurvival:
    def test_short_horizon_is_one(self):
        cfg = EulerConfig(dt=1e-3, seed=7)
        rng = philox_stream(7, 1)
        v = simulate_survival(brownian_model(9.0), Z_MID, 5.0, 1e-3, cfg, rng)
        assert v == 1.0

    def test_values_are_proportions(self):
        cfg = EulerConfig(dt=2e-3, seed=8)
        rng = philox_stream(8, 1)
        vals = kernel_values(table1_model(), Z_MID, 2000,
                             SurvivalKernel(5.0, 0.2), cfg, rng)
        assert set(np.unique(vals)) <= {0.0, 1.0}

    def test_brownian_survival_matches_series(self):
        cfg = EulerConfig(dt=2e-3, seed=9)
        rng = philox_stream(9, 1)
        vals = kernel_values(brownian_model(2.0), Z_MID, 30_000,
                             SurvivalKernel(1.0, 0.3), cfg, rng)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert vals.mean() == pytest.approx(survival_series(0.3, 1.0, 2.0), abs=4 * se)

    def test_terminal_functional(self):
        # f(x) = x / 10 on survivors: mean below the survival probability
        cfg = EulerConfig(dt=2e-3, seed=10)
        f = lambda x: x / 10.0
        with_f = kernel_values(brownian_model(2.0), Z_MID, 5000,
                               SurvivalKernel(5.0, 0.3, f=f), cfg, philox_stream(10, 1))
        indicator = kernel_values(brownian_model(2.0), Z_MID, 5000,
                                  SurvivalKernel(5.0, 0.3), cfg, philox_stream(10, 1))
        assert np.all(with_f <= indicator)
        assert 0.0 < with_f.mean() < indicator.mean()

    def test_horizon_must_be_step_multiple(self):
        cfg = EulerConfig(dt=3e-4, seed=11)
        with pytest.raises(ValueError):
            kernel_values(brownian_model(2.0), Z_MID, 10,
                          SurvivalKernel(5.0, 0.0005), cfg, philox_stream(11, 1))


class TestInnerAverage:
    def test_single_replication_is_one_draw(self):
        cfg = EulerConfig(dt=1e-3, seed=12)
        v1 = inner_average(table1_model(), Z_MID, 1, ExitTimeKernel(5.0), cfg,
                           philox_stream(12, 3))
        v2 = simulate_exit_time(table1_model(), Z_MID, 5.0, cfg, philox_stream(12, 3))
        assert v1 == v2

    def test_bitwise_reproducible(self):
        cfg = EulerConfig(dt=1e-3, seed=13)
        a = inner_average(table1_model(), Z_MID, 500, ExitTimeKernel(5.0), cfg,
                          philox_stream(13, 5))
        b = inner_average(table1_model(), Z_MID, 500, ExitTimeKernel(5.0), cfg,
                          philox_stream(13, 5))
        assert a == b

    def test_variance_scales_inversely_with_replications(self):
        # CLT: var(inner_average) ~ 1/M; regression slope in log-log is -1
        model = brownian_model(9.0)
        cfg = EulerConfig(dt=2e-3, seed=14)
        ms = [100, 400, 1600]
        reps = 80
        variances = []
        tag = 100
        for m_inner in ms:
            vals = []
            for _ in range(reps):
                tag += 1
                vals.append(inner_average(model, Z_MID, m_inner,
                                          ExitTimeKernel(5.0), cfg,
                                          philox_stream(14, tag)))
            variances.append(np.var(vals, ddof=1))
        slope = np.polyfit(np.log(ms), np.log(variances), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.1)


class TestDoubleMcSobol:
    # wide diffusion uncertainty: the parametric variance dominates the inner
    # noise even at small sample sizes
    @staticmethod
    def wide_model():
        return OuModel(mu1=1.0, sigma1=0.2, mu2=3.0, sigma2=0.5)

    def test_deterministic_under_fixed_seed_and_threads(self):
        model = self.wide_model()
        cfg = EulerConfig(dt=2e-3, seed=15)
        runs = []
        for threads in (1, 2, 8):
            est, samples = double_mc_sobol(model, {1}, 40, 50, ExitTimeKernel(5.0),
                                           cfg, threads=threads, collect_samples=True)
            runs.append((est.estimate, samples))
        assert runs[0][0] == runs[1][0] == runs[2][0]
        assert np.array_equal(runs[0][1], runs[1][1])
        assert np.array_equal(runs[0][1], runs[2][1])

    def test_suite_shares_design_with_single_call(self):
        model = self.wide_model()
        cfg = EulerConfig(dt=2e-3, seed=16)
        single, _ = double_mc_sobol(model, {1}, 30, 40, ExitTimeKernel(5.0), cfg)
        suite, _ = double_mc_sobol_suite(model, [{1}], 30, 40, ExitTimeKernel(5.0), cfg)
        assert single.estimate == suite[0].estimate

    def test_reports_evaluation_count(self):
        model = self.wide_model()
        cfg = EulerConfig(dt=2e-3, seed=17)
        ests, _ = double_mc_sobol_suite(model, [{1}, {2}], 30, 40,
                                        ExitTimeKernel(5.0), cfg)
        # shared B side: (1 + #index sets) * N * M kernel draws
        assert all(e.n_evaluations == 3 * 30 * 40 for e in ests)
        assert all(e.stderr is not None and e.inner_noise_var is not None for e in ests)

    def test_deterministic_model_degenerate_variance(self):
        model = OuModel(mu1=1.0, sigma1=0.0, mu2=9.0, sigma2=0.0)
        cfg = EulerConfig(dt=2e-3, seed=18)
        with pytest.raises(DegenerateVarianceError):
            double_mc_sobol(model, {1}, 200, 100, ExitTimeKernel(5.0), cfg)

    def test_input_validation(self):
        model = table1_model()
        cfg = EulerConfig(dt=2e-3, seed=19)
        with pytest.raises(ValueError):
            double_mc_sobol(model, {1}, 1, 50, ExitTimeKernel(5.0), cfg)
        with pytest.raises(ValueError):
            double_mc_sobol(model, set(), 10, 50, ExitTimeKernel(5.0), cfg)


class TestEulerConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EulerConfig(dt=0.0)
        with pytest.raises(ValueError):
            EulerConfig(dt=1e-3, max_steps=0)

    def test_philox_streams_disjoint(self):
        a = philox_stream(42, 1).random(8)
        b = philox_stream(42, 2).random(8)
        assert not np.array_equal(a, b)
        again = philox_stream(42, 1).random(8)
        assert np.array_equal(a, again)
