"""Log-Euler simulation of the frozen dynamics."""

import math
from dataclasses import replace

import numpy as np
import pytest

from ddsvlmm.market import ModelParams, build_swap_geometry
from ddsvlmm.montecarlo import SimConfig, mc_price_and_ci, simulate_swap_rate

from test_oracle import integrated_variance


class TestSimulation:
    def test_martingale_mean(self, geom_5x10, params_moderate):
        cfg = SimConfig(paths=200_000, steps_per_year=12, seed=11)
        sample = simulate_swap_rate(geom_5x10, params_moderate, cfg)
        stderr = float(np.std(sample, ddof=1) / math.sqrt(sample.size))
        assert abs(float(np.mean(sample)) - geom_5x10.swap_rate) < 3.0 * stderr

    def test_small_eps_variance(self, curve, params_moderate):
        params = replace(params_moderate, epsilon=1e-6)
        geom = build_swap_geometry(curve, params, 5, 15)
        cfg = SimConfig(paths=200_000, steps_per_year=12, seed=5)
        sample = simulate_swap_rate(geom, params, cfg)
        var = float(np.var(sample, ddof=1))
        target = integrated_variance(geom, params)
        # variance of the sample variance for near-normal data: 2 sigma^4/n
        stderr = math.sqrt(2.0 / sample.size) * target
        assert abs(var - target) < 3.0 * stderr

    def test_fixed_seed_bit_identical(self, geom_5x10, params_moderate):
        cfg = SimConfig(paths=5000, steps_per_year=12, seed=123)
        s1 = simulate_swap_rate(geom_5x10, params_moderate, cfg)
        s2 = simulate_swap_rate(geom_5x10, params_moderate, cfg)
        assert np.array_equal(s1, s2)

    def test_correlation_wiring_sign(self, curve, params_moderate):
        # total increments (R_T - R_0, V-path effect) inherit the sign of rho
        for rho in (-0.7, 0.7):
            params = replace(params_moderate, rho=rho, epsilon=0.8, kappa=1.5,
                             theta=1.0)
            geom = build_swap_geometry(curve, params, 2, 12)
            cfg = SimConfig(paths=50_000, steps_per_year=12, seed=31)
            sample = simulate_swap_rate(geom, params, cfg)
            # skewness of the terminal rate carries the correlation sign
            z = sample - np.mean(sample)
            skew = float(np.mean(z**3) / np.std(z) ** 3)
            assert math.copysign(1.0, skew) == math.copysign(1.0, rho)

    def test_antithetic_needs_even_paths(self):
        with pytest.raises(ValueError):
            SimConfig(paths=5001, antithetic=True)

    def test_antithetic_runs(self, geom_5x10, params_moderate):
        cfg = SimConfig(paths=4000, steps_per_year=12, seed=2, antithetic=True)
        sample = simulate_swap_rate(geom_5x10, params_moderate, cfg)
        assert sample.size == 4000


class TestPriceAndCI:
    def test_degenerate_sample_flagged(self, geom_5x10):
        v = geom_5x10.swap_rate + 0.004
        res = mc_price_and_ci(np.full(100, v), geom_5x10, geom_5x10.swap_rate)
        assert res.degenerate
        assert res.ci_low == res.ci_high == res.price
        expected = geom_5x10.annuity * 0.004
        assert res.price == pytest.approx(expected, rel=1e-14)

    def test_forward_payoff_parity(self, geom_5x10, params_moderate):
        cfg = SimConfig(paths=20_000, steps_per_year=12, seed=8)
        sample = simulate_swap_rate(geom_5x10, params_moderate, cfg)
        strike = float(np.min(sample)) - 0.01  # every path in the money
        res = mc_price_and_ci(sample, geom_5x10, strike)
        expected = geom_5x10.annuity * (float(np.mean(sample)) - strike)
        assert res.price == pytest.approx(expected, rel=1e-12)

    def test_empty_sample_raises(self, geom_5x10):
        with pytest.raises(ValueError):
            mc_price_and_ci(np.array([]), geom_5x10, 0.02)

    def test_step_refinement_converges_toward_contour(self, curve):
        # weak-convergence direction: doubling steps halves the log-Euler
        # bias against the contour benchmark (O(dt) scheme)
        import math
        from ddsvlmm.mgf import psi_derivatives_at_zero
        from ddsvlmm.oracle import contour_price

        params = replace(
            ModelParams(
                a=0.05, b=0.09, c=0.44, d=0.11, kappa=1.0, theta=1.0,
                epsilon=0.6, rho=-0.45, delta=0.02, v0=1.0,
            )
        )
        geom = build_swap_geometry(curve, params, 5, 10)
        nu = math.sqrt(psi_derivatives_at_zero(geom, params).variance)
        strike = geom.swap_rate + 0.005
        ref = contour_price(geom, params, strike, nu=nu).price

        def avg_bias(steps):
            prices = [
                mc_price_and_ci(
                    simulate_swap_rate(
                        geom, params,
                        SimConfig(paths=200_000, steps_per_year=steps, seed=seed),
                    ),
                    geom,
                    strike,
                ).price
                for seed in range(1, 7)
            ]
            return abs(float(np.mean(prices)) - ref)

        assert avg_bias(8) < avg_bias(4)

    def test_ci_width_scales_with_paths(self, geom_5x10, params_moderate):
        widths = []
        for paths in (5000, 50_000):
            cfg = SimConfig(paths=paths, steps_per_year=12, seed=77)
            sample = simulate_swap_rate(geom_5x10, params_moderate, cfg)
            res = mc_price_and_ci(sample, geom_5x10, geom_5x10.swap_rate)
            widths.append(res.ci_high - res.ci_low)
        ratio = widths[0] / widths[1]
        assert 2.5 < ratio < 4.1  # ~ sqrt(10)
