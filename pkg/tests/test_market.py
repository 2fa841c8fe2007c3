"""Curve/surface ingestion and frozen swap geometry."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsvlmm.errors import CurveParseError, ShiftInfeasibleError, VolSurfaceParseError
from ddsvlmm.market import (
    ModelParams,
    YieldCurve,
    build_swap_geometry,
    effective_coefficients,
    load_curve,
    load_vols,
    precompute_swap_basis,
    swap_rate_from_forwards,
)

from conftest import FIXTURES


class TestLoadCurve:
    def test_flat_curve_forwards(self):
        rows = ["tenor,discount"] + [f"{t},{math.exp(-0.01 * t)}" for t in range(0, 11)]
        curve = load_curve("\n".join(rows))
        expected = math.exp(0.01) - 1.0
        assert np.allclose(curve.forwards(), expected, rtol=1e-12)

    def test_equal_discounts_zero_forward(self):
        curve = load_curve("tenor,discount\n1,0.9\n2,0.9")
        assert curve.forwards()[-1] == 0.0

    def test_fixture_matches_spreadsheet_recompute(self, curve):
        # independent cell-by-cell recompute of (P_j/P_{j+1} - 1) / dT
        text = (FIXTURES / "curve_30y.csv").read_text().strip().splitlines()[1:]
        tenors = [float(r.split(",")[0]) for r in text]
        discounts = [float(r.split(",")[1]) for r in text]
        for j in range(len(tenors) - 1):
            dt = tenors[j + 1] - tenors[j]
            expected = (discounts[j] / discounts[j + 1] - 1.0) / dt
            assert curve.forwards()[j] == pytest.approx(expected, rel=1e-14)

    def test_missing_zero_point_prepended(self):
        curve = load_curve("tenor,discount\n1,0.99\n2,0.97")
        assert curve.tenors[0] == 0.0 and curve.discounts[0] == 1.0

    @pytest.mark.parametrize(
        "body,fragment",
        [
            ("tenor,discount\n1,0.99\nbad row here", "row 3"),
            ("tenor,discount\n1,0.99\n2", "row 3"),
            ("tenor,discount\n2,0.99\n1,0.98", "increasing"),
            ("tenor,discount\n1,-0.5", "row 2"),
            ("foo,bar\n1,0.9", "header"),
        ],
    )
    def test_parse_errors_name_the_row(self, body, fragment):
        with pytest.raises(CurveParseError, match=fragment):
            load_curve(body)


class TestLoadVols:
    def test_atm_literal_and_bp_conversion(self):
        surf = load_vols(
            "expiry,tenor,strike_offset_bp,normal_vol_bp\n5,10,ATM,60\n5,10,-50,63.5\n"
        )
        assert surf.quotes[0].strike_offset_bp is None
        assert surf.quotes[0].normal_vol == pytest.approx(60e-4)
        assert surf.quotes[1].strike_offset_bp == -50.0

    def test_duplicate_key_rejected(self):
        with pytest.raises(VolSurfaceParseError, match="duplicate"):
            load_vols(
                "expiry,tenor,strike_offset_bp,normal_vol_bp\n5,10,ATM,60\n5,10,ATM,61\n"
            )

    def test_non_positive_vol_rejected(self):
        with pytest.raises(VolSurfaceParseError):
            load_vols("expiry,tenor,strike_offset_bp,normal_vol_bp\n5,10,ATM,0\n")


class TestSwapGeometry:
    def test_single_period_swap(self, curve, params_moderate):
        geom = build_swap_geometry(curve, params_moderate, 3, 4)
        f3 = curve.forwards()[3]
        assert geom.alpha == pytest.approx([1.0])
        assert geom.swap_rate == pytest.approx(f3, rel=1e-14)
        assert geom.w[0] == pytest.approx(f3 + params_moderate.delta, rel=1e-12)

    def test_flat_curve_swap_rate_is_flat_forward(self, params_moderate):
        t = np.arange(0, 16.0)
        curve = YieldCurve(t, np.exp(-0.01 * t))
        geom = build_swap_geometry(curve, params_moderate, 2, 12)
        assert geom.swap_rate == pytest.approx(math.exp(0.01) - 1.0, rel=1e-12)

    def test_weight_and_annuity_identities(self, curve, geom_5x10):
        f = curve.forwards()[5:15]
        assert float(np.dot(geom_5x10.alpha, f)) == pytest.approx(
            geom_5x10.swap_rate, rel=1e-12
        )
        deltas = curve.deltas()
        direct = float(np.sum(deltas[5:15] * curve.discounts[6:16]))
        assert geom_5x10.annuity == pytest.approx(direct, rel=1e-12)
        assert np.all(geom_5x10.lam >= 0.0)

    def test_weights_match_finite_differences(self, curve, params_moderate, geom_5x10):
        # central finite differences of the swap-rate formula in each forward
        m, n = 5, 15
        forwards = curve.forwards().copy()
        deltas = curve.deltas()
        h = 1e-6
        for j in range(m, n):
            up, dn = forwards.copy(), forwards.copy()
            up[j] += h
            dn[j] -= h
            r_up, _, _ = swap_rate_from_forwards(up, deltas, m, n)
            r_dn, _, _ = swap_rate_from_forwards(dn, deltas, m, n)
            grad_fd = (r_up - r_dn) / (2.0 * h)
            w_fd = grad_fd * (forwards[j] + params_moderate.delta)
            assert geom_5x10.w[j - m] == pytest.approx(w_fd, rel=1e-8)

    @settings(max_examples=25, deadline=None, derandomize=True)
    @given(scale=st.floats(min_value=0.05, max_value=1.0))
    def test_discount_scaling_invariance(self, scale):
        # scale every discount after T=0 (the type pins P(0,0)=1); all
        # ratio-defined quantities of a swap starting at T_2 are untouched
        t = np.arange(0, 13.0)
        base = np.exp(-0.015 * t)
        params = ModelParams(
            a=0.04, b=0.05, c=0.5, d=0.1,
            kappa=1.0, theta=1.0, epsilon=0.4, rho=-0.2, delta=0.01,
        )
        g1 = build_swap_geometry(YieldCurve(t, base), params, 2, 10)
        scaled = base.copy()
        scaled[1:] *= scale
        g2 = build_swap_geometry(YieldCurve(t, scaled), params, 2, 10)
        assert g2.swap_rate == pytest.approx(g1.swap_rate, rel=1e-12)
        np.testing.assert_allclose(g2.alpha, g1.alpha, rtol=1e-12)
        np.testing.assert_allclose(g2.w, g1.w, rtol=1e-12)
        np.testing.assert_allclose(g2.lam, g1.lam, rtol=1e-12)

    def test_shift_infeasible(self, curve, params_moderate):
        # large negative rates curve; delta = 0 leaves F + delta < 0
        t = np.arange(0, 6.0)
        neg = YieldCurve(t, np.exp(0.02 * t))
        params = replace(params_moderate, delta=0.0)
        with pytest.raises(ShiftInfeasibleError):
            build_swap_geometry(neg, params, 2, 5)


class TestEffectiveCoefficients:
    def test_collinear_factors_reduce_to_scalar(self, curve, params_moderate):
        params = replace(
            params_moderate, factor_angles=np.full(curve.n_forwards, 0.7)
        )
        geom = build_swap_geometry(curve, params, 5, 15)
        basis = precompute_swap_basis(curve, 5, 15)
        t = curve.tenors
        for j in range(geom.n_buckets):
            i = 5 - 1 - j
            g_vals = params.g(t[5:15] - t[i])
            assert geom.lam[j] == pytest.approx(
                abs(float(np.dot(geom.w, g_vals))), rel=1e-12
            )
            assert geom.rho[j] == pytest.approx(params.rho, rel=1e-12)

    def test_epsilon_zero_kills_drift_adjustment(self, curve, params_moderate):
        params = replace(params_moderate, epsilon=1e-30)
        geom = build_swap_geometry(curve, params, 4, 10)
        assert np.allclose(geom.xi, 1.0, atol=1e-25)

    def test_lambda_matches_brute_force_vectors(self, curve, params_moderate, geom_5x10):
        # independent accumulation of sum_j w_j beta_{j-i} g(T_j - T_i)
        basis = precompute_swap_basis(curve, 5, 15)
        angles = params_moderate.angles_for(curve.n_forwards)
        t = curve.tenors
        for bucket in range(geom_5x10.n_buckets):
            i = 5 - 1 - bucket
            vx = vy = 0.0
            for j in range(5, 15):
                gval = params_moderate.g(float(t[j] - t[i]))
                vx += geom_5x10.w[j - 5] * gval * math.cos(angles[j - i])
                vy += geom_5x10.w[j - 5] * gval * math.sin(angles[j - i])
            assert geom_5x10.lam[bucket] == pytest.approx(math.hypot(vx, vy), rel=1e-12)

    def test_per_bucket_op_agrees_with_geometry(self, curve, params_moderate, geom_5x10):
        for bucket in range(geom_5x10.n_buckets):
            lam, rho, xi = effective_coefficients(
                curve, params_moderate, 5, 15, geom_5x10.w, geom_5x10.alpha, bucket
            )
            assert lam == pytest.approx(geom_5x10.lam[bucket], rel=1e-12)
            assert rho == pytest.approx(geom_5x10.rho[bucket], rel=1e-12)
            assert xi == pytest.approx(geom_5x10.xi[bucket], rel=1e-12)
