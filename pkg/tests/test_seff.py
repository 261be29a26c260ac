import math

import numpy as np
import pytest

from cellseff.quadrature import QuadratureSpec, integrate
from cellseff.seff import (LognormalFit, MimoConfig, SeCurve, c_mimo,
                           c_mimo_2x2_approx, c_siso, c_siso_approx,
                           coverage_quantile, coverage_tail, curve_from_key,
                           inst_coverage_se_eta4, inst_sir_cdf_eta4,
                           lognormal_fit, mean_se, mean_se_2x2_closed_eta4,
                           mean_se_cub, mean_se_general, mimo_2x2_approx_curve,
                           mimo_curve, rho_from_c, se_cdf, se_quantile,
                           siso_approx_curve, siso_exact_curve)
from cellseff.seff import mean_se_2x2_approx_analytic, _expint_weights
from cellseff.sirdist import OMNI, PathModel, SectorModel, sir_cdf
from cellseff.special import LOG2E, exp_integral_en

LOG2_E = math.log2(math.e)


class TestSisoCurve:
    def test_low_snr_limit(self):
        rho = 1e-6
        assert c_siso(rho) == pytest.approx(rho * LOG2_E, rel=1e-4)

    def test_reference_value(self):
        assert c_siso(1.0) == pytest.approx(
            math.e * 0.2193839343955 * LOG2_E, rel=1e-10)
        assert c_siso(1.0) == pytest.approx(0.86035, abs=2e-5)

    def test_approx_within_three_percent_at_one(self):
        approx = c_siso_approx(1.0)
        assert approx == pytest.approx(0.8384, abs=1e-4)
        assert abs(approx - c_siso(1.0)) / c_siso(1.0) < 0.03

    def test_approx_relative_error_band(self):
        # envelope recorded from the sweep: the fit's low-SNR slope is
        # 1.4 * 0.82 instead of log2 e, a structural ~20% floor as rho -> 0
        rhos = np.geomspace(0.01, 1000.0, 200)
        rel = np.abs(c_siso(rhos) - c_siso_approx(rhos)) / c_siso(rhos)
        assert rel.max() <= 0.20
        assert rel[rhos >= 0.5].max() <= 0.08

    def test_exact_algebraic_inverse(self):
        for rho in (0.1, 1.0, 10.0):
            assert rho_from_c(c_siso_approx(rho)) == pytest.approx(rho, rel=1e-12)
        assert rho_from_c(0.84) == pytest.approx(
            (math.exp(0.6) - 1.0) / 0.82, rel=1e-12)
        assert rho_from_c(0.84) == pytest.approx(1.0026, abs=1e-4)

    def test_no_overflow_at_tiny_rho(self):
        assert np.isfinite(c_siso(1e-9))


class TestMimoCurve:
    def test_siso_reduction(self):
        cfg = MimoConfig(1, 1)
        for rho in (0.5, 2.0, 20.0):
            assert c_mimo(cfg, rho) == pytest.approx(c_siso(rho), rel=1e-12)

    def test_2x2_printed_forms_agree(self):
        cfg = MimoConfig(2, 2)
        for rho in (0.3, 1.0, 3.0, 30.0):
            x = 2.0 / rho
            form1 = 2.0 * math.exp(x) * (exp_integral_en(1, x)
                                         + exp_integral_en(3, x)) * LOG2_E
            assert c_mimo(cfg, rho) == pytest.approx(form1, rel=1e-9)

    def test_expint_weights_2x2(self):
        # the regrouped weights must reproduce the printed 2 (E1 + E3) form
        w = _expint_weights(MimoConfig(2, 2))
        assert w == pytest.approx([2.0, 0.0, 2.0])

    def test_low_snr_scaling_with_receive_antennas(self):
        for nt, nr in ((2, 4), (4, 2), (1, 3)):
            cfg = MimoConfig(nt, nr)
            slope = c_mimo(cfg, 1e-4) / 1e-4
            assert abs(slope - nr * LOG2_E) <= 0.05 * nr * LOG2_E

    def test_high_snr_multiplexing_slope(self):
        # per-octave growth approaches min(nt, nr) bits at huge SNR
        for nt, nr in ((2, 2), (2, 3), (4, 4)):
            cfg = MimoConfig(nt, nr)
            rho = 1e6
            slope = (c_mimo(cfg, 4 * rho) - c_mimo(cfg, rho)) / 2.0
            m = min(nt, nr)
            assert abs(slope - m) <= 0.05 * m

    def test_symmetry_not_assumed(self):
        # the formula is antenna-role aware: (1,2) and (2,1) differ
        assert c_mimo(MimoConfig(1, 2), 1.0) != pytest.approx(
            c_mimo(MimoConfig(2, 1), 1.0), rel=1e-3)

    def test_2x2_approx(self):
        val = c_mimo_2x2_approx(10.0)
        ref = 2.8 * math.log(5.1) + math.exp(-0.1) * LOG2_E
        assert val == pytest.approx(ref, rel=1e-12)
        assert val == pytest.approx(5.867, abs=1e-3)
        assert c_mimo_2x2_approx(1e-6) < 1e-4

    def test_2x2_approx_error_band(self):
        # envelope recorded from the sweep; the fit is built for integration
        # against the SIR density, not for pointwise low-SNR accuracy
        cfg = MimoConfig(2, 2)
        rhos = np.geomspace(0.1, 100.0, 120)
        rel = np.abs(c_mimo(cfg, rhos) - c_mimo_2x2_approx(rhos)) / c_mimo(cfg, rhos)
        assert rel.max() <= 0.58
        assert rel[rhos >= 2.0].max() <= 0.07

    def test_validation(self):
        with pytest.raises(ValueError):
            MimoConfig(0, 2)
        with pytest.raises(ValueError):
            MimoConfig(9, 2)
        with pytest.raises(ValueError):
            c_mimo(MimoConfig(2, 2), 0.0)


class TestCurves:
    @pytest.mark.parametrize("key", ["siso", "siso-approx", "mimo:2x2",
                                     "mimo:2x4", "mimo-2x2-approx"])
    def test_strictly_increasing_and_invertible(self, key):
        curve = curve_from_key(key)
        rhos = np.geomspace(1e-6, 1e6, 200)
        vals = np.array([curve(r) for r in rhos])
        assert np.all(np.diff(vals) > 0)
        for rho in (1e-3, 0.7, 42.0, 1e4):
            c = curve(rho)
            assert curve.inverse(c) == pytest.approx(rho, rel=1e-6)

    def test_low_snr_slope_invariant(self):
        # holds for the exact curves; the logarithmic fits trade away the
        # low-SNR slope by construction
        for key in ("siso", "mimo:2x2", "mimo:2x4", "mimo:4x2", "mimo:3x3"):
            curve = curve_from_key(key)
            slope = curve(1e-4) / 1e-4
            target = curve.n_rx * LOG2_E
            assert abs(slope - target) <= 0.05 * target

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            curve_from_key("massive-mimo")


class TestSeCdf:
    def test_zero(self, m4, siso_curve):
        assert se_cdf(m4, siso_curve, 0.0) == 0.0

    def test_eta4_approx_anchor(self, m4):
        val = se_cdf(m4, siso_approx_curve(), 0.84)
        ref = 1.0 - (2.0 / math.pi) * math.sqrt(0.82 / (math.exp(0.6) - 1.0))
        assert val == pytest.approx(ref, rel=1e-9)
        assert val == pytest.approx(0.3642, abs=1e-4)

    def test_consistent_with_sir_cdf(self, m4, siso_curve):
        for theta in (0.2, 0.7, 2.0, 9.0):
            gamma = c_siso(theta)
            assert se_cdf(m4, siso_curve, gamma) == pytest.approx(
                sir_cdf(m4, theta), abs=1e-8)

    def test_nondecreasing_and_sector_cap(self, m4, siso_curve):
        sect = SectorModel.from_db(3, 20.0)
        gammas = np.linspace(0.0, 8.0, 300)
        vals = se_cdf(m4, siso_curve, gammas, sect)
        assert np.all(np.diff(vals) >= -1e-12)
        cap_se = siso_curve(sect.sir_cap)
        assert se_cdf(m4, siso_curve, cap_se, sect) == 1.0
        assert se_cdf(m4, siso_curve, cap_se + 1.0, sect) == 1.0


class TestCoverage:
    def test_tail_eta4_approximation(self, m4):
        # 1.15 s* ~ -1 at eta = 4, so the tail is about exp(-1/gamma)
        val = coverage_tail(m4, 1, 0.217)
        assert val == pytest.approx(0.01, abs=2e-3)
        assert val == pytest.approx(math.exp(1.15 * m4.s_star / 0.217), rel=1e-12)

    def test_tail_antenna_scaling(self, m4):
        assert coverage_tail(m4, 2, 0.4) == pytest.approx(
            coverage_tail(m4, 1, 0.2), rel=1e-12)

    def test_tail_validity_warning(self, m4):
        with pytest.warns(UserWarning):
            coverage_tail(m4, 1, 100.0)

    def test_quantile_examples(self, m4):
        assert coverage_quantile(m4, 1, 0.01) == pytest.approx(0.22, abs=0.01)
        assert coverage_quantile(m4, 2, 0.01) == pytest.approx(
            2.0 * coverage_quantile(m4, 1, 0.01), rel=1e-12)
        with pytest.raises(ValueError):
            coverage_quantile(m4, 1, 0.5)

    def test_exact_inversion(self, m4, siso_curve):
        assert se_quantile(m4, siso_curve, 0.01) == pytest.approx(0.24, abs=0.01)

    def test_tail_close_to_cdf_at_small_gamma(self, m4):
        # deep-tail probabilities are exponentially sensitive, so the
        # meaningful comparison is between the log-probabilities
        curve = siso_approx_curve()
        for gamma in np.linspace(0.01, 0.2, 14):
            tail = coverage_tail(m4, 1, float(gamma))
            cdf = se_cdf(m4, curve, float(gamma))
            assert abs(math.log(tail) / math.log(cdf) - 1.0) <= 0.10


class TestInstantaneousSir:
    def test_zero_and_slope(self):
        assert inst_sir_cdf_eta4(0.0) == 0.0
        theta = 1e-6
        assert inst_sir_cdf_eta4(theta) / theta == pytest.approx(1.0, abs=1e-3)

    def test_reference_value(self):
        theta = 1.0
        ref = 1.0 - 1.0 / (1.0 + math.atan(1.0))
        assert inst_sir_cdf_eta4(theta) == pytest.approx(ref, rel=1e-12)

    def test_misleading_coverage_mapping(self):
        assert inst_coverage_se_eta4(0.01) == pytest.approx(0.014, abs=1e-3)


class TestLognormalFit:
    def test_paper_anchor_2x2(self, m4, curve_2x2):
        fit = lognormal_fit(m4, curve_2x2)
        assert fit.mu == pytest.approx(0.92, abs=0.02)
        assert fit.sigma2 == pytest.approx(0.80, abs=0.03)

    def test_degenerate_constant_curve(self, m4):
        flat = SeCurve("const", 1,
                       lambda r: 3.0 * np.ones_like(np.asarray(r, dtype=float)))
        fit = lognormal_fit(m4, flat)
        assert fit.mu == pytest.approx(math.log(3.0), abs=1e-9)
        assert fit.sigma2 == pytest.approx(0.0, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            LognormalFit(0.0, -1.0)


class TestMeanSe:
    def test_siso_eta4(self, m4, siso_curve):
        assert mean_se(m4, siso_curve) == pytest.approx(1.99, abs=0.02)

    def test_2x2_eta4(self, m4, curve_2x2):
        assert mean_se(m4, curve_2x2) == pytest.approx(3.84, abs=0.02)

    def test_closed_form_2x2(self, m4, curve_2x2):
        closed = mean_se_2x2_closed_eta4()
        assert closed == pytest.approx(3.84, abs=0.02)
        assert closed == pytest.approx(mean_se(m4, curve_2x2), abs=0.02)

    def test_2x2_approx_curve_routes_agree(self, m4):
        # quadrature of the approximate curve vs its closed-form integral
        quad = mean_se(m4, mimo_2x2_approx_curve())
        analytic = mean_se_2x2_approx_analytic(m4)
        assert quad == pytest.approx(analytic, abs=1e-3)

    def test_four_vs_three_branch_bracket(self, m4, siso_curve):
        three = mean_se(m4, siso_curve)
        four = mean_se(m4, siso_curve, density_mode="four")
        assert abs(four - three) <= 0.03
        assert min(three, four) < 2.01 < max(three, four) + 0.03

    def test_sector_averages_eta38(self, m38, siso_curve, curve_2x2):
        sect = SectorModel.from_db(3, 20.0)
        per_sector = mean_se(m38, siso_curve, sect=sect)
        assert per_sector == pytest.approx(1.53, abs=0.02)
        assert 3 * per_sector == pytest.approx(4.59, abs=0.06)
        per_sector_m = mean_se(m38, curve_2x2, sect=sect)
        assert per_sector_m == pytest.approx(2.95, abs=0.03)
        assert 3 * per_sector_m == pytest.approx(8.85, abs=0.09)

    def test_sector_multipliers_eta38(self, m38, siso_curve, curve_2x2):
        sect = SectorModel.from_db(3, 20.0)
        mult_siso = 3 * mean_se(m38, siso_curve, sect=sect) / mean_se(m38, siso_curve)
        mult_mimo = 3 * mean_se(m38, curve_2x2, sect=sect) / mean_se(m38, curve_2x2)
        assert mult_siso == pytest.approx(2.50, abs=0.02)
        assert mult_mimo == pytest.approx(2.49, abs=0.02)


class TestMeanSeGeneral:
    def test_reduces_to_siso(self, m4, siso_curve):
        assert mean_se_general(MimoConfig(1, 1), m4) == pytest.approx(
            mean_se(m4, siso_curve), abs=1e-6)

    def test_matches_curve_quadrature_2x2(self, m4, curve_2x2):
        assert mean_se_general(MimoConfig(2, 2), m4) == pytest.approx(
            mean_se(m4, curve_2x2), abs=1e-6)

    @pytest.mark.parametrize("nt,nr,ref", [(1, 1, 1.99), (2, 3, 4.79),
                                           (4, 4, 7.59), (2, 1, 2.13)])
    def test_table_spot_values(self, m4, nt, nr, ref):
        assert mean_se_general(MimoConfig(nt, nr), m4) == pytest.approx(
            ref, abs=0.02)


class TestMeanSeUpperBound:
    def test_integrand_at_zero_is_log2e(self):
        from cellseff.special import gauss_2f1
        assert LOG2E / gauss_2f1(1.0, 1.0, 0.5, 0.0) == pytest.approx(LOG2_E)

    def test_double_integral_oracle(self, m4):
        # independent route: the nested coverage-style double integral
        d = m4.delta
        spec = QuadratureSpec(1e-10, 1e-9, 4000)

        def inner(lo):
            return integrate(lambda x: 1.0 / (1.0 + x ** (1.0 / d)), lo,
                             math.inf, spec)

        def outer(t):
            t = np.atleast_1d(t)
            out = []
            for ti in t:
                if ti > 60.0:
                    out.append(0.0)
                    continue
                g = math.expm1(ti)
                out.append(LOG2_E if g <= 0
                           else LOG2_E / (1.0 + g ** d * inner(g ** -d)))
            return np.array(out)

        dbl = integrate(outer, 0.0, math.inf, QuadratureSpec(1e-8, 1e-7, 2000))
        assert mean_se_cub(m4) == pytest.approx(dbl, abs=1e-4)

    def test_upper_bound_dominates_mean(self, siso_curve):
        for eta in (3.5, 3.6, 3.7, 3.8, 3.9, 4.0, 4.1, 4.2):
            m = PathModel(eta)
            assert mean_se_cub(m) > mean_se(m, siso_curve)
