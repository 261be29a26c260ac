import math

import numpy as np
import pytest
from scipy import special as sp

from cellseff.quadrature import QuadratureSpec, integrate
from cellseff.special import (EULER_GAMMA, SeriesError, e1_scaled, erf,
                              exp_integral_en, gamma_star_series, gauss_2f1,
                              hyp2f1_nonpos, kummer_1f1, lower_gamma,
                              lower_gamma_continued, reg_lower_gamma,
                              sinc_norm)


class TestExpIntegral:
    def test_at_zero(self):
        assert exp_integral_en(3, 0.0) == pytest.approx(0.5)
        assert exp_integral_en(2, 0.0) == pytest.approx(1.0)

    def test_e1_reference_point(self):
        # independent oracle: quadrature of the defining integral
        direct = integrate(lambda t: t ** -1.0 * np.exp(-t), 1.0, math.inf,
                           QuadratureSpec(1e-13, 1e-12, 4000))
        assert exp_integral_en(1, 1.0) == pytest.approx(0.2193839, abs=1e-7)
        assert exp_integral_en(1, 1.0) == pytest.approx(direct, rel=1e-11)

    def test_small_x_expansion(self):
        # E_1(x) ~ -gamma - ln x for x -> 0
        x = 1e-6
        assert exp_integral_en(1, x) == pytest.approx(
            -EULER_GAMMA - math.log(x) + x, rel=1e-9)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 8])
    def test_relative_error_against_scipy(self, n):
        xs = np.geomspace(1e-8, 700.0, 400)
        ref = sp.exp1(xs) if n == 1 else sp.expn(n, xs)
        rel = np.abs(exp_integral_en(n, xs) - ref) / ref
        assert rel.max() < 1e-10

    def test_recurrence(self):
        # n E_{n+1}(x) = e^-x - x E_n(x)
        xs = np.linspace(0.1, 10.0, 34)
        for n in (1, 2, 3, 5):
            lhs = n * exp_integral_en(n + 1, xs)
            rhs = np.exp(-xs) - xs * exp_integral_en(n, xs)
            assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_quadrature_cross_check_of_defining_integral(self):
        for n, x in [(2, 0.7), (3, 2.5), (1, 5.0)]:
            direct = integrate(lambda t: t ** -float(n) * np.exp(-x * t),
                               1.0, math.inf, QuadratureSpec(1e-13, 1e-12, 4000))
            assert exp_integral_en(n, x) == pytest.approx(direct, rel=1e-10)

    def test_underflow_and_domain(self):
        assert exp_integral_en(1, 800.0) == 0.0
        with pytest.raises(ValueError):
            exp_integral_en(1, 0.0)
        with pytest.raises(ValueError):
            exp_integral_en(2, -1.0)

    def test_scaled_form_matches(self):
        xs = np.geomspace(1e-9, 1e9, 120)
        vals = e1_scaled(xs)
        ref = np.exp(xs[xs < 700]) * sp.exp1(xs[xs < 700])
        assert np.max(np.abs(vals[xs < 700] - ref) / ref) < 1e-10


class TestIncompleteGamma:
    def test_series_at_zero(self):
        assert gamma_star_series(-0.5, 0.0) == pytest.approx(-2.0)

    def test_root_condition_at_tabulated_value(self):
        # the tabulated lower-tail constant satisfies the root equation
        assert abs(gamma_star_series(-0.5, -0.854)) < 5e-4

    def test_lower_gamma_erf_identity(self):
        assert lower_gamma(0.5, 1.0) == pytest.approx(
            math.sqrt(math.pi) * math.erf(1.0), rel=1e-12)
        assert lower_gamma(0.5, 1.0) == pytest.approx(1.493648, abs=1e-6)

    def test_series_and_continued_fraction_agree_with_scipy(self):
        for a in (0.3, 0.5, 0.9):
            xs = np.geomspace(1e-6, 50.0, 60)
            ref = sp.gammainc(a, xs)
            assert np.max(np.abs(reg_lower_gamma(a, xs) - ref)) < 1e-12

    def test_continuation_matches_positive_branch(self):
        for a, x in [(0.5, 1.0), (-0.5, 2.0), (0.25, 0.3)]:
            series = lower_gamma_continued(a, x)
            ref = float(sp.gammainc(a, x)) * math.gamma(a) if a > 0 else \
                x ** a * gamma_star_series(a, x)
            assert series == pytest.approx(ref, rel=1e-10)

    def test_nonpositive_integer_a_rejected(self):
        with pytest.raises(ValueError):
            gamma_star_series(-1.0, 0.5)

    def test_series_monotone_in_minus_s(self):
        # unique-root guarantee: strictly increasing in -s on s < 0
        ss = -np.linspace(0.05, 4.0, 50)
        vals = [gamma_star_series(-0.5, s) for s in ss]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestHypergeometric:
    def test_empty_series(self):
        assert gauss_2f1(0.3, 2.0, 1.7, 0.0) == 1.0

    def test_log_identity(self):
        assert gauss_2f1(1.0, 1.0, 2.0, 0.5) == pytest.approx(
            -math.log(0.5) / 0.5, rel=1e-12)

    def test_euler_integral_oracle(self):
        # 2F1(a,b;c;z) = B(b, c-b)^-1 int t^(b-1)(1-t)^(c-b-1)(1-zt)^-a dt
        a, b, c, z = 1.0, 1.5, 3.0, -2.44
        coeff = math.gamma(c) / (math.gamma(b) * math.gamma(c - b))
        oracle = coeff * integrate(
            lambda t: t ** (b - 1) * (1 - t) ** (c - b - 1) * (1 - z * t) ** -a,
            0.0, 1.0, QuadratureSpec(1e-13, 1e-12, 4000))
        val = gauss_2f1(a, b, c, z)
        assert val > 0
        assert val == pytest.approx(oracle, rel=1e-9)

    @pytest.mark.parametrize("z", [-5.0, -2.44, -1.0, -0.3, 0.2, 0.55, 0.9, 0.99])
    def test_against_scipy_across_transform_regions(self, z):
        for a, b, c in [(1.0, 1.0, 0.5), (1.0, 1.5, 3.0), (2.0, 2.5, 4.1)]:
            assert gauss_2f1(a, b, c, z) == pytest.approx(
                float(sp.hyp2f1(a, b, c, z)), rel=1e-9)

    def test_pfaff_agrees_with_direct_series(self):
        # both routes converge on (-1/2, 0); they must agree
        for z in np.linspace(-0.45, -0.05, 9):
            direct = gauss_2f1(1.0, 1.5, 3.0, float(z))
            pfaff = (1.0 - z) ** -1.0 * gauss_2f1(1.0, 1.5, 3.0, z / (z - 1.0))
            assert direct == pytest.approx(pfaff, rel=1e-8)

    def test_vectorized_nonpositive_branch(self):
        zs = -np.geomspace(0.01, 30.0, 40)
        vals = hyp2f1_nonpos(1.0, 1.5, 3.0, zs)
        ref = sp.hyp2f1(1.0, 1.5, 3.0, zs)
        assert np.max(np.abs(vals - ref) / np.abs(ref)) < 1e-9

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            gauss_2f1(1.0, 1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            gauss_2f1(1.0, 1.0, -2.0, 0.5)


class TestKummer:
    def test_at_zero(self):
        assert kummer_1f1(0.7, 1.3, 0.0) == 1.0

    def test_erf_identity(self):
        assert kummer_1f1(0.5, 1.5, -1.0) == pytest.approx(
            math.sqrt(math.pi) * math.erf(1.0) / 2.0, rel=1e-10)
        assert kummer_1f1(0.5, 1.5, -1.0) == pytest.approx(0.7468241, abs=1e-7)

    def test_partial_sum_oracle(self):
        a, b, z = 0.5, 1.5, -0.25
        term, total = 1.0, 1.0
        for k in range(200):
            term *= (a + k) / (b + k) * z / (k + 1.0)
            total += term
        assert kummer_1f1(a, b, z) == pytest.approx(total, rel=1e-12)

    def test_against_scipy(self):
        for z in (-10.0, -3.0, -0.5, 0.5, 4.0, 10.0):
            assert kummer_1f1(0.5, 1.5, z) == pytest.approx(
                float(sp.hyp1f1(0.5, 1.5, z)), rel=1e-10)


def test_erf_and_sinc():
    assert erf(0.0) == 0.0
    # Taylor-series oracle for erf(1)
    total, term = 0.0, 1.0
    for k in range(0, 30):
        total += (-1) ** k / (math.factorial(k) * (2 * k + 1))
    total *= 2.0 / math.sqrt(math.pi)
    assert erf(1.0) == pytest.approx(total, rel=1e-12)
    assert erf(1.0) == pytest.approx(0.8427008, abs=1e-7)
    assert sinc_norm(0.0) == 1.0
    assert sinc_norm(0.5) == pytest.approx(2.0 / math.pi, rel=1e-12)
