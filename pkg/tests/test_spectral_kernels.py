"""Closed-form oracles and finiteness classification for the kernel integrals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pamlab import spectral_kernels as sk
from pamlab.errors import DivergentAtZero, InvalidAlpha, InvalidDimension, NotIntegrable

GAUSS = sk.GaussianSpectral(1.0)
RING = sk.mollified_ring(0.5, 2.5)


def rel(a, b):
    return abs(a - b) / abs(b)


class TestPointwiseDensity:
    def test_white_constant(self):
        assert sk.f_hat_eval(sk.White(), 3.7) == 1.0

    def test_gaussian_at_zero(self):
        assert sk.f_hat_eval(GAUSS, 0.0) == 1.0

    def test_bessel_correlation_formula(self):
        assert sk.f_hat_eval(sk.BesselAsCorrelation(4.0), 1.0) == pytest.approx(0.25)

    def test_bessel_spectral_divergent_at_zero(self):
        with pytest.raises(DivergentAtZero):
            sk.f_hat_eval(sk.BesselAsSpectral(2.5), 0.0, d=3)

    def test_mollified_is_square_of_table(self):
        for r in (0.0, 0.7, 1.5, 2.2, 3.0):
            assert sk.f_hat_eval(RING, r) == pytest.approx(RING.phihat(r) ** 2)

    @settings(max_examples=30, deadline=None, derandomize=True)
    @given(st.floats(min_value=0.0, max_value=50.0),
           st.sampled_from([sk.White(), GAUSS, sk.BesselAsCorrelation(2.5),
                            RING, sk.RieszType(1.5, 2.5)]))
    def test_density_nonnegative(self, r, m):
        assert sk.f_hat_eval(m, r) >= 0.0


class TestCorrelation:
    def test_gaussian_d1_small_r_limit(self):
        # r -> 0+ value is 1/(2 sqrt(pi))
        val = sk.correlation_eval(GAUSS, 1, 1e-8)
        assert rel(val, 1.0 / (2.0 * math.sqrt(math.pi))) < 1e-8

    def test_gaussian_closed_form(self):
        # full transform: exp(-r^2/4) / (2 sqrt(pi)) in d=1
        for r in (0.5, 1.0, 2.0):
            exact = math.exp(-r * r / 4.0) / (2.0 * math.sqrt(math.pi))
            assert rel(sk.correlation_eval(GAUSS, 1, r), exact) < 1e-8

    def test_white_not_integrable(self):
        with pytest.raises(NotIntegrable):
            sk.correlation_eval(sk.White(), 1, 1.0)

    def test_bessel_s4_exact_exponential(self):
        # the s=4 kernel on R^3 is exp(-r)/(8 pi)
        val = sk.correlation_eval(sk.BesselAsCorrelation(4.0), 3, 1.0)
        assert rel(val, math.exp(-1.0) / (8.0 * math.pi)) < 1e-8

    def test_bessel_d3_vs_monte_carlo(self):
        # brute-force 3-d Monte Carlo of the inverse transform, importance
        # sampled from the radial density r^2 (1+r^2)^-2 via tabulated inverse CDF
        s, r = 4.0, 1.0
        rng = np.random.default_rng(2024)
        grid = np.linspace(0.0, 400.0, 400001)
        pdf = grid ** 2 / (1.0 + grid ** 2) ** 2
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
        cdf /= cdf[-1]
        u = rng.random(4_000_000)
        rad = np.interp(u, cdf, grid)
        costh = rng.uniform(-1.0, 1.0, rad.size)
        mass = math.pi ** 2  # integral of (1+|xi|^2)^-2 over R^3
        mc = (2.0 * math.pi) ** -3 * mass * np.cos(rad * r * costh).mean()
        val = sk.correlation_eval(sk.BesselAsCorrelation(s), 3, r)
        assert abs(mc - val) < 1e-4


class TestUpsilon:
    def test_white_d1_beta1(self):
        assert rel(sk.upsilon(sk.White(), 1, 1.0), 0.5) < 1e-6

    def test_gaussian_d3(self):
        assert rel(sk.upsilon(GAUSS, 3, 0.0), 1.0 / (4.0 * math.pi ** 1.5)) < 1e-6

    def test_bessel4_d3(self):
        assert rel(sk.upsilon(sk.BesselAsCorrelation(4.0), 3, 0.0),
                   1.0 / (8.0 * math.pi)) < 1e-6

    def test_white_d2_log_divergence(self):
        assert math.isinf(sk.upsilon(sk.White(), 2, 1.0))

    def test_invalid_dimension(self):
        with pytest.raises(InvalidDimension):
            sk.upsilon(GAUSS, 0, 1.0)

    def test_monotone_in_beta(self):
        vals = [sk.upsilon(GAUSS, 3, b) for b in (0.0, 0.5, 1.0, 2.0)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestUpsilonAlpha:
    def test_gaussian_half(self):
        assert rel(sk.upsilon_alpha(GAUSS, 3, 0.5, 0.0),
                   1.0 / (4.0 * math.pi ** 2)) < 1e-6

    def test_alpha_to_zero_continuity(self):
        lim = sk.upsilon_alpha(GAUSS, 3, 1e-6, 1.0)
        assert rel(lim, sk.upsilon(GAUSS, 3, 1.0)) < 1e-4

    def test_white_d3_divergent(self):
        assert math.isinf(sk.upsilon_alpha(sk.White(), 3, 0.5, 1.0))

    def test_invalid_alpha(self):
        with pytest.raises(InvalidAlpha):
            sk.upsilon_alpha(GAUSS, 3, 1.5, 0.0)

    def test_nondecreasing_in_alpha_on_tail_piece(self):
        # on |xi| >= 1 the integrand increases with alpha pointwise
        import scipy.integrate as si

        def tail(alpha):
            f = lambda r: math.exp(-r * r) * r * r / (1.0 + r * r) ** (1 - alpha)
            return si.quad(f, 1.0, np.inf)[0]

        vals = [tail(a) for a in (0.1, 0.3, 0.5, 0.7)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestSpectralCondition:
    def test_gaussian_value(self):
        # piecewise oracle: 4 pi [ int_0^1 e^{-r^2} dr + int_1^inf r^{2a-... ]
        import scipy.integrate as si

        a = 0.5
        inner = si.quad(lambda r: math.exp(-r * r), 0, 1)[0]
        outer = si.quad(lambda r: math.exp(-r * r) * r ** (2 * a), 1, np.inf)[0]
        oracle = 4 * math.pi * (inner + outer)
        assert rel(sk.spectral_condition(GAUSS, 3, a), oracle) < 1e-7

    def test_dominates_tail_upsilon(self):
        import scipy.integrate as si

        tail_ups = 4 * math.pi * si.quad(lambda r: math.exp(-r * r), 1, np.inf)[0]
        assert sk.spectral_condition(GAUSS, 3, 0.5) >= tail_ups

    def test_bessel_threshold(self):
        # finite iff s > d - 2(1 - alpha) = 1 + 2 alpha
        a = 0.5
        assert math.isinf(sk.spectral_condition(sk.BesselAsCorrelation(1.5), 3, a))
        assert math.isfinite(sk.spectral_condition(sk.BesselAsCorrelation(2.5), 3, a))

    def test_zero_density(self):
        zero = sk.CustomRadial(radii=(0.0, 1.0), values=(0.0, 0.0))
        assert sk.spectral_condition(zero, 3, 0.5) == 0.0


class TestTraceAndTimeKernels:
    def test_gaussian_trace(self):
        assert rel(sk.trace_value(GAUSS, 3), 1.0 / (8.0 * math.pi ** 1.5)) < 1e-6

    def test_bessel_trace_threshold(self):
        assert math.isfinite(sk.trace_value(sk.BesselAsCorrelation(4.0), 3))
        assert rel(sk.trace_value(sk.BesselAsCorrelation(4.0), 3),
                   1.0 / (8.0 * math.pi)) < 1e-6
        assert math.isinf(sk.trace_value(sk.BesselAsCorrelation(2.0), 3))

    def test_k_values(self):
        assert rel(sk.covariance_k(GAUSS, 3, 0.0), 1.0 / (8.0 * math.pi ** 1.5)) < 1e-6
        exact3 = (2 * math.pi) ** -3 * (math.pi / 4.0) ** 1.5
        assert rel(sk.covariance_k(GAUSS, 3, 3.0), exact3) < 1e-6

    def test_k_zero_for_zero_density(self):
        zero = sk.CustomRadial(radii=(0.0, 1.0), values=(0.0, 0.0))
        assert sk.covariance_k(zero, 3, 1.0) == 0.0

    def test_k_nonincreasing_below_trace(self):
        tr = sk.trace_value(GAUSS, 3)
        vals = [sk.covariance_k(GAUSS, 3, t) for t in (0.0, 0.5, 1.0, 2.0, 5.0)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert all(v <= tr * (1 + 1e-12) for v in vals)

    def test_H_values(self):
        assert rel(sk.covariance_H(GAUSS, 3, 0.0), 1.0 / (4.0 * math.pi ** 1.5)) < 1e-6
        assert rel(sk.covariance_H(GAUSS, 3, 3.0), 0.5 / (4.0 * math.pi ** 1.5)) < 1e-6

    def test_H_monotone_to_zero(self):
        vals = [sk.covariance_H(GAUSS, 3, t) for t in np.linspace(0, 20, 41)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert sk.covariance_H(GAUSS, 3, 1e4) < 1e-6

    def test_H_approaches_upsilon(self):
        ups = sk.upsilon(GAUSS, 3, 0.0)
        gaps = [abs(sk.covariance_H(GAUSS, 3, e) - ups) for e in (1e-2, 1e-3)]
        assert gaps[1] < gaps[0]
        assert gaps[1] < 1e-3 * ups + 1e-12  # gap ~ eps * k(0)


class TestBesselKernelTable:
    def test_yukawa_closed_form(self):
        # s=2 on R^3 is exp(-r)/(4 pi r)
        for r in (0.05, 0.5, 1.0, 3.0, 10.0):
            exact = math.exp(-r) / (4.0 * math.pi * r)
            assert rel(sk.bessel_kernel(2.0, 3, r), exact) < 1e-6

    def test_small_r_asymptotics(self):
        # f_s ~ c r^(s-d) with c = Gamma((d-s)/2) / (2^s pi^(d/2) Gamma(s/2))
        s, d = 2.5, 3
        c = math.gamma((d - s) / 2) / (2 ** s * math.pi ** (d / 2) * math.gamma(s / 2))
        r = 2e-3
        assert rel(sk.bessel_kernel(s, d, r), c * r ** (s - d)) < 1e-3

    def test_spectral_total_mass(self):
        # integral of f_s over R^3 equals 1, so the trace is (2 pi)^-3
        assert rel(sk.trace_value(sk.BesselAsSpectral(2.5), 3),
                   (2.0 * math.pi) ** -3) < 1e-6


class TestClassificationTables:
    def test_bessel_correlation_upsilon_flags(self):
        # Upsilon(0) finite iff s > d - 2 = 1 at d = 3
        for s in (0.5, 1.5, 2.5, 3.5):
            val = sk.upsilon(sk.BesselAsCorrelation(s), 3, 0.0)
            assert math.isfinite(val) == (s > 1.0), f"s={s}"

    def test_bessel_spectral_upsilon_flags(self):
        # as spectral density: finite iff s > 2 at d = 3
        for s in (1.5, 2.5):
            val = sk.upsilon(sk.BesselAsSpectral(s), 3, 0.0)
            assert math.isfinite(val) == (s > 2.0), f"s={s}"

    def test_riesz_upsilon_grid(self):
        # finite iff s1 > 1 and s2 > 2 at d = 3
        for s1 in (0.5, 1.5):
            for s2 in (1.5, 2.5):
                val = sk.upsilon(sk.RieszType(s1, s2), 3, 0.0)
                assert math.isfinite(val) == (s1 > 1.0 and s2 > 2.0), f"{s1},{s2}"

    def test_mollified_trace_closed_form(self):
        # tent phihat on [0.5, 2.5]: integral of phihat^2 r^2 dr = 47/30
        assert rel(sk.trace_value(RING, 3), 47.0 / (60.0 * math.pi ** 2)) < 1e-8

    def test_mollified_upsilon_closed_form(self):
        assert rel(sk.upsilon(RING, 3, 0.0), 1.0 / (3.0 * math.pi ** 2)) < 1e-8


class TestClassify:
    def test_gaussian_weak_disorder_boundary(self):
        rep1 = sk.classify_conditions(GAUSS, 3, 1.0)
        assert rep1.weak_disorder  # 4 * 0.0449 < 1
        rep3 = sk.classify_conditions(GAUSS, 3, 3.0)
        assert not rep3.weak_disorder  # 36 * 0.0449 > 1

    def test_white_d1_flags(self):
        rep = sk.classify_conditions(sk.White(), 1, 1.0)
        assert math.isinf(rep.upsilon0)
        assert not rep.weak_disorder
        assert rep.dalang_ok  # Upsilon(1) finite in d=1

    def test_report_dict_serializes_infinities(self):
        rep = sk.classify_conditions(sk.White(), 1, 1.0)
        d = rep.as_dict()
        assert d["upsilon0"] == "inf"
        assert d["weak_disorder"] is False
