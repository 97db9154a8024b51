from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import erfcx, gammaincc

import oracles
from fracrenew import renewal as rn
from fracrenew.errors import DomainError, GridMismatch

ML_HALF = rn.MittagLeffler(0.5)
# mpmath quadrature of the Mittag-Leffler density against itself (20 digits)
ML_ERLANG2_HALF_T1 = 0.15437156137177524
ML_ERLANG2_08_T2 = 0.17408158231995434
# mpmath quadrature of the Lomax convolution identities (beta = 0.5, c = 1)
LOMAX_P1 = {1.0: 0.235702260395516, 5.0: 0.291605921759902}
LOMAX_F2_T1 = 0.0785674201318386


class TestModels:
    def test_validation(self):
        with pytest.raises(DomainError):
            rn.Exponential(0.0)
        with pytest.raises(DomainError):
            rn.MittagLeffler(1.5)
        with pytest.raises(DomainError):
            rn.MittagLeffler(0.5, -1.0)
        with pytest.raises(DomainError):
            rn.ParetoTail(1.0)

    def test_tail_constant(self):
        assert rn.ParetoTail(0.5, 1.0).tail_constant == pytest.approx(math.sqrt(math.pi), rel=1e-15)
        assert rn.ParetoTail(0.5, 4.0).tail_constant == pytest.approx(2 * math.sqrt(math.pi), rel=1e-15)


class TestSurvival:
    def test_values(self):
        assert rn.survival(rn.Exponential(1.0), 0.0) == 1.0
        assert rn.survival(ML_HALF, 1.0) == pytest.approx(float(erfcx(1.0)), abs=1e-13)
        assert rn.survival(rn.MittagLeffler(1.0), 2.0) == pytest.approx(math.exp(-2), rel=1e-15)
        assert rn.survival(rn.ParetoTail(0.5, 1.0), 3.0) == pytest.approx(0.5, rel=1e-15)

    def test_time_scale(self):
        m = rn.MittagLeffler(0.5, 4.0)
        assert rn.survival(m, 4.0) == pytest.approx(rn.survival(ML_HALF, 1.0), rel=1e-15)

    def test_array_shape_and_range(self):
        t = np.linspace(0, 20, 41).reshape(41, 1)
        for m in (rn.Exponential(2.0), ML_HALF, rn.ParetoTail(0.3, 2.0)):
            s = rn.survival(m, t)
            assert s.shape == t.shape
            assert np.all((s > 0) & (s <= 1)) and s[0, 0] == 1.0

    def test_negative_time(self):
        with pytest.raises(DomainError):
            rn.survival(ML_HALF, -1.0)


class TestDensity:
    def test_values(self):
        assert rn.wait_pdf(rn.Exponential(2.0), 1.0) == pytest.approx(2 * math.exp(-2), rel=1e-15)
        assert rn.wait_pdf(rn.ParetoTail(0.5, 1.0), 3.0) == pytest.approx(0.0625, rel=1e-15)
        t = np.array([0.3, 1.0, 4.0])
        assert np.allclose(rn.wait_pdf(rn.MittagLeffler(1.0), t), np.exp(-t), rtol=1e-15, atol=0)

    def test_scaled_density(self):
        m = rn.MittagLeffler(0.7, 2.0)
        h = 1e-5
        fd = (rn.survival(m, 3.0 - h) - rn.survival(m, 3.0 + h)) / (2 * h)
        assert rn.wait_pdf(m, 3.0) == pytest.approx(fd, abs=1e-8)

    def test_laplace_transforms(self):
        assert rn.wait_laplace(ML_HALF, 4.0) == pytest.approx(1 / 3)
        lomax = rn.ParetoTail(0.5, 1.0)
        assert rn.wait_laplace(lomax, 1.0) == pytest.approx(float(oracles.lomax_laplace(0.5, 1, 1)), rel=1e-12)
        assert rn.lomax_one_minus_laplace(lomax, 1e-4) == pytest.approx(
            1 - float(oracles.lomax_laplace(0.5, 1, 1e-4)), rel=1e-9)
        # small argument behaviour: 1 - phi~(s) ~ Gamma(1/2) s^(1/2)
        assert rn.lomax_one_minus_laplace(lomax, 1e-12) / 1e-6 == pytest.approx(math.sqrt(math.pi), rel=1e-5)

    def test_lomax_large_argument_branch(self):
        lomax = rn.ParetoTail(0.4, 1.0)
        a, x = 0.6, 700.0
        direct = x**0.4 * float(oracles.mp.exp(x) * oracles.mp.gammainc(a, x))
        assert rn.lomax_one_minus_laplace(lomax, x) == pytest.approx(direct, rel=1e-12)
        assert rn.lomax_one_minus_laplace(lomax, 599.0) == pytest.approx(
            599.0**0.4 * float(oracles.mp.exp(599) * oracles.mp.gammainc(a, 599)), rel=1e-10)


class TestCountingPmf:
    def test_poisson_entry(self):
        pmf = rn.counting_pmf(rn.Exponential(1.0), 2.0, 5)
        assert pmf.probs[3] == pytest.approx(0.1804470443, abs=1e-10)
        assert pmf.probs[3] == pytest.approx(8 / 6 * math.exp(-2), rel=1e-14)

    def test_zero_time(self):
        for m in (rn.Exponential(1.0), ML_HALF, rn.ParetoTail(0.5)):
            pmf = rn.counting_pmf(m, 0.0, 4)
            assert pmf.probs.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]

    def test_ml_first_entry(self):
        assert rn.counting_pmf(ML_HALF, 1.0, 3).probs[0] == pytest.approx(float(erfcx(1.0)), abs=1e-13)

    def test_tail_bound(self):
        pmf = rn.counting_pmf(ML_HALF, 1.0, 10)
        assert pmf.tail_bound == pytest.approx(1 - pmf.probs.sum(), abs=1e-15)
        assert pmf.tail_bound >= 0

    @pytest.mark.parametrize("t", [0.5, 1.0, 5.0])
    def test_normalisation(self, t):
        for m, tol in ((rn.Exponential(1.0), 1e-6), (rn.MittagLeffler(0.5), 1e-3), (rn.MittagLeffler(0.8), 1e-3)):
            deficits = [1 - rn.counting_pmf(m, t, k).probs.sum() for k in (5, 20, 80, 200)]
            assert all(a >= b - 1e-14 for a, b in zip(deficits, deficits[1:]))
            assert deficits[-1] < tol

    def test_scale_invariance(self):
        a = rn.counting_pmf(rn.MittagLeffler(0.6, 3.0), 6.0, 8).probs
        b = rn.counting_pmf(rn.MittagLeffler(0.6), 2.0, 8).probs
        assert np.allclose(a, b, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("t", [1.0, 5.0])
    def test_lomax_against_quadrature(self, t):
        pmf = rn.counting_pmf(rn.ParetoTail(0.5, 1.0), t, 6)
        assert pmf.probs[0] == pytest.approx(1 / math.sqrt(1 + t), rel=1e-14)
        assert pmf.probs[1] == pytest.approx(LOMAX_P1[t], abs=1e-5)
        assert pmf.probs.sum() + pmf.tail_bound == pytest.approx(1.0, abs=1e-12)

    def test_table(self):
        t = np.array([0.0, 0.7, 3.0])
        tab = rn.counting_pmf_table(rn.Exponential(1.5), t, 4)
        for row, ti in zip(tab, t):
            assert np.allclose(row, rn.counting_pmf(rn.Exponential(1.5), ti, 4).probs, atol=1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            rn.counting_pmf(ML_HALF, -1.0, 3)
        with pytest.raises(DomainError):
            rn.counting_pmf(ML_HALF, 1.0, -1)


class TestErlang:
    def test_exponential(self):
        t = np.array([0.2, 1.0, 3.0])
        assert np.allclose(rn.erlang_pdf(rn.Exponential(1.0), 1, t), np.exp(-t), rtol=1e-14)
        assert rn.erlang_pdf(rn.Exponential(1.0), 2, 1.0) == pytest.approx(0.3678794, abs=1e-7)
        assert rn.erlang_cdf(rn.Exponential(1.0), 1, 1.0) == pytest.approx(0.6321206, abs=1e-7)

    def test_ml_against_self_convolution(self):
        assert rn.erlang_pdf(ML_HALF, 2, 1.0) == pytest.approx(ML_ERLANG2_HALF_T1, abs=1e-4)
        assert rn.erlang_pdf(ML_HALF, 2, 1.0) == pytest.approx(ML_ERLANG2_HALF_T1, abs=1e-11)
        assert rn.erlang_pdf(rn.MittagLeffler(0.8), 2, 2.0) == pytest.approx(ML_ERLANG2_08_T2, abs=1e-11)

    def test_cdf_limits(self):
        for m in (rn.Exponential(1.0), ML_HALF, rn.ParetoTail(0.5)):
            assert rn.erlang_cdf(m, 3, 0.0) == 0.0
        assert rn.erlang_cdf(ML_HALF, 3, 1e4) > 0.95

    def test_cdf_matches_pdf(self):
        m = rn.MittagLeffler(0.7)
        h = 1e-5
        fd = (rn.erlang_cdf(m, 3, 2.0 + h) - rn.erlang_cdf(m, 3, 2.0 - h)) / (2 * h)
        assert rn.erlang_pdf(m, 3, 2.0) == pytest.approx(fd, abs=1e-7)

    def test_exponential_cdf_is_gamma(self):
        assert rn.erlang_cdf(rn.Exponential(2.0), 4, 1.5) == pytest.approx(1 - gammaincc(4, 3.0), abs=1e-15)

    def test_lomax_pdf(self):
        assert rn.erlang_pdf(rn.ParetoTail(0.5, 1.0), 2, 1.0) == pytest.approx(LOMAX_F2_T1, abs=1e-5)

    def test_domain(self):
        with pytest.raises(DomainError):
            rn.erlang_pdf(ML_HALF, 0, 1.0)
        with pytest.raises(DomainError):
            rn.erlang_pdf(ML_HALF, 2, 0.0)


class TestConvolveGrid:
    def test_exponential_square(self):
        g = rn.uniform_grid(1.0, 1000)
        f = rn.GridFn(g, np.exp(-g))
        out = rn.convolve_grid(f, f)
        assert out.values[-1] == pytest.approx(0.3678794, abs=1e-3)
        assert np.max(np.abs(out.values - g * np.exp(-g))) < 1e-6

    def test_delta_identity(self):
        n = 2000
        g = rn.uniform_grid(2.0, n)
        h = g[1]
        delta = np.zeros_like(g)
        delta[0] = 2.0 / h  # trapezoid weight h/2 on the first node
        other = np.cos(g)
        out = rn.convolve_grid(rn.GridFn(g, delta), rn.GridFn(g, other))
        assert np.max(np.abs(out.values[1:] - other[1:])) < 5 * h

    @pytest.mark.parametrize("beta,tol", [(0.5, 2e-4), (0.8, 2e-6)])
    def test_singular_density_square(self, beta, tol):
        m = rn.MittagLeffler(beta)
        g = rn.uniform_grid(5.0, 2000)
        vals = np.zeros_like(g)
        vals[1:] = rn.wait_pdf(m, g[1:])
        f = rn.GridFn(g, vals, beta - 1.0, beta)
        out = rn.convolve_grid(f, f)
        assert out.singular_exponent == pytest.approx(2 * beta - 1)
        sel = g >= 0.1
        ref = rn.erlang_pdf(m, 2, g[sel])
        assert np.max(np.abs(out.values[sel] - ref)) < tol

    def test_mismatched_grids(self):
        a = rn.GridFn(rn.uniform_grid(1.0, 10), np.ones(11))
        b = rn.GridFn(rn.uniform_grid(2.0, 10), np.ones(11))
        with pytest.raises(GridMismatch):
            rn.convolve_grid(a, b)

    def test_gridfn_validation(self):
        with pytest.raises(GridMismatch):
            rn.GridFn(np.array([0.0, 1.0, 0.5]), np.ones(3))
        with pytest.raises(DomainError):
            rn.GridFn(np.array([0.0, 1.0]), np.ones(2), singular_exponent=-1.0)


def test_exponential_moments():
    m = rn.Exponential(2.0)
    assert rn.exponential_moment(m, 1) == 0.5
    assert rn.exponential_moment(m, 3) == pytest.approx(6 / 8)
