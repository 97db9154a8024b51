from __future__ import annotations

import math

import numpy as np
import pytest

from fracrenew import fracalc, mlnum
from fracrenew.errors import DomainError
from fracrenew.fracalc import UniformGridSeries


def test_constant_has_zero_derivative():
    s = UniformGridSeries(0.01, np.full(101, 3.0))
    d = fracalc.caputo_l1(s, 0.4).values
    assert np.isnan(d[0]) and np.all(d[1:] == 0.0)


def test_linear_function_exact():
    h = 1e-2
    s = UniformGridSeries.sample(lambda t: t, h, 1.0)
    d = fracalc.caputo_l1(s, 0.5).values
    assert d[-1] == pytest.approx(1.1283792, abs=1e-7)
    t = s.times[1:]
    assert np.allclose(d[1:], t**0.5 / math.gamma(1.5), rtol=1e-12)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
def test_quadratic_convergence_order(beta):
    # D^beta t^2 = 2 t^(2-beta) / Gamma(3-beta); L1 error is O(h^(2-beta))
    exact = 2.0 / math.gamma(3.0 - beta)
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        d = fracalc.caputo_l1(UniformGridSeries.sample(lambda t: t**2, h, 1.0), beta).values
        errs.append(abs(d[-1] - exact))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(r - (2 - beta)) < 0.1 for r in rates)


def test_classical_limit():
    h = 1e-3
    s = UniformGridSeries.sample(lambda t: t**2, h, 1.0)
    d = fracalc.caputo_l1(s, 1.0).values
    assert np.max(np.abs(d - 2 * s.times)) < 1e-10


def test_continuity_near_one():
    h = 1e-3
    s = UniformGridSeries.sample(np.sin, h, 2.0)
    d = fracalc.caputo_l1(s, 1 - 1e-6).values[1:]
    back = np.diff(s.values) / h
    assert np.max(np.abs(d - back)) < 1e-3


def test_columns_are_independent():
    h = 1e-2
    t = h * np.arange(51)
    both = UniformGridSeries(h, np.stack([t, t**2], axis=1))
    d = fracalc.caputo_l1(both, 0.6).values
    d1 = fracalc.caputo_l1(UniformGridSeries(h, t), 0.6).values
    d2 = fracalc.caputo_l1(UniformGridSeries(h, t**2), 0.6).values
    assert np.allclose(d[1:, 0], d1[1:], rtol=1e-12) and np.allclose(d[1:, 1], d2[1:], rtol=1e-12)


def test_riemann_liouville_adds_initial_term():
    h = 1e-2
    s = UniformGridSeries.sample(lambda t: 1.0 + t, h, 1.0)
    rl = fracalc._riemann_liouville_l1(s, 0.5).values
    assert rl[-1] == pytest.approx(1 / math.gamma(0.5) + 1 / math.gamma(1.5), rel=1e-12)


class TestRelaxation:
    def test_exponential(self):
        assert fracalc.relaxation_residual(1.0, 1e-3, 5.0) < 1e-5

    def test_half(self):
        assert fracalc.relaxation_residual(0.5, 1e-3, 5.0, t_min=0.1) < 5e-3

    def test_refinement_reduces_residual(self):
        r = [fracalc.relaxation_residual(0.7, h, 4.0) for h in (4e-3, 2e-3, 1e-3)]
        assert r[0] > r[1] > r[2]

    def test_step_bound(self):
        with pytest.raises(DomainError):
            fracalc.relaxation_residual(0.5, 1.0, 5.0)


@pytest.mark.parametrize("beta", [0.25, 0.5, 0.9, 1.0])
def test_caputo_laplace_rule(beta):
    for s in (0.5, 2.0):
        assert fracalc.caputo_laplace_check(beta, s) < 1e-10


def test_weights_and_validation():
    b = fracalc.l1_weights(0.5, 3)
    assert np.allclose(b, [1.0, math.sqrt(2) - 1, math.sqrt(3) - math.sqrt(2)])
    with pytest.raises(DomainError):
        UniformGridSeries(0.1, np.ones(2))
    with pytest.raises(DomainError):
        UniformGridSeries(0.0, np.ones(5))
    with pytest.raises(DomainError):
        fracalc.caputo_l1(UniformGridSeries(0.1, np.ones(5)), 0.0)
    assert isinstance(mlnum.as_order(0.5), mlnum.Order)
