"""Caputo derivatives on uniform grids and the fractional relaxation check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from fracrenew import mlnum, quadrature
from fracrenew.errors import DomainError


@dataclass(frozen=True)
class UniformGridSeries:
    """Samples ``f(j h)``, ``j = 0..M``, along axis 0 (extra axes are independent columns)."""

    step: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not (math.isfinite(self.step) and self.step > 0):
            raise DomainError("step must be positive")
        if v.ndim == 0 or v.shape[0] < 3:
            raise DomainError("a grid series needs at least three samples (M >= 2)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.values.shape[0])

    @classmethod
    def sample(cls, f, h: float, t_end: float) -> UniformGridSeries:
        m = int(round(t_end / h))
        return cls(h, f(h * np.arange(m + 1)))


def l1_weights(order: float, m: int) -> np.ndarray:
    """``b_j = (j+1)**(1-beta) - j**(1-beta)`` for ``j = 0..m-1``."""
    j = np.arange(m, dtype=float)
    return (j + 1.0) ** (1.0 - order) - j ** (1.0 - order)


def caputo_l1(series: UniformGridSeries, order: mlnum.Order | float) -> UniformGridSeries:
    """Caputo derivative by the L1 scheme on the regularised form ``f(tau) - f(0+)``.

    ``D f(t_n) ~ h**-beta / Gamma(2-beta) * sum_{j<n} b_j (f_{n-j} - f_{n-j-1})``,
    accurate to ``O(h**(2-beta))`` for smooth ``f``.  The value at ``t = 0`` is
    left as NaN.  For ``beta = 1`` the result is the ordinary derivative by
    second-order central differences (one-sided at the ends).
    """
    beta = mlnum.as_order(order).beta
    v = series.values
    h = series.step
    if beta == 1.0:
        out = np.gradient(v, h, axis=0, edge_order=2)
        return UniformGridSeries(h, out)
    m = v.shape[0] - 1
    diffs = np.diff(v, axis=0)
    b = l1_weights(beta, m).reshape((m,) + (1,) * (v.ndim - 1))
    acc = fftconvolve(b, diffs, axes=0)[:m]
    out = np.empty_like(v)
    out[0] = np.nan
    out[1:] = acc * (h**-beta / math.gamma(2.0 - beta))
    return UniformGridSeries(h, out)


def _riemann_liouville_l1(series: UniformGridSeries, order: mlnum.Order | float) -> UniformGridSeries:
    """Caputo derivative plus ``t**-beta f(0+) / Gamma(1-beta)``."""
    beta = mlnum.as_order(order).beta
    cap = caputo_l1(series, beta)
    if beta == 1.0:
        return cap
    t = series.times
    shape = (t.size,) + (1,) * (series.values.ndim - 1)
    with np.errstate(divide="ignore"):
        extra = (t ** -beta / math.gamma(1.0 - beta)).reshape(shape) * series.values[0]
    out = cap.values + extra
    return UniformGridSeries(series.step, out)


def relaxation_residual(order: mlnum.Order | float, h: float, T: float, t_min: float = 0.1) -> float:
    """``max |D^beta Psi + Psi|`` over grid nodes with ``t_min <= t <= T``.

    ``Psi(t) = E_beta(-t**beta)`` solves the fractional relaxation equation; nodes
    near the origin, where ``Psi'`` blows up like ``t**(beta-1)``, are excluded
    for ``beta < 1``.  With ``beta = 1`` every node after the first is used.
    """
    beta = mlnum.as_order(order).beta
    if not (h > 0 and h <= T / 10.0):
        raise DomainError("need 0 < h <= T/10")
    series = UniformGridSeries.sample(lambda t: mlnum.survival_values(beta, t), h, T)
    d = caputo_l1(series, beta).values
    t = series.times
    sel = (t >= (t_min if beta < 1 else h) - 1e-12 * h) & (t <= T + 1e-12 * h)
    return float(np.max(np.abs(d[sel] + series.values[sel])))


def caputo_laplace_check(order: mlnum.Order | float, s: float) -> float:
    """Residual of ``s**beta Psi~(s) - s**(beta-1) = -Psi~(s)`` with ``Psi~`` from quadrature."""
    beta = mlnum.as_order(order).beta
    if not s > 0:
        raise DomainError("s must be positive")
    psi_t, _ = quadrature.laplace_transform(lambda t: mlnum.survival_values(beta, t), s)
    return abs(s**beta * psi_t - s ** (beta - 1.0) + psi_t)
