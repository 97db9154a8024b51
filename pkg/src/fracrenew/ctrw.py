"""Compound renewal processes (continuous-time random walks).

A walker starts at the origin and jumps by iid amounts ``X_k`` at the renewal
epochs.  The sojourn density splits into an atom ``Psi(t) delta(x)`` (no jump
yet) and a continuous part ``sum_{k>=1} P(N(t)=k) w_k(x)``, where ``w_k`` is
the ``k``-fold convolution of the jump density.  The atom is always carried as
a separate weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gammaln, ndtr, ndtri

from fracrenew import fracalc, quadrature
from fracrenew.errors import DomainError, GridOverflow
from fracrenew.montecarlo import _map_chunks, simulate_counts, simulate_renewal
from fracrenew.renewal import (Exponential, MittagLeffler, WaitingTimeModel, counting_pmf_table,
                               survival, survival_laplace, wait_laplace)
from fracrenew.rng import Purpose, SeedStream

DEFAULT_K_MAX = 60
MAX_GRID_POINTS = 2_000_000


# ---------------------------------------------------------------- jump laws


@dataclass(frozen=True)
class Gaussian:
    sigma: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError("sigma must be positive")


@dataclass(frozen=True)
class TwoPoint:
    """Jumps of +1 or -1 with probability one half each."""


@dataclass(frozen=True)
class Tabulated:
    """Jump law on the lattice ``x = j dx``; ``density * dx`` are the point masses."""

    grid: np.ndarray
    density: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if g.ndim != 1 or g.shape != d.shape or g.size < 2:
            raise DomainError("grid and density must be 1-d and of equal length")
        dx = np.diff(g)
        if np.any(dx <= 0) or not np.allclose(dx, dx[0], rtol=1e-9, atol=0):
            raise DomainError("tabulated jump grid must be uniform and increasing")
        step = float(dx.mean())
        if abs(g[0] / step - round(g[0] / step)) > 1e-6:
            raise DomainError("grid points must be integer multiples of the spacing")
        if np.any(d < 0):
            raise DomainError("jump density must be non-negative")
        if abs(d.sum() * step - 1.0) > 1e-8:
            raise DomainError(f"jump density mass {d.sum() * step:.10f} differs from 1")
        if self.symmetric and (not np.allclose(g, -g[::-1], atol=1e-9 * step) or
                               not np.allclose(d, d[::-1], rtol=1e-12, atol=1e-300)):
            raise DomainError("density flagged symmetric is not symmetric about 0")
        for arr in (g, d):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "density", d)

    @property
    def step(self) -> float:
        return float((self.grid[-1] - self.grid[0]) / (self.grid.size - 1))

    @property
    def first_index(self) -> int:
        return int(round(self.grid[0] / self.step))


JumpModel = Union[Gaussian, TwoPoint, Tabulated]


def jump_char(jump: JumpModel, kappa):
    """Characteristic function ``w^(kappa) = E exp(i kappa X)``."""
    k = np.asarray(kappa, dtype=float)
    if isinstance(jump, Gaussian):
        return np.exp(-0.5 * (jump.sigma * k) ** 2)
    if isinstance(jump, TwoPoint):
        return np.cos(k)
    mass = jump.density * jump.step
    phase = np.multiply.outer(k, jump.grid)
    if jump.symmetric:
        return (np.cos(phase) * mass).sum(axis=-1)
    return (np.exp(1j * phase) * mass).sum(axis=-1)


def sample_jumps(jump: JumpModel, u: np.ndarray) -> np.ndarray:
    """Jump variates from uniforms by inversion."""
    if isinstance(jump, Gaussian):
        return jump.sigma * ndtri(u)
    if isinstance(jump, TwoPoint):
        return np.where(u < 0.5, -1.0, 1.0)
    cdf = np.cumsum(jump.density)
    cdf /= cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return jump.grid[idx]


# ---------------------------------------------------------------- convolution powers


@dataclass(frozen=True)
class Atom:
    """``w_0 = delta(x)``."""

    position: float = 0.0


@dataclass(frozen=True)
class GaussianPower:
    variance: float

    def pdf(self, x):
        return np.exp(-0.5 * np.asarray(x) ** 2 / self.variance) / math.sqrt(2.0 * math.pi * self.variance)

    def cdf(self, x):
        return ndtr(np.asarray(x) / math.sqrt(self.variance))


@dataclass(frozen=True)
class LatticePower:
    """Point masses ``weights[j]`` at ``(first + j) * spacing`` (zero masses included)."""

    first: int
    spacing: float
    weights: np.ndarray

    @property
    def positions(self) -> np.ndarray:
        return (self.first + np.arange(self.weights.size)) * self.spacing

    def at(self, index) -> np.ndarray:
        """Mass at lattice indices ``index`` (zero off the support)."""
        j = np.asarray(index) - self.first
        inside = (j >= 0) & (j < self.weights.size)
        out = np.zeros(j.shape)
        out[inside] = self.weights[j[inside]]
        return out


def _two_point_power(k: int) -> LatticePower:
    m = np.arange(k + 1)
    w = np.exp(gammaln(k + 1.0) - gammaln(m + 1.0) - gammaln(k - m + 1.0) - k * math.log(2.0))
    full = np.zeros(2 * k + 1)
    full[::2] = w
    return LatticePower(-k, 1.0, full)


def jump_convolution_power(jump: JumpModel, k: int, max_points: int = MAX_GRID_POINTS):
    """``w_k = w^{*k}``: an atom for ``k = 0``, closed forms for Gaussian and +-1 jumps.

    Tabulated laws are convolved by direct summation of the point masses.
    """
    if k < 0:
        raise DomainError("convolution power must be >= 0")
    if k == 0:
        return Atom()
    if isinstance(jump, Gaussian):
        return GaussianPower(k * jump.sigma**2)
    if isinstance(jump, TwoPoint):
        return _two_point_power(k)
    size = k * (jump.grid.size - 1) + 1
    if size > max_points:
        raise GridOverflow(f"{k}-fold support needs {size} points, over the limit {max_points}")
    base = jump.density * jump.step
    w = base
    for _ in range(k - 1):
        w = np.convolve(w, base)
    return LatticePower(k * jump.first_index, jump.step, w)


def _tabulated_powers(jump: Tabulated, k_max: int, max_points: int) -> list[LatticePower]:
    size = k_max * (jump.grid.size - 1) + 1
    if size > max_points:
        raise GridOverflow(f"{k_max}-fold support needs {size} points, over the limit {max_points}")
    base = jump.density * jump.step
    out = []
    w = base
    for k in range(1, k_max + 1):
        if k > 1:
            w = np.convolve(w, base)
        out.append(LatticePower(k * jump.first_index, jump.step, w))
    return out


# ---------------------------------------------------------------- sojourn density


@dataclass(frozen=True)
class SojournDensity:
    """``p(x, t) = atom * delta(x) + density(x)`` at one time.

    For lattice jump laws (``TwoPoint``, ``Tabulated``) ``density * dx`` is the
    mass at each lattice point of ``x_grid``.
    """

    t: float
    atom_at_origin: float
    x_grid: np.ndarray
    density: np.ndarray
    k_max_used: int
    truncation_bound: float

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0]) if self.x_grid.size > 1 else 1.0

    @property
    def mass(self) -> float:
        return float(self.atom_at_origin + self.density.sum() * self.dx)

    def value_at(self, x: float, include_atom: bool = True) -> float:
        """Point value on the grid; with ``include_atom`` the atom weight is added at ``x = 0``."""
        i = int(np.argmin(np.abs(self.x_grid - x)))
        if abs(self.x_grid[i] - x) > 1e-9 * max(1.0, abs(x)):
            raise DomainError(f"x={x} is not a grid point")
        v = float(self.density[i])
        if include_atom and abs(x) < 1e-12:
            v += self.atom_at_origin
        return v


def counting_weights_matrix(wait: WaitingTimeModel, t, k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """``P(N(t)=k)`` for ``k <= k_max`` at every ``t`` and the uncovered tail mass."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    P = counting_pmf_table(wait, t, k_max)
    P[:, 0] = survival(wait, t)
    tail = np.maximum(0.0, 1.0 - P.sum(axis=1))
    return P, tail


def _lattice_indices(x_grid: np.ndarray, spacing: float) -> np.ndarray:
    idx = np.round(x_grid / spacing)
    if np.any(np.abs(idx * spacing - x_grid) > 1e-9 * spacing):
        raise DomainError("x_grid must consist of lattice points of the jump law")
    return idx.astype(np.int64)


def _continuous_part(jump: JumpModel, P: np.ndarray, x_grid: np.ndarray, k_max: int,
                     max_points: int = MAX_GRID_POINTS) -> np.ndarray:
    """``sum_{k=1..K} P[:, k] w_k(x)`` on ``x_grid`` as an ``(n_t, n_x)`` array."""
    if isinstance(jump, Gaussian):
        k = np.arange(1, k_max + 1)
        var = k[:, None] * jump.sigma**2
        basis = np.exp(-0.5 * x_grid[None, :] ** 2 / var) / np.sqrt(2.0 * math.pi * var)
        return P[:, 1:] @ basis
    if isinstance(jump, TwoPoint):
        idx = _lattice_indices(x_grid, 1.0)
        basis = np.array([_two_point_power(k).at(idx) for k in range(1, k_max + 1)]).reshape(k_max, idx.size)
        return P[:, 1:] @ basis
    idx = _lattice_indices(x_grid, jump.step)
    powers = _tabulated_powers(jump, k_max, max_points)
    basis = np.array([w.at(idx) for w in powers]).reshape(k_max, idx.size) / jump.step
    return P[:, 1:] @ basis


def default_x_grid(jump: JumpModel, k_max: int, n_sigma: float = 6.0, n_points: int = 801) -> np.ndarray:
    """A grid wide enough to hold the continuous part up to ``k_max`` jumps."""
    if isinstance(jump, TwoPoint):
        return np.arange(-k_max, k_max + 1, dtype=float)
    if isinstance(jump, Gaussian):
        half = n_sigma * jump.sigma * math.sqrt(k_max)
        return np.linspace(-half, half, n_points)
    lo = k_max * jump.first_index
    hi = lo + k_max * (jump.grid.size - 1)
    return np.arange(lo, hi + 1) * jump.step


def sojourn_series(wait: WaitingTimeModel, jump: JumpModel, t: float, x_grid=None,
                   k_max: int = DEFAULT_K_MAX) -> SojournDensity:
    """Series solution ``p(x,t) = Psi(t) delta(x) + sum_{k=1..K} P(N(t)=k) w_k(x)``."""
    if not t >= 0:
        raise DomainError("t must be non-negative")
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    xg = default_x_grid(jump, max(k_max, 1)) if x_grid is None else np.atleast_1d(np.asarray(x_grid, dtype=float))
    if xg.size > 1 and not np.allclose(np.diff(xg), xg[1] - xg[0], rtol=1e-9, atol=0):
        raise DomainError("x_grid must be uniform")
    if t == 0:
        return SojournDensity(0.0, 1.0, xg, np.zeros(xg.size), k_max, 0.0)
    P, tail = counting_weights_matrix(wait, t, k_max)
    dens = _continuous_part(jump, P, xg, k_max)[0] if k_max >= 1 else np.zeros(xg.size)
    return SojournDensity(float(t), float(P[0, 0]), xg, dens, k_max, float(tail[0]))


def sojourn_cdf(wait: WaitingTimeModel, jump: JumpModel, t: float, x, k_max: int = DEFAULT_K_MAX) -> np.ndarray:
    """``P(x(t) <= x)`` from the series, atom included."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return (x >= 0).astype(float)
    P, _ = counting_weights_matrix(wait, t, k_max)
    P = P[0]
    out = P[0] * (x >= 0)
    for k in range(1, k_max + 1):
        wk = jump_convolution_power(jump, k)
        if isinstance(wk, GaussianPower):
            out = out + P[k] * wk.cdf(x)
        else:
            cum = np.cumsum(wk.weights)
            j = np.floor(x / wk.spacing + 1e-9).astype(np.int64) - wk.first
            val = np.where(j < 0, 0.0, cum[np.clip(j, 0, cum.size - 1)])
            out = out + P[k] * val
    return out


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class CtrwTrajectory:
    """Event times and post-jump positions of one walker started at 0."""

    horizon: float
    times: np.ndarray
    positions: np.ndarray

    def position(self, t: float) -> float:
        if t < 0 or t > self.horizon:
            raise DomainError("t outside [0, horizon]")
        n = int(np.searchsorted(self.times, t, side="right"))
        return float(self.positions[n - 1]) if n else 0.0


def simulate_ctrw(wait: WaitingTimeModel, jump: JumpModel, horizon: float, seed: SeedStream,
                  path_index: int = 0) -> CtrwTrajectory:
    """One walker: a renewal path plus one jump per event."""
    path = simulate_renewal(wait, horizon, seed, path_index)
    n = path.events.size
    u = seed.uniform(Purpose.JUMP, path_index, np.arange(n))
    pos = np.cumsum(sample_jumps(jump, np.atleast_1d(u))) if n else np.zeros(0)
    return CtrwTrajectory(float(horizon), path.events, pos)


def simulate_positions(wait: WaitingTimeModel, jump: JumpModel, t: float, n_walkers: int, seed: SeedStream,
                       threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``x(t)`` and ``N(t)`` for ``n_walkers`` walkers; walker ``i`` matches ``simulate_ctrw(..., i)``."""
    counts = simulate_counts(wait, t, n_walkers, seed, threads)

    def chunk(paths: np.ndarray) -> np.ndarray:
        c = counts[paths.astype(np.int64)]
        total = int(c.sum())
        if total == 0:
            return np.zeros(paths.size)
        owner = np.repeat(np.arange(paths.size), c)
        start = np.cumsum(c) - c
        draw = np.arange(total) - np.repeat(start, c)
        u = seed.uniform(Purpose.JUMP, paths[owner], draw)
        return np.bincount(owner, weights=sample_jumps(jump, u), minlength=paths.size)

    return np.concatenate(_map_chunks(chunk, n_walkers, threads)), counts


def cdf_sup_distance(samples: np.ndarray, cdf, points: np.ndarray) -> float:
    """``max |F_n - F|`` over ``points`` and their left limits."""
    xs = np.sort(np.asarray(samples, dtype=float))
    pts = np.asarray(points, dtype=float)
    emp_right = np.searchsorted(xs, pts, side="right") / xs.size
    emp_left = np.searchsorted(xs, pts, side="left") / xs.size
    eps = 1e-6 * np.maximum(1.0, np.abs(pts))
    return float(max(np.max(np.abs(emp_right - cdf(pts))), np.max(np.abs(emp_left - cdf(pts - eps)))))


# ---------------------------------------------------------------- transforms


def _adaptive_weights(wait: WaitingTimeModel, t: np.ndarray, tol: float = 1e-14, k_start: int = 40,
                      k_limit: int = 2560) -> tuple[np.ndarray, np.ndarray]:
    k = k_start
    while True:
        P, tail = counting_weights_matrix(wait, t, k)
        if tail.max() <= tol or k >= k_limit:
            return P, tail
        k *= 2


def char_series(wait: WaitingTimeModel, jump: JumpModel, kappa: float, t, k_max: int | None = None):
    """``sum_k P(N(t)=k) w^(kappa)**k`` and the uncovered counting mass (a bound on the error)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if k_max is None:
        P, tail = _adaptive_weights(wait, t)
    else:
        P, tail = counting_weights_matrix(wait, t, k_max)
    w = jump_char(jump, kappa)
    powers = w ** np.arange(P.shape[1])
    return P @ powers, tail


def char_function(wait: WaitingTimeModel, jump: JumpModel, kappa: float, t: float, k_max: int | None = None):
    """Spatial characteristic function of ``x(t)``; real for symmetric jump laws."""
    val, _ = char_series(wait, jump, kappa, t, k_max)
    v = val[0]
    return float(v.real) if np.isrealobj(val) or abs(v.imag) == 0 else complex(v)


def montroll_weiss_rhs(wait: WaitingTimeModel, jump: JumpModel, kappa: float, s: float) -> complex:
    """``Psi~(s) / (1 - phi~(s) w^(kappa))``."""
    return survival_laplace(wait, s) / (1.0 - wait_laplace(wait, s) * jump_char(jump, kappa))


def montroll_weiss_check(wait: WaitingTimeModel, jump: JumpModel, kappa: float, s: float) -> float:
    """``|L[char_function](s) - Psi~(s)/(1 - phi~(s) w^(kappa))|`` with the left side by quadrature."""
    if not s > 0:
        raise DomainError("s must be positive")
    w = complex(jump_char(jump, kappa))
    if w.imag != 0.0:
        re, _ = quadrature.laplace_transform(lambda t: char_series(wait, jump, kappa, t)[0].real, s)
        im, _ = quadrature.laplace_transform(lambda t: char_series(wait, jump, kappa, t)[0].imag, s)
        lhs = complex(re, im)
    else:
        lhs, _ = quadrature.laplace_transform(lambda t: np.real(char_series(wait, jump, kappa, t)[0]), s)
    return float(abs(lhs - montroll_weiss_rhs(wait, jump, kappa, s)))


# ---------------------------------------------------------------- master equations


class ResidualReport(NamedTuple):
    max_residual: float
    expected_order: float


def _uniform_times(t_grid) -> tuple[np.ndarray, float]:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise DomainError("t_grid needs at least three points")
    dt = float(t[1] - t[0])
    if dt <= 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise DomainError("t_grid must be uniform and increasing")
    return t, dt


def _space_operator(jump: JumpModel, x_grid: np.ndarray, k_max: int):
    """Grids and a function ``(P) -> (p, w*p, w)`` on ``x_grid`` for the master-equation residuals.

    ``p`` is the continuous part; ``w*p`` is formed by a space convolution on a padded grid.
    """
    if isinstance(jump, TwoPoint):
        idx = _lattice_indices(x_grid, 1.0)
        lo, hi = min(idx.min() - 1, -k_max - 1), max(idx.max() + 1, k_max + 1)
        ext = np.arange(lo, hi + 1, dtype=float)
        sel = idx - lo
        w_on = 0.5 * ((np.abs(x_grid - 1.0) < 0.5) | (np.abs(x_grid + 1.0) < 0.5))

        def apply(P):
            p = _continuous_part(jump, P, ext, k_max)
            wp = np.zeros_like(p)
            wp[:, 1:-1] = 0.5 * (p[:, :-2] + p[:, 2:])
            return p[:, sel], wp[:, sel], w_on

        return apply
    if isinstance(jump, Gaussian):
        dx = float(x_grid[1] - x_grid[0])
        half = max(np.abs(x_grid).max() + 10.0 * jump.sigma, 8.0 * jump.sigma * math.sqrt(k_max))
        n = int(math.ceil(half / dx))
        ext = np.arange(-n, n + 1) * dx
        m = int(math.ceil(10.0 * jump.sigma / dx))
        kern = GaussianPower(jump.sigma**2).pdf(np.arange(-m, m + 1) * dx) * dx
        shift = x_grid / dx + n
        sel = np.round(shift).astype(np.int64)
        if np.any(np.abs(sel - shift) > 1e-6):
            raise DomainError("x_grid must be a uniform grid containing 0")

        def apply(P):
            p = _continuous_part(jump, P, ext, k_max)
            wp = fftconvolve(p, kern[None, :], mode="same", axes=1)
            return p[:, sel], wp[:, sel], GaussianPower(jump.sigma**2).pdf(x_grid)

        return apply
    raise DomainError("master-equation residuals support Gaussian and TwoPoint jumps")


def kolmogorov_feller_residual(wait: Exponential, jump: JumpModel, x_grid, t_grid,
                               k_max: int = DEFAULT_K_MAX) -> float:
    """``max |dp/dt + p - w*p - exp(-t) w|`` for the compound Poisson process (unit rate).

    ``p`` is the continuous part of the series solution; the last term is the
    atom's contribution to ``w*p``.  Time derivatives are central differences,
    so the first and last points of ``t_grid`` only serve as stencil support.
    """
    if not (isinstance(wait, Exponential) and wait.rate == 1.0):
        raise DomainError("the Kolmogorov-Feller residual is defined for unit-rate exponential waits")
    t, dt = _uniform_times(t_grid)
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    P, _ = counting_weights_matrix(wait, t, k_max)
    p, wp, w = _space_operator(jump, x, k_max)(P)
    dpdt = (p[2:] - p[:-2]) / (2.0 * dt)
    atom = np.exp(-t[1:-1])[:, None] * w[None, :]
    res = dpdt + p[1:-1] - wp[1:-1] - atom
    return float(np.max(np.abs(res)))


def fractional_master_residual(wait: MittagLeffler, jump: JumpModel, x_grid, t_grid,
                               t_min: float | None = None, k_max: int = DEFAULT_K_MAX) -> ResidualReport:
    """``max |D^beta p + p - w*p - Psi(t) w|`` for the fractional compound process.

    ``t_grid`` must start at 0 because the Caputo derivative needs the whole
    history.  The maximum runs over ``t >= t_min`` (default: a quarter of the
    final time, so ``[0, 2]`` is checked on ``[0.5, 2]``).  The L1 scheme is expected
    to converge like ``dt**(2 - beta)``.
    """
    if not isinstance(wait, MittagLeffler):
        raise DomainError("the fractional residual needs a Mittag-Leffler waiting time")
    t, dt = _uniform_times(t_grid)
    if abs(t[0]) > 1e-12 * dt:
        raise DomainError("t_grid must start at 0")
    beta = wait.beta
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    P, _ = counting_weights_matrix(wait, t, k_max)
    p, wp, w = _space_operator(jump, x, k_max)(P)
    d = fracalc.caputo_l1(fracalc.UniformGridSeries(dt, p), beta).values
    atom = P[:, :1] * w[None, :]
    res = d + p - wp - atom
    lo = 0.25 * t[-1] if t_min is None else t_min
    sel = (t >= lo - 1e-12) & (np.arange(t.size) >= 1)
    if beta == 1.0:
        sel &= np.arange(t.size) < t.size - 1
    return ResidualReport(float(np.max(np.abs(res[sel]))), 2.0 - beta if beta < 1 else 2.0)
