"""Sampling of waiting times and renewal paths.

Every uniform is addressed by ``(stream key, purpose, path index, draw
index)`` through the counter-based generator in :mod:`fracrenew.rng`, so a
path does not depend on how the work is split into chunks or threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from fracrenew import mlnum
from fracrenew.errors import DomainError, RootFindFailure
from fracrenew.renewal import CountingPmf, Exponential, MittagLeffler, ParetoTail, WaitingTimeModel, survival
from fracrenew.rng import Purpose, SeedStream

CHUNK = 8192
NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 40


@dataclass(frozen=True)
class RenewalPath:
    """Renewal epochs ``t_k`` falling in ``(0, horizon]``."""

    horizon: float
    events: np.ndarray
    seed: int = 0

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=float)
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if ev.ndim != 1:
            raise DomainError("events must be one-dimensional")
        if ev.size and (np.any(np.diff(ev) <= 0) or ev[0] <= 0 or ev[-1] > self.horizon):
            raise DomainError("events must be strictly increasing inside (0, horizon]")
        ev.setflags(write=False)
        object.__setattr__(self, "events", ev)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.events, prepend=0.0)


# ---------------------------------------------------------------- Mittag-Leffler inversion


def _logit_survival(beta: float, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``log(Psi / (1 - Psi))`` and its derivative in ``log t``, with both halves accurate."""
    t = np.asarray(t, dtype=float)
    psi = np.empty_like(t)
    comp = np.empty_like(t)
    small = t <= mlnum.DEFAULT_CONFIG.series_t_max
    if small.any():
        x = t[small] ** beta
        psi[small] = mlnum._mlf_series(beta, 1.0, x)[0]
        comp[small] = x * mlnum._mlf_series(beta, beta + 1.0, x)[0]
    if (~small).any():
        psi[~small] = mlnum.survival_values(beta, t[~small])
        comp[~small] = 1.0 - psi[~small]
    dens = mlnum.pdf_values(beta, t)
    with np.errstate(divide="ignore"):
        logit = np.log(psi) - np.log(comp)
    slope = -t * dens * (1.0 / psi + 1.0 / comp)
    return logit, slope


@lru_cache(maxsize=32)
def _inverse_table(beta: float):
    """Monotone interpolant of ``log t`` against ``logit Psi`` for starting values."""
    y_lo = math.log(1e-15) / beta
    y_hi = -math.log(1e-15 * math.gamma(1.0 - beta)) / beta
    y = np.linspace(y_lo, y_hi, 1200)
    logit, _ = _logit_survival(beta, np.exp(y))
    ok = np.isfinite(logit)
    y, logit = y[ok], logit[ok]
    run = np.minimum.accumulate(logit)
    keep = np.concatenate([[True], logit[1:] < run[:-1]])
    y, logit = y[keep], logit[keep]
    return PchipInterpolator(-logit, y, extrapolate=False), float(logit[-1]), float(logit[0])


def _ml_start(beta: float, u: np.ndarray) -> np.ndarray:
    interp, lmin, lmax = _inverse_table(beta)
    target = np.log(u) - np.log1p(-u)
    y = interp(-target)
    head = target > lmax
    # 1 - Psi ~ t^beta / Gamma(1 + beta) for small t
    y[head] = (np.log1p(-u[head]) + math.lgamma(1.0 + beta)) / beta
    tail = target < lmin
    # Psi ~ t^-beta / Gamma(1 - beta) for large t
    y[tail] = -(np.log(u[tail]) + math.lgamma(1.0 - beta)) / beta
    return y


def _ml_invert(beta: float, u: np.ndarray) -> np.ndarray:
    """Solve ``E_beta(-t^beta) = u`` for ``t`` by damped Newton in ``log t``."""
    target = np.log(u) - np.log1p(-u)
    y = _ml_start(beta, u)
    active = np.arange(u.size)
    for _ in range(NEWTON_MAX_ITER):
        logit, slope = _logit_survival(beta, np.exp(y[active]))
        step = (logit - target[active]) / slope
        bad = ~np.isfinite(step)
        if bad.any():
            raise RootFindFailure(f"survival inversion broke down at u={u[active][bad][0]!r}")
        step = np.clip(step, -2.0, 2.0)
        y[active] -= step
        active = active[np.abs(step) > NEWTON_TOL]
        if active.size == 0:
            return np.exp(y)
    raise RootFindFailure(f"survival inversion did not converge for {active.size} draws")


def sample_waiting_time(model: WaitingTimeModel, u):
    """Inverse-survival transform of uniform draws, ``Psi^{-1}(u)``; decreasing in ``u``."""
    arr = np.asarray(u, dtype=float)
    flat = np.atleast_1d(arr).ravel()
    if np.any(~((flat > 0) & (flat < 1))):
        raise DomainError("uniform draws must lie in (0, 1)")
    if isinstance(model, Exponential):
        out = -np.log(flat) / model.rate
    elif isinstance(model, ParetoTail):
        out = model.scale * np.expm1(-np.log(flat) / model.beta)
    elif model.beta == 1.0:
        out = -np.log(flat) * model.time_scale
    else:
        out = model.time_scale * _ml_invert(model.beta, flat)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def sample_waiting_time_kozubowski(order: mlnum.Order | float, u1, u2, time_scale: float = 1.0):
    """Mittag-Leffler variate from two uniforms by the Kozubowski-Rachev transformation.

    ``T = -tau ln(u1) (sin(beta pi) / tan(beta pi u2) - cos(beta pi))**(1/beta)``.
    Used as an independent cross-check of the inversion sampler.
    """
    beta = mlnum.as_order(order).beta
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any(~((u1 > 0) & (u1 < 1))) or np.any(~((u2 > 0) & (u2 < 1))):
        raise DomainError("uniform draws must lie in (0, 1)")
    if beta == 1.0:
        out = -np.log(u1) * time_scale * np.ones_like(u2)
    else:
        bp = beta * math.pi
        ratio = math.sin(bp) / np.tan(bp * u2) - math.cos(bp)
        out = -time_scale * np.log(u1) * ratio ** (1.0 / beta)
    return float(out) if out.ndim == 0 else out


def _draw_waits(model: WaitingTimeModel, seed: SeedStream, paths: np.ndarray, draw: int,
                kozubowski: bool = False) -> np.ndarray:
    if kozubowski and isinstance(model, MittagLeffler):
        u1 = seed.uniform(Purpose.WAIT, paths, draw)
        u2 = seed.uniform(Purpose.WAIT_AUX, paths, draw)
        return sample_waiting_time_kozubowski(model.beta, u1, u2, model.time_scale)
    return sample_waiting_time(model, seed.uniform(Purpose.WAIT, paths, draw))


# ---------------------------------------------------------------- paths


def _epochs_chunk(model, horizon: float, seed: SeedStream, paths: np.ndarray, kozubowski: bool):
    """Renewal epochs for a block of paths as a ragged list of arrays."""
    clock = np.zeros(paths.size)
    rows: list[list[float]] = [[] for _ in range(paths.size)]
    active = np.arange(paths.size)
    draw = 0
    while active.size:
        clock[active] += _draw_waits(model, seed, paths[active], draw, kozubowski)
        inside = clock[active] <= horizon
        for i in active[inside]:
            rows[i].append(clock[i])
        active = active[inside]
        draw += 1
    return [np.array(r) for r in rows]


def _counts_chunk(model, t: float, seed: SeedStream, paths: np.ndarray, kozubowski: bool) -> np.ndarray:
    clock = np.zeros(paths.size)
    counts = np.zeros(paths.size, dtype=np.int64)
    active = np.arange(paths.size)
    draw = 0
    while active.size:
        clock[active] += _draw_waits(model, seed, paths[active], draw, kozubowski)
        inside = clock[active] <= t
        active = active[inside]
        counts[active] += 1
        draw += 1
    return counts


def _map_chunks(fn, n_paths: int, threads: int, first_path: int = 0) -> list:
    starts = range(first_path, first_path + n_paths, CHUNK)
    blocks = [np.arange(s, min(s + CHUNK, first_path + n_paths), dtype=np.uint64) for s in starts]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def simulate_renewal(model: WaitingTimeModel, horizon: float, seed: SeedStream, path_index: int = 0,
                     kozubowski: bool = False) -> RenewalPath:
    """One renewal path on ``(0, horizon]``; the first epoch beyond the horizon is discarded."""
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    ev = _epochs_chunk(model, float(horizon), seed, np.array([path_index], dtype=np.uint64), kozubowski)[0]
    return RenewalPath(float(horizon), ev, int(seed.master_seed))


def simulate_paths(model: WaitingTimeModel, horizon: float, n_paths: int, seed: SeedStream,
                   threads: int = 1, kozubowski: bool = False) -> list[RenewalPath]:
    """``n_paths`` independent paths; path ``i`` equals ``simulate_renewal(..., path_index=i)``."""
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    parts = _map_chunks(lambda b: _epochs_chunk(model, float(horizon), seed, b, kozubowski), n_paths, threads)
    return [RenewalPath(float(horizon), ev, int(seed.master_seed)) for part in parts for ev in part]


def simulate_counts(model: WaitingTimeModel, t: float, n_paths: int, seed: SeedStream,
                    threads: int = 1, kozubowski: bool = False) -> np.ndarray:
    """``N(t)`` on each of ``n_paths`` paths, without storing the epochs."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    if t == 0:
        return np.zeros(n_paths, dtype=np.int64)
    parts = _map_chunks(lambda b: _counts_chunk(model, float(t), seed, b, kozubowski), n_paths, threads)
    return np.concatenate(parts)


def sample_waits(model: WaitingTimeModel, n: int, seed: SeedStream, threads: int = 1,
                 kozubowski: bool = False) -> np.ndarray:
    """``n`` iid waiting times (draw 0 of paths ``0..n-1``)."""
    parts = _map_chunks(lambda b: _draw_waits(model, seed, b, 0, kozubowski), n, threads)
    return np.concatenate(parts)


def counting_function(path: RenewalPath, t: float) -> int:
    """``N(t) = max{k : t_k <= t}``."""
    if t > path.horizon:
        raise DomainError(f"t={t} exceeds the path horizon {path.horizon}")
    if t < 0:
        raise DomainError("t must be non-negative")
    return int(np.searchsorted(path.events, t, side="right"))


def empirical_counting_pmf(model: WaitingTimeModel, t: float, n_paths: int, seed: SeedStream,
                           threads: int = 1, kozubowski: bool = False) -> CountingPmf:
    """Histogram of ``N(t)`` over independent paths (relative frequencies)."""
    counts = simulate_counts(model, t, n_paths, seed, threads, kozubowski)
    probs = np.bincount(counts) / n_paths
    return CountingPmf(float(t), probs, 0.0)


# ---------------------------------------------------------------- goodness of fit


def ks_statistic(sample: np.ndarray, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance ``sup |F_n - F|``."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Large-sample KS critical value, ``sqrt(-ln(alpha/2)/2) / sqrt(n)``."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def waiting_time_cdf(model: WaitingTimeModel):
    return lambda x: 1.0 - survival(model, np.maximum(x, 0.0))


def binomial_band(p: np.ndarray, n: int, width: float = 4.0) -> np.ndarray:
    """``width`` standard errors of a binomial proportion estimated from ``n`` trials."""
    return width * np.sqrt(np.maximum(p * (1.0 - p), 0.0) / n)
