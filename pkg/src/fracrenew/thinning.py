"""Thinning and rescaling of renewal processes.

Each event is kept with probability ``q`` and the time axis is rescaled by
``r``.  In the Laplace domain the operator maps the waiting-time transform
``phi~`` to ``q phi~(r s) / (1 - (1 - q) phi~(r s))``.  With ``q = a r**beta``
and ``r -> 0`` a density whose transform behaves like ``1 - a s**beta`` near
the origin is carried to the Mittag-Leffler transform ``1 / (1 + s**beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaincinv

from fracrenew import mlnum
from fracrenew.errors import DomainError, FitUnstable
from fracrenew.montecarlo import (RenewalPath, _map_chunks, ks_critical, ks_statistic, sample_waiting_time,
                                  waiting_time_cdf)
from fracrenew.renewal import (Exponential, MittagLeffler, ParetoTail, WaitingTimeModel,
                               lomax_one_minus_laplace, wait_laplace)
from fracrenew.rng import Purpose, SeedStream

DEFAULT_LEVELS = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class ThinningSchedule:
    """Levels ``delta_i`` with keep probabilities ``eps_i = a delta_i**beta``."""

    beta: float
    a_const: float = 1.0
    levels: tuple = DEFAULT_LEVELS

    def __post_init__(self):
        mlnum.Order(self.beta)
        lv = tuple(float(d) for d in self.levels)
        object.__setattr__(self, "levels", lv)
        if not lv:
            raise DomainError("schedule needs at least one level")
        if not self.a_const > 0:
            raise DomainError("a_const must be positive")
        if any(d <= 0 for d in lv) or any(b >= a for a, b in zip(lv, lv[1:])):
            raise DomainError("levels must be positive and strictly decreasing")
        bad = [e for e in self.epsilons if not 0 < e < 1]
        if bad:
            raise DomainError(f"keep probability {bad[0]:g} falls outside (0, 1)")

    @property
    def epsilons(self) -> tuple:
        return tuple(self.a_const * d**self.beta for d in self.levels)

    def pairs(self):
        """``(q, r)`` for every level."""
        return list(zip(self.epsilons, self.levels))


@dataclass(frozen=True)
class LaplaceDensity:
    """Laplace transform of a waiting-time density with its small-``s`` tail data.

    ``complement`` evaluates ``1 - phi~(s)`` without cancellation when given.
    """

    transform: Callable[[np.ndarray], np.ndarray]
    beta: float
    a_const: float
    complement: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        tiny = np.array([1e-300])
        if not abs(float(self.one_minus(tiny)[0])) <= 1e-6:
            raise DomainError("transform is not normalised at s -> 0")
        probe = np.array([1e-3, 1.0, 1e3])
        v = self(probe)
        if np.any(~((v > 0) & (v < 1))):
            raise DomainError("a density transform must lie in (0, 1) for s > 0")

    def __call__(self, s) -> np.ndarray:
        return np.asarray(self.transform(np.asarray(s, dtype=float)), dtype=float)

    def one_minus(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.complement is not None:
            return np.asarray(self.complement(s), dtype=float)
        return 1.0 - self(s)

    @classmethod
    def from_model(cls, model: WaitingTimeModel) -> LaplaceDensity:
        if isinstance(model, Exponential):
            lam = model.rate
            return cls(lambda s: lam / (lam + s), 1.0, 1.0 / lam, lambda s: s / (lam + s))
        if isinstance(model, MittagLeffler):
            b, tau = model.beta, model.time_scale
            return cls(lambda s: wait_laplace(model, s), b, tau**b,
                       lambda s: (tau * s) ** b / (1.0 + (tau * s) ** b))
        if isinstance(model, ParetoTail):
            return cls(lambda s: wait_laplace(model, s), model.beta, model.tail_constant,
                       lambda s: lomax_one_minus_laplace(model, s))
        raise DomainError(f"unsupported model {model!r}")


def _check_qr(q: float, r: float):
    if not 0 < q <= 1:
        raise DomainError(f"keep probability q={q!r} must lie in (0, 1]")
    if not r > 0:
        raise DomainError(f"rescaling factor r={r!r} must be positive")


def thin_rescale_transform(phi: LaplaceDensity, q: float, r: float, s):
    """Transform of the thinned and rescaled waiting time, ``q phi~(rs) / (1 - (1-q) phi~(rs))``."""
    _check_qr(q, r)
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("s must be positive")
    rs = r * np.atleast_1d(arr)
    v = phi(rs)
    # the denominator written as q + (1 - q)(1 - phi~) keeps precision when rs is small
    out = q * v / (q + (1.0 - q) * phi.one_minus(rs))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def ml_limit_transform(order: mlnum.Order | float, s):
    """Limit law of the thinning cascade, ``1 / (1 + s**beta)``."""
    beta = mlnum.as_order(order).beta
    s = np.asarray(s, dtype=float)
    out = 1.0 / (1.0 + s**beta)
    return float(out) if out.ndim == 0 else out


def thin_rescale_path(path: RenewalPath, q: float, r: float, seed: SeedStream, path_index: int = 0) -> RenewalPath:
    """Keep each event with probability ``q``, then multiply all times by ``r``.

    Multiplying epochs by ``r`` turns a gap density ``f(t)`` into ``f(t/r)/r``,
    the path-level counterpart of ``phi~(s) -> phi~(rs)``.
    """
    _check_qr(q, r)
    n = path.events.size
    if n:
        u = seed.uniform(Purpose.THIN, path_index, np.arange(n))
        kept = path.events[u < q] * r
    else:
        kept = path.events
    return RenewalPath(path.horizon * r, kept, path.seed)


def thinned_gaps(model: WaitingTimeModel, q: float, r: float, n_gaps: int, seed: SeedStream,
                 threads: int = 1) -> np.ndarray:
    """Gaps of the thinned, rescaled process drawn from their exact law.

    A retained gap is ``r`` times the sum of ``M`` original waiting times with
    ``M ~ Geometric(q)`` on ``{1, 2, ...}``.  Exponential sums are drawn as one
    Gamma variate by inversion; other laws are summed draw by draw.
    """
    _check_qr(q, r)
    if n_gaps < 1:
        raise DomainError("n_gaps must be >= 1")

    def chunk(paths: np.ndarray) -> np.ndarray:
        um = seed.uniform(Purpose.THIN, paths, 0)
        m = np.ones(paths.size) if q == 1 else np.maximum(1.0, np.ceil(np.log(um) / math.log1p(-q)))
        if isinstance(model, Exponential) or (isinstance(model, MittagLeffler) and model.beta == 1.0):
            scale = 1.0 / model.rate if isinstance(model, Exponential) else model.time_scale
            total = gammaincinv(m, seed.uniform(Purpose.WAIT, paths, 0)) * scale
            return r * total
        total = np.zeros(paths.size)
        active = np.arange(paths.size)
        draw = 0
        while active.size:
            total[active] += sample_waiting_time(model, seed.uniform(Purpose.WAIT, paths[active], draw))
            draw += 1
            active = active[m[active] > draw]
        return r * total

    return np.concatenate(_map_chunks(chunk, n_gaps, threads))


@dataclass(frozen=True)
class LevelResult:
    delta: float
    epsilon: float
    ks_distance: float
    ks_critical: float
    transform_distance: float


def transform_distance(phi: LaplaceDensity, q: float, r: float, beta: float,
                       s_grid: np.ndarray | None = None) -> float:
    """``sup_s |T phi~(s) - 1/(1 + s**beta)|`` over ``s in [0.1, 10]``."""
    s = np.geomspace(0.1, 10.0, 201) if s_grid is None else np.asarray(s_grid, dtype=float)
    return float(np.max(np.abs(thin_rescale_transform(phi, q, r, s) - ml_limit_transform(beta, s))))


def thinning_cascade(model: WaitingTimeModel, schedule: ThinningSchedule, n_gaps: int, seed: SeedStream,
                     threads: int = 1, progress: Callable[[int, LevelResult], None] | None = None) -> list[LevelResult]:
    """KS distance of rescaled thinned gaps to the Mittag-Leffler law at every level.

    ``progress(i, result)`` is called as each level finishes.
    """
    target = waiting_time_cdf(MittagLeffler(schedule.beta))
    phi = LaplaceDensity.from_model(model)
    out = []
    for i, (q, r) in enumerate(schedule.pairs()):
        gaps = thinned_gaps(model, q, r, n_gaps, seed.child(i), threads)
        out.append(LevelResult(r, q, ks_statistic(gaps, target), ks_critical(n_gaps),
                               transform_distance(phi, q, r, schedule.beta)))
        if progress is not None:
            progress(i, out[-1])
    return out


@dataclass(frozen=True)
class TailReport:
    s: np.ndarray
    ratios: np.ndarray
    a_estimate: float
    deviation: float
    passed: bool


def check_tail_condition(phi: LaplaceDensity, s_grid, beta: float | None = None, rel_tol: float = 0.05) -> TailReport:
    """Fit ``(1 - phi~(s)) / s**beta`` as ``s -> 0``.

    The estimate is the ratio at the smallest ``s``; the deviation is the
    relative spread of the ratio over the last decade of the grid.
    """
    s = np.asarray(s_grid, dtype=float)
    b = phi.beta if beta is None else beta
    if s.ndim != 1 or s.size < 2 or np.any(s <= 0) or np.any(np.diff(s) >= 0):
        raise FitUnstable("s_grid must be a decreasing positive sequence of length >= 2")
    ratios = phi.one_minus(s) / s**b
    if np.any(~np.isfinite(ratios)) or np.any(ratios <= 0):
        raise FitUnstable("tail ratio is not finite and positive on the grid")
    last = s <= 10.0 * s[-1]
    if last.sum() < 2:
        raise FitUnstable("the grid needs at least two points in its last decade")
    window = ratios[last]
    a_est = float(ratios[-1])
    dev = float((window.max() - window.min()) / a_est)
    return TailReport(s, ratios, a_est, dev, dev <= rel_tol)
