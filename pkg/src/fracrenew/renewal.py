"""Distributions of renewal processes.

Three waiting-time laws are supported: exponential (Poisson process),
Mittag-Leffler (fractional Poisson process) and a Lomax power tail used as
the generic heavy-tailed input of the thinning construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.signal import convolve
from scipy.special import gammainc, gammaincc, gammaln, zeta

from fracrenew import mlnum
from fracrenew.errors import ConvolutionAccuracy, DomainError, GridMismatch


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise DomainError(f"rate must be positive, got {self.rate!r}")


@dataclass(frozen=True)
class MittagLeffler:
    beta: float
    time_scale: float = 1.0

    def __post_init__(self):
        mlnum.Order(self.beta)
        if not (math.isfinite(self.time_scale) and self.time_scale > 0):
            raise DomainError(f"time_scale must be positive, got {self.time_scale!r}")

    @property
    def order(self) -> mlnum.Order:
        return mlnum.Order(self.beta)


@dataclass(frozen=True)
class ParetoTail:
    """Lomax law with survival ``(1 + t/c)**-beta``, ``0 < beta < 1``."""

    beta: float
    scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise DomainError(f"tail index must lie in (0, 1), got {self.beta!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"scale must be positive, got {self.scale!r}")

    @property
    def tail_constant(self) -> float:
        """``a`` in ``1 - phi~(s) ~ a s**beta`` as ``s -> 0``."""
        return self.scale**self.beta * math.gamma(1.0 - self.beta)


WaitingTimeModel = Union[Exponential, MittagLeffler, ParetoTail]


def _ml_reduces(model) -> bool:
    return isinstance(model, MittagLeffler) and model.beta == 1.0


def _scalar_or_array(t, fn):
    arr = np.asarray(t, dtype=float)
    out = fn(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


# ---------------------------------------------------------------- grid functions


@dataclass(frozen=True)
class GridFn:
    """Function tabulated on a uniform grid starting at 0.

    Near the origin the function behaves like ``sum c t**p`` over exponents
    ``p = singular_exponent + n * exponent_step + m`` (``n, m >= 0``).  The
    default ``(0, 1)`` means smooth.  For a negative exponent the value stored
    at ``t = 0`` is ignored.
    """

    grid: np.ndarray
    values: np.ndarray
    singular_exponent: float = 0.0
    exponent_step: float = 1.0
    step: float = field(init=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise GridMismatch("grid and values must be 1-d arrays of equal length >= 2")
        d = np.diff(g)
        if np.any(d <= 0):
            raise GridMismatch("grid must be strictly increasing")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "step", float(d.mean()))
        if not self.singular_exponent > -1.0:
            raise DomainError("singular_exponent must exceed -1")
        if not 0.0 < self.exponent_step <= 1.0:
            raise DomainError("exponent_step must lie in (0, 1]")

    @property
    def is_regular(self) -> bool:
        a = self.singular_exponent
        return self.exponent_step == 1.0 and a >= 0 and a == round(a)

    def is_uniform(self) -> bool:
        return bool(np.allclose(np.diff(self.grid), self.step, rtol=1e-9, atol=0.0))


def uniform_grid(t_end: float, n_cells: int) -> np.ndarray:
    return np.arange(n_cells + 1) * (t_end / n_cells)


def _local_exponents(a: float, step: float, span: float = 2.0, cap: int = 10) -> np.ndarray:
    ps = set()
    n = 0
    while a + n * step < a + span:
        m = 0
        while a + n * step + m < a + span:
            ps.add(round(a + n * step + m, 12))
            m += 1
        n += 1
    return np.array(sorted(ps)[:cap])


class _EndRule:
    """Generalised Euler-Maclaurin (Navot) correction at one singular endpoint.

    With ``phi(t) ~ sum_i c_i t**p_i`` near the end, the integral equals the
    trapezoid sum over the open interior minus ``sum_i zeta(-p_i) c_i h**(1+p_i)``.
    The ``c_i`` are fitted from the first ``L`` interior samples.
    """

    def __init__(self, a: float, step: float, h: float):
        self.p = _local_exponents(a, step)
        self.L = self.p.size
        j = np.arange(1, self.L + 1) * h
        V = j[:, None] ** self.p[None, :]
        z = zeta(-self.p)
        # p = -1 - ... never occurs; zeta(1) is excluded by p > -1
        self.weights = -np.linalg.solve(V.T, z * h ** (1.0 + self.p))

    def correction(self, samples: np.ndarray) -> np.ndarray:
        """``samples[..., j-1] = phi(j h)`` for ``j = 1..L``."""
        return samples @ self.weights


def convolve_grid(f: GridFn, g: GridFn) -> GridFn:
    """Laplace convolution ``(f * g)(t) = int_0^t f(t') g(t - t') dt'`` on a shared grid.

    Trapezoid rule; non-smooth endpoints (``t**(beta-1)`` densities and their
    ``t**beta`` corrections) get the generalised Euler-Maclaurin correction.
    Points closer to the origin than the correction stencils are integrated
    with the smooth factor frozen (first-order accurate).
    """
    if f.grid.shape != g.grid.shape or not np.allclose(f.grid, g.grid, rtol=1e-12, atol=0):
        raise GridMismatch("convolution operands must share one grid")
    if not (f.is_uniform() and abs(f.grid[0]) < 1e-15 * f.step + 1e-300):
        raise GridMismatch("convolution needs a uniform grid starting at 0")
    h = f.step
    fv, gv = np.array(f.values), np.array(g.values)
    m = fv.size
    method = "direct" if m <= 2048 else "fft"
    if f.is_regular and g.is_regular:
        full = convolve(fv, gv, mode="full", method=method)[:m]
        vals = h * (full - 0.5 * fv[0] * gv - 0.5 * gv[0] * fv)
        vals[0] = 0.0
        return GridFn(f.grid, vals)

    rules = [None if x.is_regular else _EndRule(x.singular_exponent, x.exponent_step, h) for x in (f, g)]
    fz, gz = fv.copy(), gv.copy()
    if rules[0] is not None:
        fz[0] = 0.0
    if rules[1] is not None:
        gz[0] = 0.0
    full = convolve(fz, gz, mode="full", method=method)[:m]
    vals = h * full
    if rules[0] is None:
        vals -= 0.5 * h * fv[0] * gv
    if rules[1] is None:
        vals -= 0.5 * h * gv[0] * fv
    n = np.arange(m)
    need = sum(r.L for r in rules if r is not None) + 1
    big = n >= need
    for side, rule in enumerate(rules):
        if rule is None:
            continue
        j = np.arange(1, rule.L + 1)
        nn = n[big][:, None]
        if side == 0:
            samples = fv[j][None, :] * gv[nn - j[None, :]]
            # the sum above holds these samples; the rule replaces the end weight
        else:
            samples = gv[j][None, :] * fv[nn - j[None, :]]
        vals[big] += rule.correction(samples)
    af, ag = f.singular_exponent, g.singular_exponent
    for k in np.flatnonzero(~big):
        # near the origin: freeze the smooth factor against the exact beta kernel
        if k == 0:
            vals[k] = 0.0
            continue
        tk = k * h
        jj = np.arange(1, k) if k > 1 else np.array([])
        if jj.size:
            tj = jj * h
            psi = fv[jj] * gv[k - jj] / (tj**af * (tk - tj) ** ag)
            psi0 = float(np.mean(psi))
        else:
            psi0 = float(fv[1] * gv[1] / (h**af * h**ag))
        b = math.exp(gammaln(1 + af) + gammaln(1 + ag) - gammaln(2 + af + ag))
        vals[k] = psi0 * tk ** (1 + af + ag) * b
    a_out = af + ag + 1.0
    step_out = f.exponent_step if f.exponent_step == g.exponent_step else min(f.exponent_step, g.exponent_step)
    if a_out < 0:
        vals[0] = np.inf
    return GridFn(f.grid, vals, a_out, step_out)


# ---------------------------------------------------------------- closed forms


@dataclass(frozen=True)
class CountingPmf:
    """``P(N(t) = k)`` for ``k = 0..K`` with the mass not covered by the table."""

    t: float
    probs: np.ndarray
    tail_bound: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be non-negative")

    @property
    def k_max(self) -> int:
        return self.probs.size - 1


def survival(model: WaitingTimeModel, t):
    """``P(T > t)``."""

    def fn(tt):
        if np.any(~(tt >= 0)):
            raise DomainError("survival needs t >= 0")
        if isinstance(model, Exponential):
            return np.exp(-model.rate * tt)
        if isinstance(model, MittagLeffler):
            return mlnum.survival_values(model.beta, tt / model.time_scale)
        return (1.0 + tt / model.scale) ** (-model.beta)

    return _scalar_or_array(t, fn)


def wait_pdf(model: WaitingTimeModel, t):
    """Waiting-time density ``-dPsi/dt``."""

    def fn(tt):
        if isinstance(model, Exponential):
            if np.any(~(tt >= 0)):
                raise DomainError("density needs t >= 0")
            return model.rate * np.exp(-model.rate * tt)
        if np.any(~(tt > 0)) and not _ml_reduces(model):
            raise DomainError("density needs t > 0")
        if isinstance(model, MittagLeffler):
            tau = model.time_scale
            if model.beta == 1.0:
                return np.exp(-tt / tau) / tau
            return mlnum.pdf_values(model.beta, tt / tau) / tau
        return _lomax_pdf(model, tt)

    return _scalar_or_array(t, fn)


def wait_laplace(model: WaitingTimeModel, s):
    """Laplace transform of the waiting-time density; complex ``s`` allowed except for Lomax."""
    if isinstance(model, Exponential):
        return model.rate / (model.rate + s)
    if isinstance(model, MittagLeffler):
        return 1.0 / (1.0 + (model.time_scale * s) ** model.beta)
    return 1.0 - lomax_one_minus_laplace(model, s)


def survival_laplace(model: WaitingTimeModel, s):
    if isinstance(model, ParetoTail):
        return lomax_one_minus_laplace(model, s) / s
    return (1.0 - wait_laplace(model, s)) / s


def lomax_one_minus_laplace(model: ParetoTail, s):
    """``1 - phi~(s) = x**b e**x Gamma(1-b, x)`` with ``x = c s``, computed without cancellation."""
    b = model.beta
    x = np.asarray(model.scale * np.asarray(s, dtype=float))
    out = np.empty_like(x, dtype=float)
    small = x < 600.0
    xs = x[small]
    out[small] = xs**b * np.exp(xs) * gammaincc(1.0 - b, xs) * math.gamma(1.0 - b)
    xl = x[~small]
    if xl.size:
        # e^x Gamma(a, x) ~ x^(a-1) sum_n (a-1)(a-2)...(a-n) / x^n
        a = 1.0 - b
        acc = np.ones_like(xl)
        term = np.ones_like(xl)
        for n in range(1, 30):
            term = term * (a - n) / xl
            acc = acc + term
        out[~small] = xl**b * xl ** (a - 1.0) * acc
    return out if out.ndim else float(out)


def _lomax_pdf(model: ParetoTail, t: np.ndarray) -> np.ndarray:
    c, b = model.scale, model.beta
    return (b / c) * (1.0 + t / c) ** (-b - 1.0)


def _lomax_grid_pmf(model: ParetoTail, t: float, k_max: int, n_cells: int) -> np.ndarray:
    grid = uniform_grid(t, n_cells)
    h = grid[1]
    phi = GridFn(grid, _lomax_pdf(model, grid))
    psi_rev = survival(model, grid)[::-1]
    w = np.full(grid.size, h)
    w[0] = w[-1] = 0.5 * h
    probs = np.zeros(k_max + 1)
    probs[0] = survival(model, t)
    fk = phi
    for k in range(1, k_max + 1):
        probs[k] = float(np.dot(w, fk.values * psi_rev))
        if k < k_max:
            mass = float(np.dot(w, fk.values))
            if mass < 1e-17:
                break
            fk = convolve_grid(fk, phi)
    return probs


def _lomax_pmf(model: ParetoTail, t: float, k_max: int, target: float = 1e-6) -> np.ndarray:
    n = max(64, int(math.ceil(32 * t / model.scale)))
    n = min(n, 1024)
    coarse = _lomax_grid_pmf(model, t, k_max, n)
    while n <= 16384:
        fine = _lomax_grid_pmf(model, t, k_max, 2 * n)
        err = np.abs(fine - coarse) / 3.0
        if err.sum() < target:
            return np.clip(fine + (fine - coarse) / 3.0, 0.0, 1.0)
        coarse = fine
        n *= 2
    if err.sum() < 1e-4:
        return np.clip(fine + (fine - coarse) / 3.0, 0.0, 1.0)
    raise ConvolutionAccuracy(f"grid counting pmf error {err.sum():.2e} exceeds 1e-4")


def counting_pmf(model: WaitingTimeModel, t: float, k_max: int) -> CountingPmf:
    """``P(N(t) = k)`` for ``k <= k_max``; the uncovered mass goes to ``tail_bound``."""
    t = float(t)
    if not t >= 0:
        raise DomainError("counting pmf needs t >= 0")
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    if t == 0:
        probs = np.zeros(k_max + 1)
        probs[0] = 1.0
        return CountingPmf(0.0, probs, 0.0)
    if isinstance(model, Exponential):
        k = np.arange(k_max + 1)
        lt = model.rate * t
        probs = np.exp(k * math.log(lt) - lt - gammaln(k + 1.0))
    elif isinstance(model, MittagLeffler):
        probs = mlnum.counting_weights(model.beta, np.array([t / model.time_scale]), k_max)[0][0]
    else:
        probs = _lomax_pmf(model, t, k_max)
    probs[0] = survival(model, t)
    return CountingPmf(t, probs, max(0.0, 1.0 - float(probs.sum())))


def counting_pmf_table(model: WaitingTimeModel, t: np.ndarray, k_max: int) -> np.ndarray:
    """Counting weights for many times at once, shape ``(len(t), k_max + 1)``."""
    t = np.asarray(t, dtype=float)
    if isinstance(model, MittagLeffler):
        return mlnum.counting_weights(model.beta, t / model.time_scale, k_max)[0]
    if isinstance(model, Exponential):
        k = np.arange(k_max + 1)
        lt = model.rate * t[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(k * np.log(lt) - lt - gammaln(k + 1.0))
        out[t == 0, 0] = 1.0
        out[t == 0, 1:] = 0.0
        return out
    return np.array([counting_pmf(model, ti, k_max).probs for ti in t])


def erlang_pdf(model: WaitingTimeModel, k: int, t):
    """Density of the ``k``-th renewal epoch ``t_k``."""
    if k < 1:
        raise DomainError("Erlang order must be >= 1")
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~(arr > 0)):
        raise DomainError("Erlang density needs t > 0")
    if isinstance(model, ParetoTail):
        out = np.array([_lomax_erlang_pdf(model, k, ti) for ti in arr])
    elif isinstance(model, Exponential):
        lt = model.rate * arr
        out = model.rate * np.exp((k - 1) * np.log(lt) - lt - math.lgamma(k))
    else:
        p = counting_pmf_table(model, arr, k)[:, k]
        out = model.beta * k * p / arr
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def _lomax_erlang_pdf(model: ParetoTail, k: int, t: float, n_cells: int = 2048) -> float:
    grid = uniform_grid(t, n_cells)
    phi = GridFn(grid, _lomax_pdf(model, grid))
    fk = phi
    for _ in range(k - 1):
        fk = convolve_grid(fk, phi)
    return float(fk.values[-1])


def erlang_cdf(model: WaitingTimeModel, k: int, t):
    """``P(t_k <= t) = 1 - sum_{n<k} P(N(t) = n)``."""
    if k < 1:
        raise DomainError("Erlang order must be >= 1")

    def one(ti):
        if ti == 0:
            return 0.0
        if isinstance(model, Exponential):
            return float(gammainc(k, model.rate * ti))
        pmf = counting_pmf(model, ti, k - 1)
        return float(min(1.0, max(0.0, 1.0 - pmf.probs.sum())))

    arr = np.asarray(t, dtype=float)
    if np.any(~(arr >= 0)):
        raise DomainError("Erlang distribution needs t >= 0")
    out = np.array([one(float(ti)) for ti in np.atleast_1d(arr)])
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def exponential_moment(model: Exponential, n: int) -> float:
    """``<T^n>`` for the exponential law, ``n! / rate^n``.

    No moment API exists for the Mittag-Leffler law with ``beta < 1``, whose
    mean is infinite.
    """
    return math.factorial(n) / model.rate**n
