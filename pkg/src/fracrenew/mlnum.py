"""Mittag-Leffler function on the negative real axis.

The evaluation works in the time variable ``t = |z|**(1/beta)`` because all
consumers evaluate ``E_beta(-t**beta)``.  Three routes are combined:

* the power series, for ``t <= series_t_max``;
* a fixed Talbot-type contour inversion of the Laplace transform in between;
* the inverse-power asymptotic expansion, truncated at its smallest term,
  for ``t >= asymptotic_t_min``.

The two-parameter function ``E_{beta,gamma}`` is used internally for the
waiting-time density (``gamma = beta``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gammaln, gammasgn, rgamma

from fracrenew.errors import DomainError, InversionUnstable, NonConvergent

EPS = np.finfo(float).eps
SERIES_MAX_TERMS = 100_000

# Weideman-Trefethen optimal parameters for the Talbot contour
_TALBOT_SIGMA = -0.6122
_TALBOT_MU = 0.5017
_TALBOT_ALPHA = 0.6407
_TALBOT_NU = 0.2645


@dataclass(frozen=True)
class Order:
    """Order ``beta`` of the Mittag-Leffler law, ``0 < beta <= 1``."""

    beta: float

    def __post_init__(self):
        b = float(self.beta)
        if not (math.isfinite(b) and 0.0 < b <= 1.0):
            raise DomainError(f"order beta must lie in (0, 1], got {self.beta!r}")
        object.__setattr__(self, "beta", b)


def as_order(order: Order | float) -> Order:
    return order if isinstance(order, Order) else Order(order)


class Method(str, enum.Enum):
    SERIES = "series"
    ASYMPTOTIC = "asymptotic"
    LAPLACE = "laplace_inversion"


@dataclass(frozen=True)
class MlEvalResult:
    value: float
    method_used: Method
    est_abs_error: float


@dataclass(frozen=True)
class MlConfig:
    """Dispatch thresholds (in the time variable) and contour size."""

    series_t_max: float = 5.0
    asymptotic_t_min: float = 50.0
    talbot_nodes: int = 48
    k_max: int = 64
    asymptotic_tol: float = 1e-14


DEFAULT_CONFIG = MlConfig()


class InversionResult(NamedTuple):
    value: float
    est_abs_error: float


# ---------------------------------------------------------------- Talbot


@lru_cache(maxsize=16)
def _talbot_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-half nodes ``zeta_k`` and weights for an ``n``-point contour.

    ``f(t) ~ (2/t) Re sum_k w_k F(n zeta_k / t)``.
    """
    if n < 4 or n % 2:
        raise ValueError("talbot node count must be an even integer >= 4")
    theta = -np.pi + (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    theta = theta[theta > 0]
    at = _TALBOT_ALPHA * theta
    cot = np.cos(at) / np.sin(at)
    zeta = _TALBOT_SIGMA + _TALBOT_MU * theta * cot + 1j * _TALBOT_NU * theta
    dzeta = _TALBOT_MU * (cot - at / np.sin(at) ** 2) + 1j * _TALBOT_NU
    w = np.exp(n * zeta) * dzeta / 1j
    return n * zeta, w


def _talbot(F: Callable[[np.ndarray], np.ndarray], t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised inversion; ``F`` maps an ``(len(t), n/2)`` complex array to ``(..., len(t), n/2)``.

    Returns the values and a roundoff scale ``sum |w F| / t``.
    """
    nz, w = _talbot_weights(n)
    s = nz[None, :] / t[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        Fs = F(s) * w
    val = 2.0 * np.real(Fs.sum(axis=-1)) / t
    scale = 2.0 * np.abs(Fs).sum(axis=-1) / t
    return val, scale


def _talbot_with_error(F, t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    v1, scale = _talbot(F, t, n)
    n2 = max(4, 2 * ((2 * n) // 6))
    v2, _ = _talbot(F, t, n2)
    err = np.abs(v1 - v2) + 8.0 * EPS * np.abs(scale)
    return v1, err


def laplace_invert(f: Callable, t: float, nodes: int = 48, tol: float | None = 1e-6) -> InversionResult:
    """Invert a Laplace transform at ``t > 0`` on a fixed Talbot contour.

    ``f`` must accept complex numpy arrays (the analytic continuation of the
    transform off the positive real axis).  The error estimate compares the
    ``nodes``-point result with a two-thirds-size contour and adds a roundoff
    term.  Raises :class:`InversionUnstable` on non-finite node values or when
    the estimate exceeds ``tol * max(1, |value|)``.
    """
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"inversion time must be positive, got {t!r}")
    val, err = _talbot_with_error(lambda s: np.asarray(f(s), dtype=complex), np.array([t]), nodes)
    value, est = float(val[0]), float(err[0])
    if not (math.isfinite(value) and math.isfinite(est)):
        raise InversionUnstable("non-finite transform values on the contour")
    if tol is not None and est > tol * max(1.0, abs(value)):
        raise InversionUnstable(f"inversion error estimate {est:.3g} exceeds tolerance")
    return InversionResult(value, est)


# ---------------------------------------------------------------- kernels


def _series_terms_needed(beta: float, gamma: float, xmax: float) -> int:
    if xmax == 0.0:
        return 1
    lx = math.log(xmax)
    n = 1
    prev = -math.inf
    while n < SERIES_MAX_TERMS:
        lt = n * lx - math.lgamma(beta * n + gamma)
        if lt < prev and lt < math.log(EPS) - 40.0:
            return n + 1
        prev = lt
        n += 1
    raise NonConvergent("series did not reach its stopping rule")


def _mlf_series(beta: float, gamma: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``E_{beta,gamma}(-x)`` by Horner's rule, with an error estimate."""
    nterms = _series_terms_needed(beta, gamma, float(np.max(x, initial=0.0)))
    c = rgamma(beta * np.arange(nterms) + gamma)
    val = np.full_like(x, c[-1])
    absval = np.full_like(x, abs(c[-1]))
    for cn in c[-2::-1]:
        val = cn - x * val
        absval = abs(cn) + x * absval
    return val, 4.0 * EPS * absval * nterms**0.5


@lru_cache(maxsize=64)
def _asym_coeffs(beta: float, gamma: float, m_max: int) -> tuple[np.ndarray, np.ndarray]:
    m = np.arange(1, m_max + 1)
    arg = gamma - beta * m
    loga = -gammaln(arg)
    sign = (-1.0) ** (m - 1) * gammasgn(arg)
    # rgamma vanishes at the poles of Gamma
    pole = (arg <= 0) & (arg == np.round(arg))
    loga[pole] = -np.inf
    sign[pole] = 0.0
    return loga, sign


def _mlf_asymptotic(beta: float, gamma: float, x: np.ndarray, t_min: float) -> tuple[np.ndarray, np.ndarray]:
    """``E_{beta,gamma}(-x) ~ sum_m (-1)^(m-1) x^-m / Gamma(gamma - beta m)``, cut at the smallest term."""
    m_max = int(min(1500, math.ceil(1.2 * t_min / beta) + 20))
    loga, sign = _asym_coeffs(beta, gamma, m_max)
    m = np.arange(1, m_max + 1)
    logx = np.log(x)[:, None]
    logt = loga[None, :] - m[None, :] * logx
    mag = np.where(np.isfinite(logt), logt, np.inf)
    cut = np.argmin(mag, axis=1)
    smallest = np.exp(np.take_along_axis(logt, cut[:, None], axis=1)[:, 0])
    keep = m[None, :] <= cut[:, None]
    terms = np.where(keep, sign[None, :] * np.exp(np.where(keep, logt, -np.inf)), 0.0)
    val = terms.sum(axis=1)
    err = smallest + 4.0 * EPS * np.abs(terms).sum(axis=1)
    return val, err


def _mlf_negative(beta: float, gamma: float, t: np.ndarray, cfg: MlConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``E_{beta,gamma}(-t^beta)`` for ``gamma in {1, beta}``; returns value, error, method code."""
    t = np.asarray(t, dtype=float)
    x = t**beta
    val = np.empty_like(t)
    err = np.empty_like(t)
    code = np.empty(t.shape, dtype=np.int8)
    ser = t <= cfg.series_t_max
    if ser.any():
        val[ser], err[ser] = _mlf_series(beta, gamma, x[ser])
        code[ser] = 0
    rest = ~ser
    asy = rest & (t >= cfg.asymptotic_t_min)
    if asy.any():
        v, e = _mlf_asymptotic(beta, gamma, x[asy], cfg.asymptotic_t_min)
        ok = e <= cfg.asymptotic_tol * np.maximum(np.abs(v), 1e-300) + 1e-300
        idx = np.flatnonzero(asy)
        val[idx[ok]], err[idx[ok]] = v[ok], e[ok]
        code[idx[ok]] = 1
        asy[idx[~ok]] = False
    lap = rest & ~asy
    if lap.any():
        if gamma == 1.0:
            F = lambda s: s ** (beta - 1.0) / (1.0 + s**beta)
            v, e = _talbot_with_error(F, t[lap], cfg.talbot_nodes)
        else:
            # density transform 1/(1+s^beta) inverts to t^(beta-1) E_{b,b}(-t^b)
            F = lambda s: 1.0 / (1.0 + s**beta)
            v, e = _talbot_with_error(F, t[lap], cfg.talbot_nodes)
            scale = t[lap] ** (1.0 - beta)
            v, e = v * scale, e * scale
        val[lap], err[lap] = v, e
        code[lap] = 2
    return val, err, code


_METHODS = (Method.SERIES, Method.ASYMPTOTIC, Method.LAPLACE)


def _check_z(z: float) -> float:
    z = float(z)
    if math.isnan(z) or z > 0:
        raise DomainError(f"argument must satisfy z <= 0, got {z!r}")
    return z


# ---------------------------------------------------------------- public


def ml_series(order: Order | float, z: float, tol: float = 1e-15) -> MlEvalResult:
    """Partial sum of ``sum z^n / Gamma(beta n + 1)`` for ``z <= 0``.

    Stops once ``|term| < tol`` while terms are decreasing.
    """
    beta = as_order(order).beta
    z = _check_z(z)
    if not tol > 0:
        raise DomainError("tol must be positive")
    if z == 0.0:
        return MlEvalResult(1.0, Method.SERIES, 0.0)
    lz = math.log(-z)
    total = 1.0
    abs_total = 1.0
    prev = 1.0
    for n in range(1, SERIES_MAX_TERMS):
        mag = math.exp(n * lz - math.lgamma(beta * n + 1.0))
        total += mag if n % 2 == 0 else -mag
        abs_total += mag
        if mag < tol and mag < prev:
            nxt = math.exp((n + 1) * lz - math.lgamma(beta * (n + 1) + 1.0))
            return MlEvalResult(total, Method.SERIES, 2.0 * nxt + 2.0 * EPS * abs_total * math.sqrt(n))
        prev = mag
    raise NonConvergent(f"series for E_{beta}({z}) did not converge in {SERIES_MAX_TERMS} terms")


def ml_survival_asymptotic(order: Order | float, t: float, n_terms: int = 1) -> float:
    """``n_terms`` nonzero terms of the large-``t`` expansion of ``E_beta(-t^beta)``.

    The first term is ``sin(beta pi) Gamma(beta) / (pi t^beta)``.
    """
    beta = as_order(order).beta
    if beta == 1.0:
        raise DomainError("the exponential (beta = 1) has no algebraic tail")
    t = float(t)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    if n_terms < 1:
        raise DomainError("n_terms must be >= 1")
    x = t**beta
    total = 0.0
    used = 0
    m = 0
    while used < n_terms:
        m += 1
        r = rgamma(1.0 - beta * m)
        if r == 0.0:
            continue
        total += (-1.0) ** (m - 1) * r * x ** (-m)
        used += 1
    return float(total)


def ml_eval(order: Order | float, z: float, config: MlConfig = DEFAULT_CONFIG) -> MlEvalResult:
    """``E_beta(z)`` for real ``z <= 0`` with the region dispatch described above."""
    beta = as_order(order).beta
    z = _check_z(z)
    if z == 0.0:
        return MlEvalResult(1.0, Method.SERIES, 0.0)
    if beta == 1.0:
        return MlEvalResult(math.exp(z), Method.SERIES, EPS * math.exp(z))
    t = (-z) ** (1.0 / beta)
    v, e, c = _mlf_negative(beta, 1.0, np.array([t]), config)
    return MlEvalResult(min(float(v[0]), 1.0), _METHODS[int(c[0])], float(e[0]))


def survival_values(order: Order | float, t, config: MlConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorised ``E_beta(-t^beta)`` for ``t >= 0``."""
    beta = as_order(order).beta
    t = np.asarray(t, dtype=float)
    if np.any(~(t >= 0)):
        raise DomainError("t must be non-negative")
    if beta == 1.0:
        return np.exp(-t)
    out = np.ones_like(t)
    pos = t > 0
    if pos.any():
        out[pos] = np.minimum(_mlf_negative(beta, 1.0, t[pos], config)[0], 1.0)
    return out


def pdf_values(order: Order | float, t, config: MlConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorised waiting-time density ``-d/dt E_beta(-t^beta)`` for ``t > 0``."""
    beta = as_order(order).beta
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("density needs t > 0")
    if beta == 1.0:
        return np.exp(-t)
    v = _mlf_negative(beta, beta, t, config)[0]
    return t ** (beta - 1.0) * v


def ml_pdf(order: Order | float, t: float, config: MlConfig = DEFAULT_CONFIG) -> float:
    """Mittag-Leffler waiting-time density ``t^(beta-1) E_{beta,beta}(-t^beta)``."""
    t = float(t)
    if not t > 0:
        raise DomainError(f"density needs t > 0, got {t!r}")
    return float(pdf_values(order, np.array([t]), config)[0])


def ml_pdf_eval(order: Order | float, t: float, config: MlConfig = DEFAULT_CONFIG) -> MlEvalResult:
    """Like :func:`ml_pdf`, also reporting the evaluation route and error estimate."""
    beta = as_order(order).beta
    t = float(t)
    if not t > 0:
        raise DomainError(f"density needs t > 0, got {t!r}")
    if beta == 1.0:
        return MlEvalResult(math.exp(-t), Method.SERIES, EPS * math.exp(-t))
    v, e, c = _mlf_negative(beta, beta, np.array([t]), config)
    scale = t ** (beta - 1.0)
    return MlEvalResult(float(v[0]) * scale, _METHODS[int(c[0])], float(e[0]) * scale)


# ---------------------------------------------------------------- counting weights


def _pmf_series(beta: float, x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """``x^k E^{(k)}(-x) / k!`` from the differentiated series, in log space."""
    xmax = float(np.max(x, initial=0.0))
    lx = np.log(np.maximum(x, 1e-300))
    # terms C(j+k, k) x^(j+k) / Gamma(beta (j+k) + 1)
    jmax = 8
    if xmax > 0:
        lxm = math.log(xmax)
        top = prev = -math.inf
        for j in range(SERIES_MAX_TERMS):
            lt = (math.lgamma(j + k + 1) - math.lgamma(j + 1) - math.lgamma(beta * (j + k) + 1.0)
                  + (j + k) * lxm)
            top = max(top, lt)
            if j > 2 and lt < prev and lt < top - 45.0:
                break
            prev = lt
        else:
            raise NonConvergent("differentiated series did not converge")
        jmax = j + 1
    j = np.arange(jmax)
    logc = (gammaln(j + k + 1.0) - gammaln(j + 1.0) - math.lgamma(k + 1.0)
            - gammaln(beta * (j + k) + 1.0))
    logt = logc[None, :] + (j + k)[None, :] * lx[:, None]
    # shift by the row maximum before exponentiating
    shift = logt.max(axis=1, keepdims=True)
    terms = np.exp(logt - shift)
    sign = np.where(j % 2 == 0, 1.0, -1.0)
    val = (terms * sign).sum(axis=1) * np.exp(shift[:, 0])
    absval = terms.sum(axis=1) * np.exp(shift[:, 0])
    val = np.where(x > 0, val, 1.0 if k == 0 else 0.0)
    return val, 4.0 * EPS * absval * math.sqrt(jmax)


def counting_weights(order: Order | float, t, k_max: int, config: MlConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """``P(N(t) = k) = t^(beta k) E_beta^(k)(-t^beta) / k!`` for ``k = 0..k_max``.

    Returns arrays of shape ``(len(t), k_max + 1)``: values and error estimates.
    For each entry the series or contour route with the smaller estimate wins;
    ``k = 0`` is the survival function itself.
    """
    beta = as_order(order).beta
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~(t >= 0)):
        raise DomainError("t must be non-negative")
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    k = np.arange(k_max + 1)
    out = np.zeros((t.size, k_max + 1))
    err = np.zeros_like(out)
    zero = t == 0
    out[zero, 0] = 1.0
    pos = ~zero
    if not pos.any():
        return out, err
    tp = t[pos]
    if beta == 1.0:
        lt = np.log(tp)[:, None]
        p = np.exp(k[None, :] * lt - tp[:, None] - gammaln(k + 1.0)[None, :])
        out[pos] = p
        err[pos] = 4.0 * EPS * p * (1.0 + k[None, :])
        return out, err
    v0, e0, _ = _mlf_negative(beta, 1.0, tp, config)
    out[pos, 0] = np.minimum(v0, 1.0)
    err[pos, 0] = e0
    if k_max == 0:
        return out, err

    x = tp**beta
    best = np.full((tp.size, k_max), np.inf)
    bestv = np.zeros((tp.size, k_max))
    # contour route for all k at once
    n = config.talbot_nodes

    def stack(s):
        sb = s**beta
        u = 1.0 / (1.0 + sb)
        base = s ** (beta - 1.0) * u
        powers = base[None] * np.cumprod(np.broadcast_to(u, (k_max,) + u.shape), axis=0)
        return powers

    v1, scale = _talbot(stack, tp, n)
    n2 = max(4, 2 * ((2 * n) // 6))
    v2, _ = _talbot(stack, tp, n2)
    el = (np.abs(v1 - v2) + 8.0 * EPS * scale).T
    v1 = v1.T
    finite = np.isfinite(v1) & np.isfinite(el)
    best = np.where(finite, el, np.inf)
    bestv = np.where(finite, v1, 0.0)
    ser = tp <= 2.0 * config.series_t_max
    if ser.any():
        for kk in range(1, k_max + 1):
            vs, es = _pmf_series(beta, x[ser], kk)
            col = kk - 1
            better = es < best[ser, col]
            idx = np.flatnonzero(ser)[better]
            best[idx, col] = es[better]
            bestv[idx, col] = vs[better]
    out[pos, 1:] = np.clip(bestv, 0.0, 1.0)
    err[pos, 1:] = best
    return out, err


def ml_deriv(order: Order | float, k: int, z: float, config: MlConfig = DEFAULT_CONFIG) -> float:
    """``k``-th derivative of ``E_beta`` at ``z <= 0``."""
    beta = as_order(order).beta
    z = _check_z(z)
    k = int(k)
    if k < 0 or k > config.k_max:
        raise DomainError(f"derivative order must lie in [0, {config.k_max}], got {k}")
    if k == 0:
        return ml_eval(beta, z, config).value
    if beta == 1.0:
        return math.exp(z)
    if z == 0.0:
        return math.exp(math.lgamma(k + 1.0) - math.lgamma(beta * k + 1.0))
    x = -z
    t = x ** (1.0 / beta)
    if t <= config.series_t_max:
        return _deriv_series(beta, k, z)
    p, _ = counting_weights(beta, np.array([t]), k, config)
    return float(p[0, k] * math.exp(math.lgamma(k + 1.0) - k * math.log(x)))


def _deriv_series(beta: float, k: int, z: float) -> float:
    # sum_{j>=0} (j+k)!/j! z^j / Gamma(beta (j+k) + 1)
    lz = math.log(-z)
    total = 0.0
    prev = math.inf
    for j in range(SERIES_MAX_TERMS):
        lt = math.lgamma(j + k + 1.0) - math.lgamma(j + 1.0) - math.lgamma(beta * (j + k) + 1.0) + j * lz
        mag = math.exp(lt)
        total += mag if j % 2 == 0 else -mag
        if j > 2 and mag < prev and mag < 1e-17 * max(1.0, abs(total)):
            return total
        prev = mag
    raise NonConvergent("differentiated series did not converge")
