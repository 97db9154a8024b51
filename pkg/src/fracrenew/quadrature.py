"""Forward Laplace transforms by exp-sinh quadrature.

The substitution ``t = exp(pi/2 sinh u)`` clusters nodes doubly
exponentially at both ends, which copes with the ``t**beta`` behaviour of
Mittag-Leffler quantities at the origin and the slow algebraic tails.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from fracrenew.errors import QuadratureFailure

# t reaches about 1e-138 at the lower end, enough for integrable t**(beta-1)
# singularities down to beta ~ 0.1
_U_MIN, _U_MAX = -6.0, 5.0


def _nodes(h: float, s: float) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(_U_MIN, _U_MAX + 0.5 * h, h)
    t = np.exp(0.5 * np.pi * np.sinh(u))
    w = h * 0.5 * np.pi * np.cosh(u) * t * np.exp(-s * t)
    # only the exponentially damped right end is pruned; tiny-t nodes may carry singular mass
    keep = (t < 1.0) | (w > 1e-30)
    return t[keep], w[keep]


def laplace_transform(f: Callable[[np.ndarray], np.ndarray], s: float, tol: float = 1e-11,
                      max_level: int = 7) -> tuple[float, float]:
    """``int_0^inf exp(-s t) f(t) dt`` for a vectorised, bounded-ish ``f``.

    Halves the step until two successive levels agree to ``tol`` (absolute);
    returns ``(value, error_estimate)``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    prev = None
    for level in range(2, max_level + 1):
        t, w = _nodes(2.0**-level, s)
        val = float(np.dot(w, np.asarray(f(t), dtype=float)))
        if not math.isfinite(val):
            raise QuadratureFailure("non-finite integrand in Laplace quadrature")
        if prev is not None and abs(val - prev) < tol:
            return val, abs(val - prev)
        prev = val
    raise QuadratureFailure(f"Laplace quadrature at s={s} did not settle below {tol:g}")
