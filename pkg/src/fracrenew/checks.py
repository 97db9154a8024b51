"""Invariant batteries shared by the ``verify`` command and the test-suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fracrenew import fracalc, mlnum, quadrature
from fracrenew.renewal import Exponential, MittagLeffler, erlang_pdf


@dataclass
class CheckResult:
    name: str
    passed: bool
    columns: list[str]
    rows: list[list] = field(default_factory=list)


def divided_differences(t: np.ndarray, f: np.ndarray, n: int) -> np.ndarray:
    """``n``-th divided differences ``f[t_i, ..., t_{i+n}]``; equal ``f^(n)(xi)/n!``."""
    d = np.asarray(f, dtype=float).copy()
    for m in range(1, n + 1):
        d = (d[1:] - d[:-1]) / (t[m:] - t[:-m])
    return d


def monotone_check(beta: float, n_max: int = 3, t_grid: np.ndarray | None = None) -> CheckResult:
    """Sign alternation ``(-1)^n f^(n) >= 0`` for ``Psi`` and ``phi`` by divided differences."""
    t = np.geomspace(1e-2, 1e2, 50) if t_grid is None else np.asarray(t_grid, dtype=float)
    funcs = {"psi": mlnum.survival_values(beta, t), "phi": mlnum.pdf_values(beta, t)}
    rows = []
    for name, vals in funcs.items():
        for n in range(n_max + 1):
            signed = (-1) ** n * divided_differences(t, vals, n)
            rows.append([name, n, int(np.sum(signed < 0)), float(signed.min())])
    return CheckResult(f"monotone beta={beta}", all(r[2] == 0 for r in rows),
                       ["function", "order", "violations", "min_signed_value"], rows)


def relaxation_check(beta: float, h: float = 1e-3, T: float = 5.0, t_min: float = 0.1,
                     tol: float = 5e-3, order_tol: float = 0.2) -> CheckResult:
    """Relaxation residual at ``2h``, ``h``, ``h/2`` and the observed reduction per halving.

    L1 converges like ``h**(2-beta)`` for smooth functions, but ``Psi`` carries a
    ``t**beta`` term, which caps the order at ``1 + beta``; the expected ratio
    is ``2**min(2-beta, 1+beta)`` (both equal 1.5 at ``beta = 0.5``).
    """
    hs = [2.0 * h, h, 0.5 * h]
    res = [fracalc.relaxation_residual(beta, hh, T, t_min) for hh in hs]
    expected = 2.0 ** min(2.0 - beta, 1.0 + beta) if beta < 1 else 4.0
    rows = []
    for i, (hh, r) in enumerate(zip(hs, res)):
        ratio = res[i - 1] / r if i else float("nan")
        rows.append([hh, r, ratio, expected])
    ratios = [row[2] for row in rows[1:]]
    ok = res[1] < tol and all(abs(q / expected - 1.0) <= order_tol for q in ratios)
    return CheckResult(f"relaxation beta={beta}", ok, ["h", "residual", "ratio", "expected_ratio"], rows)


def laplace_pairs_check(beta: float, ks=(1, 2, 3), s_values=(0.5, 1.0, 2.0), tol: float = 1e-5) -> CheckResult:
    """Forward quadrature of the Erlang densities against ``phi~(s)**k``."""
    model = Exponential(1.0) if beta == 1.0 else MittagLeffler(beta)
    rows = []
    for k in ks:
        for s in s_values:
            num, _ = quadrature.laplace_transform(lambda t: erlang_pdf(model, k, t), s, tol=1e-10)
            exact = (1.0 / (1.0 + s)) ** k if beta == 1.0 else (1.0 / (1.0 + s**beta)) ** k
            rows.append([k, s, num, exact, abs(num - exact)])
    return CheckResult(f"laplace beta={beta}", all(r[4] < tol for r in rows),
                       ["k", "s", "quadrature", "exact", "abs_error"], rows)


def caputo_laplace_battery(beta: float, s_values=(0.5, 1.0, 4.0), tol: float = 1e-10) -> CheckResult:
    rows = [[s, fracalc.caputo_laplace_check(beta, s)] for s in s_values]
    return CheckResult(f"caputo-laplace beta={beta}", all(r[1] < tol for r in rows), ["s", "residual"], rows)


SUITES = {
    "monotone": monotone_check,
    "relaxation": relaxation_check,
    "laplace": laplace_pairs_check,
    "caputo-laplace": caputo_laplace_battery,
}


def run_suite(name: str, beta: float, **options) -> CheckResult:
    """Run one battery; ``options`` go to the suite function (e.g. ``t_min`` for relaxation)."""
    try:
        fn = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    mlnum.Order(beta)
    return fn(beta, **options)
