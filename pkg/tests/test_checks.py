from __future__ import annotations

import numpy as np
import pytest

from fracrenew import checks


def test_divided_differences_of_cubic():
    t = np.geomspace(0.1, 5, 12)
    d3 = checks.divided_differences(t, t**3, 3)
    assert np.allclose(d3, 1.0, rtol=1e-9)


@pytest.mark.parametrize("beta", [0.25, 0.5, 0.75, 1.0])
def test_monotone(beta):
    res = checks.monotone_check(beta)
    assert res.passed and all(r[2] == 0 for r in res.rows)


def test_monotone_detects_violation():
    t = np.geomspace(1e-2, 1e2, 50)
    bumpy = np.exp(-t) + 1e-3 * np.sin(5 * t)
    d = -checks.divided_differences(t, bumpy, 1)
    assert np.any(d < 0)


def test_relaxation_suite():
    res = checks.run_suite("relaxation", 0.5)
    assert res.passed
    assert res.columns == ["h", "residual", "ratio", "expected_ratio"]


def test_laplace_pairs():
    for beta in (0.5, 1.0):
        assert checks.run_suite("laplace", beta).passed


def test_caputo_laplace():
    assert checks.run_suite("caputo-laplace", 0.3).passed


def test_unknown_suite():
    with pytest.raises(KeyError):
        checks.run_suite("nope", 0.5)
