"""Fractional Poisson renewal processes, their thinning limit and the compound renewal walk."""

from __future__ import annotations

__version__ = "0.1.0"
