"""Helpers for per-step solution fields.

A *field* is either a 1-d array of length N+1 (deterministic scalar
recursions) or a list of N+1 per-step lattice arrays.  These helpers treat
both uniformly; step values are compared nodewise.
"""

from __future__ import annotations

import numpy as np


def step_values(field, i: int) -> np.ndarray:
    return np.asarray(field[i], dtype=float)


def sup_distance(a, b) -> float:
    """Max over steps of the nodewise max absolute difference."""
    if len(a) != len(b):
        raise ValueError("fields live on different grids")
    worst = 0.0
    for i in range(len(a)):
        worst = max(worst, float(np.max(np.abs(step_values(a, i) - step_values(b, i)))))
    return worst


def max_abs(field) -> float:
    return max(float(np.max(np.abs(step_values(field, i)))) for i in range(len(field)))


def worst_excess(a, b) -> tuple[float, int]:
    """Largest nodewise violation of a <= b, with the offending step."""
    worst, where = -np.inf, -1
    for i in range(len(a)):
        ex = float(np.max(step_values(a, i) - step_values(b, i)))
        if ex > worst:
            worst, where = ex, i
    return worst, where


def nodewise_leq(a, b, tol: float) -> tuple[bool, float, int]:
    worst, where = worst_excess(a, b)
    return worst <= tol, worst, where
