"""Accuracy and RMSE profiles over ensembles of solver runs.

A method *solves* a realization at tolerance ``tau_f`` when

    (J_best - J_t) / (J0 - J_t) <= tau_f

where ``J0`` is the common initial cost and ``J_t`` the lowest cost reached by
any method on that realization.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_EXPONENTS = np.round(np.arange(0, 501) * 0.01, 2)
METHOD_ORDER = ("GN", "LS", "REG")


@dataclass
class ProfileCurve:
    x_grid: np.ndarray
    fraction_per_method: Dict[str, np.ndarray]
    n_r: int
    excluded: List[int] = field(default_factory=list)
    degenerate: List[int] = field(default_factory=list)

    @property
    def methods(self):
        return list(self.fraction_per_method)


def _ordered_methods(methods):
    known = [m for m in METHOD_ORDER if m in methods]
    return known + sorted(m for m in methods if m not in METHOD_ORDER)


def _finite(x):
    return x is not None and math.isfinite(x)


def select_truth(rows):
    """Lowest best-cost over methods; returns ``(J_t, method)`` or ``None``.

    Ties go to the earliest of GN, LS, REG.
    """
    rank = {m: i for i, m in enumerate(METHOD_ORDER)}
    candidates = [r for r in rows if _finite(r.cost_best)]
    if not candidates:
        return None
    best = min(candidates, key=lambda r: (r.cost_best, rank.get(r.method, len(rank))))
    return best.cost_best, best.method


def solved_flag(row, J0, J_t, tau_f):
    """Whether ``row`` (or a best cost) is within ``tau_f`` of the truth."""
    J_best = row if isinstance(row, (int, float, np.floating)) else row.cost_best
    if not _finite(J_best):
        return False
    denom = J0 - J_t
    if not denom > 0:
        return True
    return (J_best - J_t) / denom <= tau_f


def _realizations(table):
    groups = table.by_realization() if hasattr(table, "by_realization") else None
    if groups is None:
        groups = {}
        for row in table:
            groups.setdefault(row.seed_index, []).append(row)
    if not groups:
        raise ValueError("empty result table")
    return groups


def _gap_ratios(table):
    """Per realization: {method: gap ratio}, plus excluded / degenerate ids."""
    groups = _realizations(table)
    methods = _ordered_methods({r.method for rows in groups.values() for r in rows})
    ratios, excluded, degenerate = {}, [], []
    for index in sorted(groups):
        rows = groups[index]
        truth = select_truth(rows)
        if truth is None:
            excluded.append(index)
            continue
        J_t = truth[0]
        J0 = next((r.cost_initial for r in rows if _finite(r.cost_initial)), float("nan"))
        per = {}
        if not J0 - J_t > 0:
            degenerate.append(index)
            log.info("realization %d is degenerate (J0 = J_t)", index)
        for r in rows:
            if not _finite(r.cost_best):
                per[r.method] = math.inf
            elif not J0 - J_t > 0:
                per[r.method] = 0.0
            else:
                per[r.method] = (r.cost_best - J_t) / (J0 - J_t)
        ratios[index] = (per, rows)
    return groups, methods, ratios, excluded, degenerate


def accuracy_profile(table, exponents=None):
    """Fraction of realizations solved per method at ``tau_f = 10**-i``.

    ``x_grid`` holds ``i = -log10(tau_f)``.
    """
    exponents = DEFAULT_EXPONENTS if exponents is None else np.asarray(exponents, float)
    groups, methods, ratios, excluded, degenerate = _gap_ratios(table)
    n_r = len(groups)
    tau = 10.0 ** (-exponents)
    fractions = {}
    for m in methods:
        counts = np.zeros(len(tau))
        for per, _ in ratios.values():
            if m in per:
                counts += per[m] <= tau
        fractions[m] = counts / n_r
    return ProfileCurve(exponents.copy(), fractions, n_r, excluded, degenerate)


def analysis_rmse(x_a, x_ref):
    x_a = np.asarray(x_a, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x_a.shape != x_ref.shape:
        raise ValueError("shape mismatch")
    return float(np.linalg.norm(x_a - x_ref) / np.sqrt(x_a.size))


def rmse_profile(table, tau_f=1e-3, grid=None, n_points=200):
    """Fraction solved at ``tau_f`` whose analysis RMSE is within each threshold."""
    groups, methods, ratios, excluded, degenerate = _gap_ratios(table)
    n_r = len(groups)
    if grid is None:
        rmses = [r.rmse for rows in groups.values() for r in rows if _finite(r.rmse)]
        top = max(rmses) if rmses else 1.0
        grid = np.linspace(0.0, top, n_points)
    grid = np.asarray(grid, dtype=float)
    fractions = {}
    for m in methods:
        counts = np.zeros(len(grid))
        for per, rows in ratios.values():
            row = next((r for r in rows if r.method == m), None)
            if row is None or not per.get(m, math.inf) <= tau_f or not _finite(row.rmse):
                continue
            counts += row.rmse <= grid
        fractions[m] = counts / n_r
    return ProfileCurve(grid, fractions, n_r, excluded, degenerate)


def fraction_at(curve, x):
    """Fractions per method at the grid point closest to ``x``."""
    i = int(np.argmin(np.abs(curve.x_grid - x)))
    return {m: float(f[i]) for m, f in curve.fraction_per_method.items()}
