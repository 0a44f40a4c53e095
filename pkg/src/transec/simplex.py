"""Self-contained dense two-phase simplex with Bland's rule.

Deterministic and dependency-free; intended for small instances (gadgets,
chains) and as an independent cross-check of the default HiGHS backend.
Dense tableaus make it unsuitable for the full experiment ensembles.
"""

from __future__ import annotations

import numpy as np

OPTIMAL = 0
INFEASIBLE = 2
FAILED = 3

_TOL = 1e-9


def solve_dense(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, ub=None,
                max_iter=200_000):
    """Minimize c.x subject to a_ub x <= b_ub, a_eq x = b_eq, 0 <= x <= ub.

    Returns (status, value, x).  ub entries may be inf; finite ones are
    expanded into explicit rows, so keep the instance small.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    rhs = []
    senses = []  # "<" or "="
    if a_ub is not None and len(b_ub):
        a_ub = np.asarray(a_ub, dtype=float)
        for i in range(a_ub.shape[0]):
            rows.append(a_ub[i])
            rhs.append(float(b_ub[i]))
            senses.append("<")
    if a_eq is not None and len(b_eq):
        a_eq = np.asarray(a_eq, dtype=float)
        for i in range(a_eq.shape[0]):
            rows.append(a_eq[i])
            rhs.append(float(b_eq[i]))
            senses.append("=")
    if ub is not None:
        ub = np.asarray(ub, dtype=float)
        for j in range(n):
            if np.isfinite(ub[j]):
                row = np.zeros(n)
                row[j] = 1.0
                rows.append(row)
                rhs.append(float(ub[j]))
                senses.append("<")

    m = len(rows)
    if m == 0:
        # Unconstrained beyond nonnegativity.
        if np.any(c < -_TOL):
            return FAILED, np.nan, None
        return OPTIMAL, 0.0, np.zeros(n)

    a = np.vstack(rows)
    b = np.asarray(rhs, dtype=float)

    # Slacks for inequality rows, then flip rows until b >= 0.
    n_slack = sum(1 for s in senses if s == "<")
    full = np.zeros((m, n + n_slack))
    full[:, :n] = a
    si = 0
    for i, s in enumerate(senses):
        if s == "<":
            full[i, n + si] = 1.0
            si += 1
    for i in range(m):
        if b[i] < 0:
            full[i] *= -1.0
            b[i] *= -1.0

    # Phase 1: artificial basis.
    total = n + n_slack + m
    tab = np.zeros((m + 1, total + 1))
    tab[:m, : n + n_slack] = full
    tab[:m, n + n_slack : total] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(n + n_slack, total))
    art_cost = np.zeros(total)
    art_cost[n + n_slack :] = 1.0
    tab[m, :total] = art_cost
    tab[m] -= tab[:m].sum(axis=0)  # reduced costs w.r.t. the artificial basis

    status = _iterate(tab, basis, max_iter, allowed=total)
    if status != OPTIMAL:
        return FAILED, np.nan, None
    if -tab[m, -1] > 1e-7:
        return INFEASIBLE, np.nan, None

    # Pivot remaining artificials out of the basis where possible.
    for i in range(m):
        if basis[i] >= n + n_slack:
            row = tab[i, : n + n_slack]
            pivots = np.nonzero(np.abs(row) > _TOL)[0]
            if pivots.size:
                _pivot(tab, basis, i, int(pivots[0]))

    # Phase 2 on the original objective; artificials frozen at zero.
    cost = np.zeros(total)
    cost[:n] = c
    tab[m, :] = 0.0
    tab[m, :total] = cost
    for i, bj in enumerate(basis):
        if cost[bj] != 0.0:
            tab[m] -= cost[bj] * tab[i]
    status = _iterate(tab, basis, max_iter, allowed=n + n_slack)
    if status != OPTIMAL:
        return status, np.nan, None

    x = np.zeros(total)
    for i, bj in enumerate(basis):
        x[bj] = tab[i, -1]
    return OPTIMAL, float(-tab[m, -1]), x[:n]


def _iterate(tab, basis, max_iter, allowed):
    m = len(basis)
    for _ in range(max_iter):
        reduced = tab[m, :allowed]
        entering = -1
        for j in range(allowed):  # Bland: smallest eligible index
            if reduced[j] < -_TOL:
                entering = j
                break
        if entering < 0:
            return OPTIMAL
        col = tab[:m, entering]
        positive = col > _TOL
        if not positive.any():
            return FAILED  # unbounded
        ratios = np.full(m, np.inf)
        ratios[positive] = tab[:m, -1][positive] / col[positive]
        best = np.min(ratios)
        candidates = [i for i in range(m) if ratios[i] <= best + _TOL]
        leaving = min(candidates, key=lambda i: basis[i])  # Bland on exit too
        _pivot(tab, basis, leaving, entering)
    return FAILED


def _pivot(tab, basis, row, col):
    tab[row] /= tab[row, col]
    for i in range(tab.shape[0]):
        if i != row and tab[i, col] != 0.0:
            tab[i] -= tab[i, col] * tab[row]
    basis[row] = col
