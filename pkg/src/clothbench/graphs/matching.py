"""Minimum-cost injective matching of cloud points to mesh particles.

Each of the N cloud points is assigned a distinct particle (M >= N)
minimising the total Euclidean distance.  The optimum is found with the
Jonker-Volgenant solver from scipy; when several assignments tie on total
cost, a refinement pass picks the lexicographically smallest assignment
vector (point 0's particle index first), which keeps results reproducible on
degenerate inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

_COST_TOL = 1e-9


@dataclass
class MatchResult:
    assignment: np.ndarray  # (n_points,) distinct particle indices
    total_cost: float  # metres


def _cost_matrix(points: np.ndarray, particles: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points[:, None, :] - particles[None, :, :], axis=2)


def bipartite_match(points: np.ndarray, particles: np.ndarray) -> MatchResult:
    """Optimal injective assignment of points to particles.

    Raises ValueError when there are fewer particles than points.
    """
    points = np.asarray(points, dtype=np.float64)
    particles = np.asarray(particles, dtype=np.float64)
    n, m = len(points), len(particles)
    if m < n:
        raise ValueError(f"need at least as many particles as points ({m} < {n})")
    cost = _cost_matrix(points, particles)
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(n, dtype=np.int64)
    assignment[rows] = cols
    total = float(cost[rows, cols].sum())
    assignment = _lexmin_refine(cost, assignment, total)
    return MatchResult(assignment=assignment, total_cost=float(cost[np.arange(n), assignment].sum()))


def _lexmin_refine(cost: np.ndarray, assignment: np.ndarray, total: float) -> np.ndarray:
    """Among optimal assignments, pick the lexicographically smallest vector.

    Fixes rows in order: for row i, the smallest column that still admits an
    optimal completion is kept.  Candidate columns are pruned with a row-min
    lower bound before paying for a reduced solve.
    """
    n, m = cost.shape
    tol = _COST_TOL * max(1.0, abs(total))
    result = np.empty(n, dtype=np.int64)
    free_cols = np.ones(m, dtype=bool)
    budget = total
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        incumbent = assignment[i]
        chosen = None
        if len(rest_rows):
            row_mins = cost[np.ix_(rest_rows, np.flatnonzero(free_cols))].min(axis=1)
            lb_rest = row_mins.sum()
        else:
            lb_rest = 0.0
        for j in np.flatnonzero(free_cols):
            if cost[i, j] + lb_rest > budget + tol:
                continue
            if j >= incumbent:
                chosen = incumbent
                break
            sub = cost[np.ix_(rest_rows, np.flatnonzero(free_cols & (np.arange(m) != j)))]
            if sub.size == 0:
                if cost[i, j] <= budget + tol:
                    chosen = j
                    break
                continue
            r, c = linear_sum_assignment(sub)
            if cost[i, j] + sub[r, c].sum() <= budget + tol:
                chosen = j
                break
        if chosen is None:
            chosen = incumbent
        result[i] = chosen
        free_cols[chosen] = False
        budget -= cost[i, chosen]
        if chosen != incumbent:
            # re-solve the remainder so later incumbents stay optimal
            if len(rest_rows):
                sub_cols = np.flatnonzero(free_cols)
                sub = cost[np.ix_(rest_rows, sub_cols)]
                r, c = linear_sum_assignment(sub)
                assignment = assignment.copy()
                assignment[rest_rows[r]] = sub_cols[c]
    return result
