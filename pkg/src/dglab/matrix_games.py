"""Exact solution of finite zero-sum matrix games by linear programming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import SolverError

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class MatrixGameSolution:
    """Value and optimal mixed strategies of a matrix game.

    ``guarantee_gap`` is the largest violation of the two minimax
    guarantees: how far the row strategy falls below the value against the
    worst pure column, and symmetrically for the column strategy.
    """

    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    guarantee_gap: float


def _lp(c, a_ub, b_ub, matrix):
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if not res.success:
        raise SolverError(f"matrix game LP failed: {res.message}", matrix=matrix)
    return res.x


def _guarantee_gap(a, value, row, col):
    return max(value - float(np.min(row @ a)), float(np.max(a @ col)) - value, 0.0)


def _equalize(payoff_block, support, n_total):
    # unknowns: weights on the support plus the common value
    n_sup, n_opp = payoff_block.shape
    system = np.zeros((n_opp + 1, n_sup + 1))
    rhs = np.zeros(n_opp + 1)
    system[:n_opp, :n_sup] = payoff_block.T
    system[:n_opp, n_sup] = -1.0
    system[n_opp, :n_sup] = 1.0
    rhs[n_opp] = 1.0
    sol, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    w = sol[:n_sup]
    if np.any(w < -1e-8) or not np.all(np.isfinite(w)):
        return None
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        return None
    full = np.zeros(n_total)
    full[support] = w / total
    return full


def _polish(a, value, row, col, slack_tol):
    """Refine an LP solution by re-solving the equalization equations.

    The LP can misplace strategy weights whose effect on the value is far
    below its feasibility tolerance.  Complementary slackness identifies
    the candidate supports (strategy mass or a near-tight payoff
    constraint); solving the linear indifference system on those supports
    recovers the exact vertex.  Supports are re-detected from each
    improved solution, since the LP's vertex may hide part of the true
    support; a refinement is kept only if it lowers the worst guarantee
    violation.
    """
    n_rows, n_cols = a.shape
    best = (value, row, col, _guarantee_gap(a, value, row, col))
    for _ in range(3):
        value, row, col = best[0], best[1], best[2]
        vs_col = a @ col
        vs_row = row @ a
        sup_x = np.where((row > 1e-9) | (vs_col >= value - slack_tol))[0]
        sup_y = np.where((col > 1e-9) | (vs_row <= value + slack_tol))[0]
        if sup_x.size == 0 or sup_y.size == 0:
            break
        block = a[np.ix_(sup_x, sup_y)]
        new_row = _equalize(block, sup_x, n_rows)
        new_col = _equalize(-block.T, sup_y, n_cols)
        if new_row is None or new_col is None:
            break
        new_value = 0.5 * (float(np.min(new_row @ a)) + float(np.max(a @ new_col)))
        gap = _guarantee_gap(a, new_value, new_row, new_col)
        if gap >= best[3]:
            break
        best = (new_value, new_row, new_col, gap)
    return best[0], best[1], best[2]


def solve_matrix_game(matrix, tol: float = DEFAULT_TOL) -> MatrixGameSolution:
    """Solve the zero-sum game with payoff ``matrix`` (row player maximizes).

    The game is shifted so all entries are positive and both players'
    reciprocal LPs are solved; the shift cancels in the returned value.
    Ties between optimal vertices are broken by the LP's deterministic
    pivot rule; any optimal strategy is acceptable downstream.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise SolverError("matrix must be 2-d and non-empty", matrix=a)
    if not np.all(np.isfinite(a)):
        raise SolverError("matrix has non-finite entries", matrix=a)
    n_rows, n_cols = a.shape

    if n_rows == 1 and n_cols == 1:
        one = np.array([1.0])
        return MatrixGameSolution(float(a[0, 0]), one, one.copy(), 0.0)
    if n_rows == 1:
        j = int(np.argmin(a[0]))
        col = np.zeros(n_cols)
        col[j] = 1.0
        return MatrixGameSolution(float(a[0, j]), np.array([1.0]), col, 0.0)
    if n_cols == 1:
        i = int(np.argmax(a[:, 0]))
        row = np.zeros(n_rows)
        row[i] = 1.0
        return MatrixGameSolution(float(a[i, 0]), row, np.array([1.0]), 0.0)

    # recenter and rescale so the LP works on entries in [1, 3]; the value
    # maps back affinely and the optimal strategies are unchanged
    lo, hi = float(a.min()), float(a.max())
    mid = 0.5 * (lo + hi)
    scale = 0.5 * (hi - lo)
    if scale <= 1e-14 * max(1.0, abs(mid)):
        row = np.full(n_rows, 1.0 / n_rows)
        col = np.full(n_cols, 1.0 / n_cols)
        return MatrixGameSolution(mid, row, col, scale)
    b = (a - mid) / scale + 2.0

    # row player: min sum(u) s.t. B^T u >= 1;  value = 1/sum(u), x = u*value
    u = _lp(np.ones(n_rows), -b.T, -np.ones(n_cols), a)
    # column player: max sum(y) s.t. B y <= 1;  value = 1/sum(y), y^ = y*value
    y = _lp(-np.ones(n_cols), b, np.ones(n_rows), a)

    su, sy = u.sum(), y.sum()
    if su <= 0 or sy <= 0:
        raise SolverError("degenerate LP solution", matrix=a)
    value_row = (1.0 / su - 2.0) * scale + mid
    value_col = (1.0 / sy - 2.0) * scale + mid
    if abs(value_row - value_col) > 2 * tol * max(1.0, scale):
        raise SolverError(
            f"LP duality gap {abs(value_row - value_col):.3g} exceeds 2*tol",
            matrix=a,
        )
    value = 0.5 * (value_row + value_col)

    row = np.clip(u / su, 0.0, None)
    row /= row.sum()
    col = np.clip(y / sy, 0.0, None)
    col /= col.sum()

    gap = _guarantee_gap(a, value, row, col)
    allowed = tol * max(1.0, scale)
    if gap > allowed:
        value, row, col = _polish(a, value, row, col, slack_tol=1e-6 * scale)
        gap = _guarantee_gap(a, value, row, col)
    if gap > allowed:
        raise SolverError(f"minimax guarantee violated by {gap:.3g}", matrix=a)
    value = min(max(value, lo), hi)
    return MatrixGameSolution(value, row, col, gap)
