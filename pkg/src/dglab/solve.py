"""Discounted values and optimal stationary strategies via the Shapley operator."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GridError, SolverError
from .games import GameSpec, StationaryProfile, induced_chain
from .matrix_games import DEFAULT_TOL, solve_matrix_game

DEFAULT_VI_TOL = 1e-10


@dataclass(frozen=True)
class DiscountedSolution:
    """Value vector and optimal stationary profile of a discounted game."""

    lam: float
    values: np.ndarray
    profile: StationaryProfile
    residual: float
    iterations: int


def shapley_matrix(spec: GameSpec, lam: float, v: np.ndarray, k: int) -> np.ndarray:
    """One-shot game at state ``k``: lam*g + (1-lam) * E[v(next state)]."""
    return lam * spec.payoff[k] + (1.0 - lam) * spec.transition[k] @ v


def _shapley_step(spec, lam, v, tol):
    tv = np.empty(spec.n_states)
    x1 = np.zeros((spec.n_states, len(spec.actions1)))
    x2 = np.zeros((spec.n_states, len(spec.actions2)))
    for k in range(spec.n_states):
        sol = solve_matrix_game(shapley_matrix(spec, lam, v, k), tol)
        tv[k] = sol.value
        x1[k] = sol.row_strategy
        x2[k] = sol.col_strategy
    return tv, StationaryProfile(x1, x2)


def shapley_operator(spec: GameSpec, lam: float, v: np.ndarray) -> np.ndarray:
    """Apply the dynamic-programming operator once: T(v)[k] = val(R_k(v)).

    Component ``k`` is the value of the matrix game with payoff
    ``lam*g(k,i,j) + (1-lam)*sum_k2 q(k2|k,i,j) v(k2)``.  T is a
    (1-lam)-contraction in the sup norm.
    """
    v = np.asarray(v, dtype=float)
    tv, _ = _shapley_step(spec, lam, v, DEFAULT_TOL)
    return tv


def _evaluate_profile(spec, lam, profile):
    """Exact discounted payoff of a stationary profile (linear solve)."""
    q, g = induced_chain(spec, profile)
    ident = np.eye(spec.n_states)
    return np.linalg.solve(ident - (1.0 - lam) * q, lam * g)


def default_iteration_cap(spec: GameSpec, lam: float, tol: float) -> int:
    """Cap 10*ceil(ln(tol/2||g||)/ln(1-lam)), floored for degenerate cases."""
    bound = spec.payoff_bound
    if bound == 0.0 or lam >= 1.0:
        return 10
    need = math.log(tol / (2.0 * bound)) / math.log(1.0 - lam)
    return max(10, 10 * math.ceil(max(need, 1.0)))


class _Budget:
    def __init__(self, cap, lam, tol):
        self.cap = cap
        self.lam = lam
        self.tol = tol
        self.used = 0

    def tick(self, residual):
        self.used += 1
        if self.used >= self.cap:
            raise SolverError(
                f"no convergence at lam={self.lam}: residual {residual:.3g} "
                f"after {self.used} iterations (tol {self.tol:.3g})"
            )


def _newton_solve(spec, lam, v, tol, game_tol, budget):
    """Damped Newton on T(v) - v from ``v``, with value-iteration fallback.

    The Newton direction is the exact evaluation of the current optimal
    profile minus the iterate; by the envelope theorem its first-order
    model contracts the residual by (1 - t), so a step is accepted when it
    reduces the residual by at least (1 - t/4).
    """
    tv, profile = _shapley_step(spec, lam, v, game_tol)
    budget.tick(float("nan"))
    residual = float(np.max(np.abs(tv - v)))
    while residual > tol:
        accepted = False
        if lam < 1.0:
            w = _evaluate_profile(spec, lam, profile)
            direction = w - v
            t = 1.0
            while t >= 2.0**-20:
                vt = v + t * direction
                tvt, profile_t = _shapley_step(spec, lam, vt, game_tol)
                budget.tick(residual)
                res_t = float(np.max(np.abs(tvt - vt)))
                if res_t <= (1.0 - 0.25 * t) * residual or res_t <= tol:
                    v, tv, profile, residual = vt, tvt, profile_t, res_t
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            v = tv
            tv, profile = _shapley_step(spec, lam, v, game_tol)
            budget.tick(residual)
            residual = float(np.max(np.abs(tv - v)))
    return v, tv, profile, residual


def solve_discounted(
    spec: GameSpec,
    lam: float,
    tol: float = DEFAULT_VI_TOL,
    max_iter: int | None = None,
) -> DiscountedSolution:
    """Fixed point of the Shapley operator and an optimal stationary profile.

    Runs damped Newton steps (exact policy evaluation of the matrix-game
    profile, with a residual line search) on a discount continuation
    ladder: the fixed point is tracked from lambda = 1/2 down to the
    target, which keeps the iterate on the solution branch where Newton
    converges in a handful of steps even for tiny discount factors.  The
    returned residual is ``||T(v)-v||_inf`` at the returned vector.

    Raises
    ------
    SolverError
        If the residual does not reach ``tol`` within the iteration cap.
    """
    if not (0.0 < lam <= 1.0):
        raise GridError(f"discount factor {lam} outside (0, 1]")
    if tol <= 0:
        raise GridError("tol must be positive")
    cap = default_iteration_cap(spec, lam, tol) if max_iter is None else max_iter
    budget = _Budget(cap, lam, tol)

    game_tol = min(DEFAULT_TOL, max(tol, 1e-12))
    ladder = []
    rung = 0.5
    while rung > lam * 4.0:
        ladder.append(rung)
        rung *= 0.25
    ladder.append(lam)

    v = np.zeros(spec.n_states)
    if lam >= 0.5 or spec.payoff_bound == 0.0:
        ladder = [lam]
    for mu in ladder:
        rung_tol = tol if mu == lam else max(tol, 1e-8 * max(1.0, spec.payoff_bound))
        v, tv, profile, residual = _newton_solve(
            spec, mu, v, rung_tol, game_tol, budget
        )

    bound = spec.payoff_bound + game_tol
    values = np.clip(v, -bound, bound)
    return DiscountedSolution(lam, values, profile, residual, budget.used)


def value_curve(
    spec: GameSpec,
    lambdas,
    tol: float = DEFAULT_VI_TOL,
    max_iter: int | None = None,
) -> list[DiscountedSolution]:
    """Solve the game on a strictly decreasing discount grid.

    Solutions are returned in grid order.  Each solve starts cold so the
    result is independent of how the sweep is scheduled; with
    ``DG_LAB_THREADS > 1`` the grid points run in parallel.
    """
    lams = [float(x) for x in lambdas]
    if not lams:
        raise GridError("empty discount grid")
    if any(not (0.0 < x <= 1.0) for x in lams):
        raise GridError("grid values must lie in (0, 1]")
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise GridError("grid must be strictly decreasing")

    def run(lam):
        try:
            return solve_discounted(spec, lam, tol, max_iter)
        except SolverError as exc:
            raise SolverError(f"lam={lam}: {exc}") from exc

    threads = int(os.environ.get("DG_LAB_THREADS", "1") or "1")
    if threads > 1 and len(lams) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(lams))) as pool:
            return list(pool.map(run, lams))
    return [run(lam) for lam in lams]


def geometric_grid(start: float, ratio: float, count: int) -> list[float]:
    """Grid start, start*ratio, ... with ``count`` points; ratio in (0,1)."""
    if not (0.0 < ratio < 1.0):
        raise GridError("ratio must lie in (0, 1)")
    if count < 1:
        raise GridError("count must be >= 1")
    if not (0.0 < start <= 1.0):
        raise GridError("start must lie in (0, 1]")
    return [start * ratio**n for n in range(count)]
