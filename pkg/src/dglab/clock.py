"""Clock arithmetic, cumulated payoffs and discounted occupation measures.

Stage m of a lambda-discounted game carries weight lambda*(1-lambda)**(m-1).
The clock eta(lambda, M) is the total weight of the first M stages; the
inverse clock varphi(lambda, t) is the first stage at which the clock
reaches the fraction t of the game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .games import GameSpec, StationaryProfile, induced_chain
from .report import CheckReport
from .solve import DiscountedSolution, solve_discounted


def eta(lam: float, stages: int) -> float:
    """Total weight 1-(1-lam)**M of the first ``stages`` stages."""
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"lam {lam} outside (0, 1]")
    if stages < 0:
        raise ValueError("stage count must be >= 0")
    if stages == 0:
        return 0.0
    if lam == 1.0:
        return 1.0
    return -math.expm1(stages * math.log1p(-lam))


def varphi(lam: float, t: float):
    """First stage M >= 1 with eta(lam, M) >= t; +inf at t = 1."""
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lam {lam} outside (0, 1)")
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t {t} outside [0, 1]")
    if t >= 1.0:
        return math.inf
    if t <= 0.0:
        return 1
    m = max(1, math.ceil(math.log1p(-t) / math.log1p(-lam)))
    while eta(lam, m) < t:
        m += 1
    while m > 1 and eta(lam, m - 1) >= t:
        m -= 1
    return m


@dataclass(frozen=True)
class ClockPoint:
    """A stage of a discounted game together with its clock reading."""

    lam: float
    stage: int
    weight: float

    @classmethod
    def at(cls, lam: float, stage: int) -> "ClockPoint":
        return cls(lam, stage, eta(lam, stage))


def stage_cap(lam: float) -> int:
    """Stage count beyond which the remaining weight is below 1e-16."""
    return math.ceil(math.log(1e-16) / math.log1p(-lam))


def _resolvent(q: np.ndarray, lam: float) -> np.ndarray:
    ident = np.eye(q.shape[0])
    return np.linalg.solve(ident - (1.0 - lam) * q, ident)


def cumulated_payoff_vector(
    q: np.ndarray, g_x: np.ndarray, lam: float, t: float
) -> np.ndarray:
    """gamma(k; t) for every start state k (see ``cumulated_payoff``)."""
    q = np.asarray(q, dtype=float)
    g_x = np.asarray(g_x, dtype=float)
    if lam >= 1.0:
        return g_x.copy()  # single weighted stage regardless of t
    if t >= 1.0:
        return lam * (_resolvent(q, lam) @ g_x)
    stages = varphi(lam, t)
    if stages > stage_cap(lam):
        # remaining weight below 1e-16: the resolvent is exact to 1e-16*||g||
        return lam * (_resolvent(q, lam) @ g_x)
    powm = np.linalg.matrix_power((1.0 - lam) * q, stages)
    ident = np.eye(q.shape[0])
    rhs = (ident - powm) @ g_x
    return lam * np.linalg.solve(ident - (1.0 - lam) * q, rhs)


def cumulated_payoff(
    q: np.ndarray, g_x: np.ndarray, k: int, lam: float, t: float
) -> float:
    """Expected payoff collected up to the fraction ``t`` of the game.

    gamma(k; t) = sum_{m=1}^{varphi(lam,t)} lam*(1-lam)**(m-1) * (Q^(m-1) g_x)(k),
    evaluated in closed form.  At t = 1 the full resolvent is used and the
    sum extends over all stages.
    """
    return float(cumulated_payoff_vector(q, g_x, lam, t)[k])


@dataclass(frozen=True)
class OccupationMeasure:
    """Discounted visit frequencies lam*(I-(1-lam)Q)^(-1), one row per start."""

    matrix: np.ndarray
    params: tuple

    def row(self, k: int) -> np.ndarray:
        return self.matrix[k]


def occupation_measure(q_profile: np.ndarray, lam: float, params=None) -> OccupationMeasure:
    """Occupation measure of discount ``lam`` under the chain ``q_profile``.

    The caller chooses which profile pair induces the chain; ``params``
    records the (lam, lam', lam'') triple when relevant.
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"lam {lam} outside (0, 1]")
    mat = lam * _resolvent(np.asarray(q_profile, dtype=float), lam)
    mat = np.clip(mat, 0.0, None)
    mat /= mat.sum(axis=1, keepdims=True)
    return OccupationMeasure(mat, tuple(params) if params else (lam,))


def _mixed_chain(spec, sol_row: DiscountedSolution, sol_col: DiscountedSolution):
    profile = StationaryProfile(sol_row.profile.x1, sol_col.profile.x2)
    q, _ = induced_chain(spec, profile)
    return q


def check_variational(
    spec: GameSpec,
    lam: float,
    lam_prime: float,
    tol: float = 1e-8,
    solutions: tuple[DiscountedSolution, DiscountedSolution] | None = None,
) -> CheckReport:
    """Slacks of the two discount-comparison inequalities at (lam, lam').

    With r = lam'*(1-lam)/(lam*(1-lam')) and occupation measures of the
    cross profiles (x1 at lam, x2 at lam') and (x1 at lam', x2 at lam),
    the value at the smaller discount is bounded below by
    r*v_lam + (1-r)*<occupation, v_lam'>, and above by the same expression
    with the mirrored occupation.  Both slacks are reported per state and
    must exceed -tol.
    """
    if not (0.0 < lam_prime < lam < 1.0):
        raise ValueError("need 0 < lam' < lam < 1")
    if solutions is None:
        sol = solve_discounted(spec, lam)
        sol_p = solve_discounted(spec, lam_prime)
    else:
        sol, sol_p = solutions
    r = lam_prime * (1.0 - lam) / (lam * (1.0 - lam_prime))

    occ_low = occupation_measure(
        _mixed_chain(spec, sol, sol_p), lam, (lam, lam, lam_prime)
    )
    occ_up = occupation_measure(
        _mixed_chain(spec, sol_p, sol), lam, (lam, lam_prime, lam)
    )
    lower = r * sol.values + (1.0 - r) * (occ_low.matrix @ sol_p.values)
    upper = r * sol.values + (1.0 - r) * (occ_up.matrix @ sol_p.values)
    slack_low = sol_p.values - lower
    slack_up = upper - sol_p.values

    residuals = {
        spec.states[k]: {
            "slack_lower": float(slack_low[k]),
            "slack_upper": float(slack_up[k]),
        }
        for k in range(spec.n_states)
    }
    min_slack = float(min(slack_low.min(), slack_up.min()))
    return CheckReport(
        check="variational_inequalities",
        residuals=residuals,
        tolerance=tol,
        passed=min_slack >= -tol,
        inputs={"lam": lam, "lam_prime": lam_prime, "min_slack": min_slack},
    )


def derivative_check(
    spec: GameSpec, lam: float, h: float, tol_rel: float = 1e-3
) -> CheckReport:
    """Compare d v_lam / d lam with its occupation-measure expression.

    The exact derivative is (v_lam(k) - <occupation row k, v_lam>) /
    (lam*(1-lam)): shifting weight toward the start state raises the value
    exactly by the occupation-averaged deviation.  The report puts it
    against a central finite difference of step ``h`` per state.
    """
    if not (0.0 < lam - h and lam + h < 1.0):
        raise ValueError("lam +- h must stay inside (0, 1)")
    sol = solve_discounted(spec, lam)
    q, _ = induced_chain(spec, sol.profile)
    occ = occupation_measure(q, lam, (lam, lam, lam))
    formula = (sol.values - occ.matrix @ sol.values) / (lam * (1.0 - lam))

    up = solve_discounted(spec, lam + h)
    down = solve_discounted(spec, lam - h)
    fd = (up.values - down.values) / (2.0 * h)

    residuals = {}
    worst = 0.0
    for k in range(spec.n_states):
        scale = max(abs(fd[k]), abs(formula[k]))
        rel = abs(fd[k] - formula[k]) / scale if scale > 1e-6 else 0.0
        worst = max(worst, rel)
        residuals[spec.states[k]] = {
            "finite_difference": float(fd[k]),
            "formula": float(formula[k]),
            "rel_mismatch": float(rel),
        }
    return CheckReport(
        check="derivative_formula",
        residuals=residuals,
        tolerance=tol_rel,
        passed=worst <= tol_rel,
        inputs={"lam": lam, "h": h},
    )


class BLambda(NamedTuple):
    """Truncated discounted average and a bound on the discarded tail."""

    value: float
    tail_bound: float


def b_lambda(
    delta: float,
    lam: float,
    u: Callable[[int], float],
    truncation: int,
    bound: float | None = None,
) -> BLambda:
    """sum_{m>=1} delta*lam*(1-delta*lam)**(m-1) * u(m), truncated.

    ``u`` is a 1-indexed accessor of a bounded sequence.  The discarded
    tail is bounded by C*(1-delta*lam)**truncation with C the supplied (or
    observed) bound on |u|.
    """
    dl = delta * lam
    if not (0.0 < dl < 1.0):
        raise ValueError(f"delta*lam {dl} outside (0, 1)")
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    m = np.arange(1, truncation + 1)
    vals = np.array([float(u(int(i))) for i in m])
    weights = dl * (1.0 - dl) ** (m - 1)
    c = float(np.max(np.abs(vals))) if bound is None else float(bound)
    tail = c * (1.0 - dl) ** truncation
    return BLambda(float(weights @ vals), tail)


def h_payoff(
    q: np.ndarray,
    v_lambda: np.ndarray,
    k_bar: int,
    k: int,
    delta: float,
    lam: float,
) -> float:
    """Discounted average of v(k_m) - v(k_bar) under the chain ``q``.

    Closed form delta*lam*(I-(1-delta*lam)Q)^(-1) (v - v(k_bar)) at ``k``;
    the discount is delta*lam.
    """
    dl = delta * lam
    if not (0.0 < dl < 1.0):
        raise ValueError(f"delta*lam {dl} outside (0, 1)")
    v = np.asarray(v_lambda, dtype=float)
    dev = v - v[k_bar]
    ident = np.eye(q.shape[0])
    h = dl * np.linalg.solve(ident - (1.0 - dl) * np.asarray(q, float), dev)
    return float(h[k])


def payoff_curve_rows(t_grid, gammas, v_star_k: float):
    """Rows (t, gamma, t*v_star, |gap|) for the payoff-curve CSV."""
    rows = []
    for t, g in zip(t_grid, gammas):
        target = t * v_star_k
        rows.append((float(t), float(g), float(target), abs(float(g) - target)))
    return rows
