"""End-to-end verification of the constant payoff property on a game.

Solves the game on a vanishing discount grid, fits the leading terms of
the induced chain and of the value family, decomposes the fitted chain
into relevant cycles and checks every limit identity: linearity of the
cumulated payoff, invariance of the limit value under the position and
occupation matrices, the per-cycle value formulas, the continuous-time
dynamic-programming identity and the auxiliary deviation payoffs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import expm

from .clock import cumulated_payoff_vector, h_payoff
from .cycles import (
    LeadingTermChain,
    LimitDecomposition,
    decompose,
    limit_occupation,
    position_matrix,
)
from .errors import FitError, GridError
from .games import GameSpec, StationaryProfile, induced_chain
from .puiseux import (
    LeadingTermFit,
    ProfileFits,
    ZERO_ATOL,
    fit_leading_terms,
    fit_profile,
    truncate_profile,
)
from .report import CheckReport
from .solve import solve_discounted, value_curve

DEFAULT_T_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


@dataclass(frozen=True)
class ScalarLimit:
    """Extrapolated limit of a lambda-family with an error estimate."""

    value: float
    error: float
    exponent: Fraction | None


def extrapolate_limit(lams, values, tol: float = 1e-10) -> ScalarLimit:
    """Limit of v_lam ~ v* + c*lam**e from samples on a decreasing grid.

    The correction exponent is fitted on the successive differences and
    the last correction is subtracted off; a family that is constant to
    solver precision is returned as is.
    """
    lams = np.asarray(lams, dtype=float)
    vals = np.asarray(values, dtype=float)
    diffs = vals[:-1] - vals[1:]
    n_tail = min(len(diffs), max(3, -(-len(diffs) // 2)))
    t_lams, t_diffs = lams[:-1][-n_tail:], diffs[-n_tail:]
    scale = max(1.0, float(np.max(np.abs(vals))))
    floor = max(10.0 * tol, 1e-13 * scale)
    if np.max(np.abs(t_diffs)) <= floor:
        return ScalarLimit(float(vals[-1]), floor, Fraction(0))

    signs = np.sign(t_diffs[np.abs(t_diffs) > floor])
    if signs.size == 0 or signs.min() != signs.max():
        # not a clean power correction; fall back to the last sample
        return ScalarLimit(float(vals[-1]), float(np.max(np.abs(t_diffs))), None)

    slope = float(np.polyfit(np.log(t_lams), np.log(np.abs(t_diffs)), 1)[0])
    exponent = Fraction(slope).limit_denominator(12)
    if exponent <= 0:
        return ScalarLimit(float(vals[-1]), float(np.max(np.abs(t_diffs))), None)
    e = float(exponent)

    idx = np.arange(len(diffs))[-n_tail:]
    cs = [diffs[i] / (lams[i] ** e - lams[i + 1] ** e) for i in idx]
    extrapolants = [vals[i + 1] - cs[pos] * lams[i + 1] ** e for pos, i in enumerate(idx)]
    c = cs[-1]
    limit = float(vals[-1] - c * lams[-1] ** e)
    spread = float(np.max(extrapolants) - np.min(extrapolants))
    err = max(floor, spread, 0.05 * abs(c) * lams[-1] ** e)
    return ScalarLimit(limit, err, exponent)


@dataclass(frozen=True)
class FitReport:
    """Per-entry diagnostics of the limit fits."""

    q_fits: dict
    profile_fits: ProfileFits
    v_limits: tuple[ScalarLimit, ...]
    g_limits: tuple[ScalarLimit, ...]


@dataclass(frozen=True)
class ProfileLimit:
    """Vanishing-discount limit data of the optimal stationary family.

    ``fitted_chain`` holds the leading terms of the induced chains,
    ``g_star``/``v_star`` the limit stage payoffs and values, ``v_tilde``
    one value per relevant cycle.
    """

    spec: GameSpec
    lambdas: tuple[float, ...]
    fitted_chain: LeadingTermChain
    g_star: np.ndarray
    v_star: np.ndarray
    v_tilde: np.ndarray
    fit_report: FitReport


def _fit_chain(spec, lams, qs, max_denominator=12):
    n = spec.n_states
    n_tail = max(4, -(-len(lams) // 2))
    terms, q_fits = {}, {}
    for k in range(n):
        for k2 in range(n):
            series = qs[:, k, k2]
            if np.all(np.abs(series[-n_tail:]) <= ZERO_ATOL):
                q_fits[(k, k2)] = LeadingTermFit.zero()
                continue
            try:
                fit = fit_leading_terms(list(zip(lams, series)), max_denominator)
            except FitError as exc:
                raise FitError(
                    f"chain entry ({spec.states[k]}->{spec.states[k2]}): {exc}"
                ) from exc
            if fit.coefficient <= 0:
                raise FitError(
                    f"chain entry ({spec.states[k]}->{spec.states[k2]}) "
                    f"fitted a nonpositive coefficient"
                )
            q_fits[(k, k2)] = fit
            terms[(k, k2)] = (fit.coefficient, fit.exponent)
    # fold the order-0 residual of each row into the self loop so the
    # fitted coefficients form a consistent leading-term chain
    for k in range(n):
        others = sum(
            c for (a, b), (c, e) in terms.items() if a == k and b != k and e == 0
        )
        if others > 1.0:
            if others > 1.0 + 0.05:
                raise FitError(
                    f"row {spec.states[k]}: fitted order-0 mass {others:.4g} > 1"
                )
            ratio = 1.0 / others
            for (a, b), (c, e) in list(terms.items()):
                if a == k and b != k and e == 0:
                    terms[(a, b)] = (c * ratio, e)
            others = 1.0
        diag = terms.get((k, k))
        if diag is not None and diag[1] == 0:
            if abs(diag[0] - (1.0 - others)) > 0.05:
                raise FitError(
                    f"row {spec.states[k]}: self-loop fit {diag[0]:.4g} "
                    f"inconsistent with order-0 mass {others:.4g}"
                )
            if others < 1.0:
                terms[(k, k)] = (1.0 - others, Fraction(0))
            else:
                del terms[(k, k)]
    denom = 1
    for c, e in terms.values():
        denom = math.lcm(denom, e.denominator)
    return LeadingTermChain(spec.states, denom, terms), q_fits


def build_profile_limit(
    spec: GameSpec,
    lambdas,
    tol: float = 1e-10,
    max_denominator: int = 12,
) -> tuple[ProfileLimit, LimitDecomposition]:
    """Fit the limit profile data of ``spec`` on a decreasing discount grid.

    Solves the game at every grid point, fits the leading term of every
    induced-chain entry and strategy entry, extrapolates the limit value
    and limit stage payoff, and decomposes the fitted chain.  The limit
    value must be constant on every relevant cycle within five times the
    extrapolation error estimate.

    Raises
    ------
    GridError
        If the grid does not reach 1e-6.
    FitError
        If some entry is inconsistent with a single leading term or the
        cycle constancy of the limit value fails.
    """
    lams = [float(x) for x in lambdas]
    if min(lams) > 1e-6 * (1 + 1e-9):
        raise GridError("discount grid must reach 1e-6")
    if len(lams) < 5:
        raise GridError("discount grid too coarse: need at least 5 points")

    curve = value_curve(spec, lams, tol)
    qs = np.array([induced_chain(spec, s.profile)[0] for s in curve])
    gs = np.array([induced_chain(spec, s.profile)[1] for s in curve])

    chain, q_fits = _fit_chain(spec, lams, qs, max_denominator)
    problems = []
    dec = decompose(chain)

    v_limits = tuple(
        extrapolate_limit(lams, [s.values[k] for s in curve], tol)
        for k in range(spec.n_states)
    )
    g_limits = tuple(
        extrapolate_limit(lams, gs[:, k], tol) for k in range(spec.n_states)
    )
    v_star = np.array([lim.value for lim in v_limits])
    g_star = np.array([lim.value for lim in g_limits])

    v_tilde = np.zeros(dec.n_relevant)
    for idx, node in enumerate(dec.relevant):
        members = list(node.member_states)
        spread = float(np.max(v_star[members]) - np.min(v_star[members]))
        allow = 5.0 * max(max(v_limits[k].error for k in members), 1e-12)
        if spread > allow:
            raise FitError(
                f"limit value varies by {spread:.3g} on relevant cycle "
                f"{node.label(spec.states)} (allowed {allow:.3g})"
            )
        v_tilde[idx] = float(np.mean(v_star[members]))

    profile_fits = fit_profile(spec, curve)
    limit = ProfileLimit(
        spec=spec,
        lambdas=tuple(lams),
        fitted_chain=chain,
        g_star=g_star,
        v_star=v_star,
        v_tilde=v_tilde,
        fit_report=FitReport(q_fits, profile_fits, v_limits, g_limits),
    )
    return limit, dec


def integrated_position(decomposition: LimitDecomposition, t: float) -> np.ndarray:
    """Closed form of the integral of pi_s over [0, t].

    Substituting u = -ln(1-s) turns the integral into
    Phi (A-I)^(-1) (exp(T(A-I)) - I) M with T = -ln(1-t); at t = 1 this is
    the limit occupation matrix.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t {t} outside [0, 1]")
    if t == 1.0:
        return limit_occupation(decomposition)
    phi, a, mix = decomposition.phi, decomposition.gen, decomposition.mix
    n_rel = decomposition.n_relevant
    shifted = a - np.eye(n_rel)
    horizon = -math.log1p(-t)
    kern = np.linalg.solve(shifted, expm(horizon * shifted) - np.eye(n_rel))
    return phi @ kern @ mix


def verify_weak_cp(
    spec: GameSpec,
    limit: ProfileLimit,
    lambda_eval: float,
    t_grid=DEFAULT_T_GRID,
    eps: float = 0.05,
    profile: StationaryProfile | None = None,
    check_name: str = "weak_constant_payoff",
) -> CheckReport:
    """Check that the cumulated payoff grows linearly: gamma(k;t) ~ t v*(k).

    Evaluates the exact cumulated payoff of the (optimal unless supplied)
    stationary profile at ``lambda_eval`` and compares with t*v_star per
    state and per grid point.
    """
    if profile is None:
        profile = solve_discounted(spec, lambda_eval).profile
    q, g_x = induced_chain(spec, profile)
    residuals = {}
    worst = 0.0
    curves = {}
    for t in t_grid:
        curves[t] = cumulated_payoff_vector(q, g_x, lambda_eval, float(t))
    for k, state in enumerate(spec.states):
        gaps = {}
        for t in t_grid:
            gap = float(curves[t][k] - t * limit.v_star[k])
            gaps[f"t={t:g}"] = gap
            worst = max(worst, abs(gap))
        residuals[state] = gaps
    return CheckReport(
        check=check_name,
        residuals=residuals,
        tolerance=eps,
        passed=worst <= eps,
        inputs={
            "lambda_eval": lambda_eval,
            "t_grid": [float(t) for t in t_grid],
            "fit_grid": [float(x) for x in limit.lambdas],
        },
    )


def check_invariance(
    limit: ProfileLimit,
    decomposition: LimitDecomposition,
    t_grid=DEFAULT_T_GRID,
    tol: float = 2e-2,
) -> CheckReport:
    """Invariance of the limit value: Pi v* = v* and pi_t v* = v* for all t."""
    v = limit.v_star
    occ = limit_occupation(decomposition)
    occ_residual = float(np.max(np.abs(occ @ v - v)))
    pi_residual = 0.0
    per_t = {}
    for t in t_grid:
        pi = position_matrix(decomposition, float(t)).matrix
        r = float(np.max(np.abs(pi @ v - v)))
        per_t[f"t={t:g}"] = r
        pi_residual = max(pi_residual, r)
    residuals = {"occupation": occ_residual, "position": per_t}
    return CheckReport(
        check="invariance",
        residuals=residuals,
        tolerance=tol,
        passed=max(occ_residual, pi_residual) <= tol,
        inputs={
            "t_grid": [float(t) for t in t_grid],
            "fit_grid": [float(x) for x in limit.lambdas],
        },
    )


def check_cycle_values(
    limit: ProfileLimit,
    decomposition: LimitDecomposition,
    tol: float = 2e-2,
) -> CheckReport:
    """Per recurrent cycle: v*(k) = <p, v*> = <mu, g*>, plus the mixed form
    v*(k) = <mu,g*>/(1+r) + r<p,v*>/(1+r).  Absorbing cycles are skipped."""
    v, g = limit.v_star, limit.g_star
    residuals = {}
    worst = 0.0
    for idx, node in enumerate(decomposition.relevant):
        label = node.label(decomposition.states)
        if decomposition.classes[idx] != "recurrent":
            residuals[label] = {"skipped": "not recurrent"}
            continue
        vk = limit.v_tilde[idx]
        p, mu, r = node.exit_distribution, node.mixing_distribution, node.exit_rate
        exit_value = float(p @ v)
        mix_payoff = float(mu @ g)
        mixed = mix_payoff / (1.0 + r) + r * exit_value / (1.0 + r)
        entry = {
            "exit_value_gap": abs(exit_value - vk),
            "mixing_payoff_gap": abs(mix_payoff - vk),
            "mixed_identity_gap": abs(mixed - vk),
        }
        residuals[label] = entry
        worst = max(worst, *entry.values())
    return CheckReport(
        check="cycle_values",
        residuals=residuals,
        tolerance=tol,
        passed=worst <= tol,
        inputs={"fit_grid": [float(x) for x in limit.lambdas]},
    )


def check_limit_shapley(
    limit: ProfileLimit,
    decomposition: LimitDecomposition,
    t_grid=DEFAULT_T_GRID,
    tol: float = 2e-2,
) -> CheckReport:
    """Continuous-time dynamic programming: v* = int_0^t pi_s g* ds + (1-t) pi_t v*."""
    v, g = limit.v_star, limit.g_star
    residuals = {}
    worst = 0.0
    for t in t_grid:
        t = float(t)
        integral = integrated_position(decomposition, t) @ g
        tail = (1.0 - t) * (position_matrix(decomposition, t).matrix @ v)
        r = float(np.max(np.abs(v - integral - tail)))
        residuals[f"t={t:g}"] = r
        worst = max(worst, r)
    return CheckReport(
        check="limit_shapley",
        residuals=residuals,
        tolerance=tol,
        passed=worst <= tol,
        inputs={
            "t_grid": [float(t) for t in t_grid],
            "fit_grid": [float(x) for x in limit.lambdas],
        },
    )


def check_truncated_profile(
    spec: GameSpec,
    limit: ProfileLimit,
    lambda_eval: float,
    t_grid=DEFAULT_T_GRID,
    eps: float = 0.05,
) -> CheckReport:
    """Constant payoff under the leading-term truncation of the strategies."""
    profile = truncate_profile(limit.fit_report.profile_fits, lambda_eval)
    return verify_weak_cp(
        spec,
        limit,
        lambda_eval,
        t_grid,
        eps,
        profile=profile,
        check_name="truncated_profile_constant_payoff",
    )


def aux_payoff_scan(
    spec: GameSpec,
    limit: ProfileLimit,
    k_bar: int,
    deltas=(0.5, 1.0, 2.0),
    lambdas=(1e-3, 1e-4, 1e-5),
    eps: float = 0.05,
) -> CheckReport:
    """Discounted averages of v(k_m) - v(k_bar) under optimal play.

    For each delta the absolute average must shrink along the vanishing
    grid and end below ``eps``.
    """
    values = {}
    sols = {lam: solve_discounted(spec, float(lam)) for lam in lambdas}
    trend_ok = True
    final_ok = True
    for delta in deltas:
        row = {}
        prev = None
        for lam in lambdas:
            sol = sols[lam]
            q, _ = induced_chain(spec, sol.profile)
            h = h_payoff(q, sol.values, k_bar, k_bar, float(delta), float(lam))
            row[f"lam={lam:g}"] = h
            if prev is not None and abs(h) > abs(prev) + eps * 0.1:
                trend_ok = False
            prev = h
        values[f"delta={delta:g}"] = row
        if abs(prev) > eps:
            final_ok = False
    return CheckReport(
        check="aux_deviation_payoff",
        residuals=values,
        tolerance=eps,
        passed=trend_ok and final_ok,
        inputs={
            "k_bar": spec.states[k_bar],
            "deltas": [float(d) for d in deltas],
            "lambdas": [float(x) for x in lambdas],
        },
    )


def run_verification(
    spec: GameSpec,
    lambdas,
    lambda_eval: float = 1e-5,
    t_grid=DEFAULT_T_GRID,
    eps: float = 0.05,
    identity_tol: float = 2e-2,
    tol: float = 1e-10,
    prebuilt: tuple[ProfileLimit, LimitDecomposition] | None = None,
) -> list[CheckReport]:
    """Full pipeline: fit the limit, then run every check in a fixed order."""
    limit, dec = prebuilt if prebuilt is not None else build_profile_limit(
        spec, lambdas, tol
    )
    reports = [
        verify_weak_cp(spec, limit, lambda_eval, t_grid, eps),
        check_truncated_profile(spec, limit, lambda_eval, t_grid, eps),
        check_invariance(limit, dec, t_grid, identity_tol),
        check_cycle_values(limit, dec, identity_tol),
        check_limit_shapley(limit, dec, t_grid, identity_tol),
    ]
    for k_bar in range(spec.n_states):
        reports.append(aux_payoff_scan(spec, limit, k_bar, eps=eps))
    return reports
