import json
from fractions import Fraction

import numpy as np
import pytest

from dglab.cycles import decompose, position_matrix
from dglab.errors import GridError
from dglab.examples import kohlberg_chain
from dglab.games import StationaryProfile
from dglab.report import reports_to_json
from dglab.solve import geometric_grid
from dglab.verify import (
    ProfileLimit,
    FitReport,
    aux_payoff_scan,
    build_profile_limit,
    check_cycle_values,
    check_invariance,
    check_limit_shapley,
    check_truncated_profile,
    extrapolate_limit,
    integrated_position,
    run_verification,
    verify_weak_cp,
)

from conftest import STANDARD_GRID, random_game


def exact_kohlberg_limit(spec):
    """ProfileLimit assembled from the exactly-known chain and limit vectors."""
    chain = kohlberg_chain()
    return ProfileLimit(
        spec=spec,
        lambdas=tuple(STANDARD_GRID),
        fitted_chain=chain,
        g_star=np.array([1.0, 1.0, -1.0, -1.0]),
        v_star=np.array([1.0, 0.0, 0.0, -1.0]),
        v_tilde=np.array([1.0, 0.0, -1.0]),
        fit_report=FitReport({}, None, (), ()),
    )


# ---------------------------------------------------------------------------
# extrapolation

def test_extrapolate_constant():
    lams = np.array(STANDARD_GRID)
    lim = extrapolate_limit(lams, np.full(len(lams), 0.5))
    assert lim.value == 0.5
    assert lim.exponent == 0


def test_extrapolate_power_family():
    lams = np.array(STANDARD_GRID)
    vals = 0.3 + 2.0 * np.sqrt(lams)
    lim = extrapolate_limit(lams, vals)
    assert lim.exponent == Fraction(1, 2)
    assert lim.value == pytest.approx(0.3, abs=1e-9)
    assert abs(lim.value - 0.3) <= lim.error


def test_extrapolate_two_term_family():
    lams = np.array(STANDARD_GRID)
    vals = -0.7 + 1.5 * lams**0.5 - 0.8 * lams
    lim = extrapolate_limit(lams, vals)
    assert lim.value == pytest.approx(-0.7, abs=1e-5)
    assert abs(lim.value + 0.7) <= lim.error


# ---------------------------------------------------------------------------
# fitted limits

def test_grid_must_reach_1e6(bigmatch):
    with pytest.raises(GridError):
        build_profile_limit(bigmatch, geometric_grid(0.1, 0.5, 6))


def test_big_match_profile_limit(bigmatch_limit, bigmatch):
    limit, dec = bigmatch_limit
    chain = limit.fitted_chain
    k, zero, one = 0, 1, 2
    terms = chain.terms
    assert terms[(k, k)][1] == 0
    c_one, e_one = terms[(k, one)]
    c_zero, e_zero = terms[(k, zero)]
    assert e_one == 1 and e_zero == 1
    assert c_one == pytest.approx(0.5, rel=1e-3)
    assert c_zero == pytest.approx(0.5, rel=1e-3)
    assert np.allclose(limit.v_star, [0.5, 0.0, 1.0], atol=1e-8)
    assert np.allclose(limit.g_star, [0.5, 0.0, 1.0], atol=1e-6)
    labels = [n.label(bigmatch.states) for n in dec.relevant]
    assert labels == ["{k}", "{0*}", "{1*}"]
    assert dec.classes == ("recurrent", "absorbing", "absorbing")


def test_all_absorbing_profile_limit(absorbing):
    limit, dec = build_profile_limit(absorbing, geometric_grid(0.1, 0.1, 7))
    assert dec.n_relevant == absorbing.n_states
    assert all(cls == "absorbing" for cls in dec.classes)
    assert np.allclose(limit.v_star, [0.25, -0.5, 1.0], atol=1e-10)


def test_kohlberg_profile_limit(kohlberg_limit):
    limit, dec = kohlberg_limit
    chain = limit.fitted_chain
    assert chain.denominator == 2
    c, e = chain.terms[(1, 2)]
    assert e == Fraction(1, 2) and c == pytest.approx(2.0, rel=2e-3)
    c, e = chain.terms[(1, 0)]
    assert e == 1 and c == pytest.approx(1.0, rel=2e-3)
    assert np.max(np.abs(limit.v_star - np.array([1, 0, 0, -1]))) <= 0.05
    assert np.allclose(limit.g_star, [1, 1, -1, -1], atol=1e-9)


# ---------------------------------------------------------------------------
# constant payoff checks

def test_weak_cp_kohlberg(kohlberg_game, kohlberg_limit):
    limit, _ = kohlberg_limit
    report = verify_weak_cp(kohlberg_game, limit, 1e-5, eps=0.05)
    assert report.passed
    assert report.max_residual() <= 0.05


def test_weak_cp_absorbing(absorbing):
    limit, _ = build_profile_limit(absorbing, geometric_grid(0.1, 0.1, 7))
    report = verify_weak_cp(absorbing, limit, 1e-4, eps=0.05)
    assert report.passed
    # gaps bounded by one stage weight times the payoff bound
    assert report.max_residual() <= 1e-4 * absorbing.payoff_bound + 1e-9


def test_weak_cp_negative_control(bigmatch, bigmatch_limit):
    limit, _ = bigmatch_limit
    from dglab.solve import solve_discounted

    sol = solve_discounted(bigmatch, 1e-5)
    x2 = np.zeros_like(sol.profile.x2)
    x2[:, 0] = 1.0  # always L
    profile = StationaryProfile(sol.profile.x1, x2)
    report = verify_weak_cp(bigmatch, limit, 1e-5, eps=0.05, profile=profile)
    assert not report.passed
    assert report.max_residual() >= 0.1


def test_invariance_kohlberg_exact_inputs(kohlberg_game):
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    report = check_invariance(limit, dec, tol=1e-9)
    assert report.passed
    assert report.max_residual() <= 1e-9


def test_invariance_reduces_at_zero(absorbing):
    limit, dec = build_profile_limit(absorbing, geometric_grid(0.1, 0.1, 7))
    assert np.allclose(dec.gen, 0.0)
    pi0 = position_matrix(dec, 0.0).matrix
    residual = np.max(np.abs(pi0 @ limit.v_star - limit.v_star))
    report = check_invariance(limit, dec, t_grid=(0.0, 0.5), tol=1e-9)
    assert report.residuals["position"]["t=0"] == pytest.approx(residual, abs=1e-12)


def test_cycle_values_kohlberg_exact_inputs(kohlberg_game):
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    report = check_cycle_values(limit, dec, tol=1e-9)
    assert report.passed
    res = report.residuals["{k,l}"]
    assert res["exit_value_gap"] <= 1e-12
    assert res["mixing_payoff_gap"] <= 1e-12
    assert res["mixed_identity_gap"] <= 1e-12
    assert report.residuals["{1*}"] == {"skipped": "not recurrent"}


def test_limit_shapley_kohlberg_exact_inputs(kohlberg_game):
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    report = check_limit_shapley(limit, dec, t_grid=(0.0, 0.25, 0.5, 0.75), tol=1e-9)
    assert report.passed
    assert report.max_residual() <= 1e-10


def test_integrated_position_against_quadrature(kohlberg_game):
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    from test_cycles import gl_position_integral

    for t in (0.3, 0.7):
        closed = integrated_position(dec, t)
        quad = gl_position_integral(dec, t_end=t)
        assert np.max(np.abs(closed - quad)) <= 1e-10


def test_limit_value_algebra_exact(kohlberg_game):
    # the entrance law maps cycle values to state values, the mixing matrix
    # maps them back, and the generator annihilates them
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    assert np.allclose(dec.phi @ limit.v_tilde, limit.v_star, atol=1e-12)
    assert np.allclose(dec.mix @ limit.v_star, limit.v_tilde, atol=1e-12)
    assert np.allclose(dec.gen @ limit.v_tilde, 0.0, atol=1e-12)


def test_limit_value_algebra_fitted():
    rng = np.random.default_rng(109)
    grid = geometric_grid(0.1, 10**-0.5, 11)
    for _ in range(3):
        game = random_game(rng, n_states=4, n_rows=2, n_cols=2)
        limit, dec = build_profile_limit(game, grid)
        assert np.max(np.abs(dec.phi @ limit.v_tilde - limit.v_star)) <= 2e-2
        assert np.max(np.abs(dec.mix @ limit.v_star - limit.v_tilde)) <= 2e-2
        assert np.max(np.abs(dec.gen @ limit.v_tilde)) <= 2e-2


def test_martingale_restatement(kohlberg_game):
    # cycle-aggregated positions keep the cycle-value average constant
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    values = []
    for t in (0.0, 0.2, 0.5, 0.8, 0.99):
        pi = position_matrix(dec, t).matrix
        agg = np.array(
            [
                [pi[k, list(node.member_states)].sum() for node in dec.relevant]
                for k in range(4)
            ]
        )
        values.append(agg @ limit.v_tilde)
    for later in values[1:]:
        assert np.max(np.abs(later - values[0])) <= 1e-10


def test_derivative_restatement(kohlberg_game):
    # <pi_t(k,.), g*> equals v*(k) for every t on the grid
    limit = exact_kohlberg_limit(kohlberg_game)
    dec = decompose(limit.fitted_chain)
    for t in (0.0, 0.3, 0.6, 0.9):
        pi = position_matrix(dec, t).matrix
        assert np.max(np.abs(pi @ limit.g_star - limit.v_star)) <= 1e-10


def test_truncated_profile_kohlberg(kohlberg_game, kohlberg_limit):
    limit, _ = kohlberg_limit
    report = check_truncated_profile(kohlberg_game, limit, 1e-5, eps=0.05)
    assert report.passed


def test_truncated_profile_big_match(bigmatch, bigmatch_limit):
    limit, _ = bigmatch_limit
    report = check_truncated_profile(bigmatch, limit, 1e-5, eps=0.05)
    assert report.passed
    # gamma stays within 0.05 of t/2 in the active state
    for key, gap in report.residuals["k"].items():
        assert abs(gap) <= 0.05


def test_truncation_idempotent_on_leading_form_profile(absorbing):
    # a profile that already has pure leading-term form (here constant)
    # truncates to itself, so both checks produce the same gaps
    limit, _ = build_profile_limit(absorbing, geometric_grid(0.1, 0.1, 7))
    direct = verify_weak_cp(absorbing, limit, 1e-4, eps=0.05)
    truncated = check_truncated_profile(absorbing, limit, 1e-4, eps=0.05)
    for state, gaps in direct.residuals.items():
        for key, gap in gaps.items():
            assert truncated.residuals[state][key] == pytest.approx(gap, abs=1e-12)


def test_aux_scan_big_match(bigmatch, bigmatch_limit):
    limit, _ = bigmatch_limit
    report = aux_payoff_scan(bigmatch, limit, 0, deltas=(1.0,), lambdas=(1e-3, 1e-4))
    assert report.passed
    for row in report.residuals.values():
        for h in row.values():
            assert abs(h) <= 1e-8  # values constant in lambda


def test_aux_scan_kohlberg(kohlberg_game, kohlberg_limit):
    limit, _ = kohlberg_limit
    report = aux_payoff_scan(
        kohlberg_game, limit, 1, deltas=(0.5, 1.0, 2.0), lambdas=(1e-3, 1e-4, 1e-5)
    )
    assert report.passed
    final = report.residuals["delta=1"]["lam=1e-05"]
    assert abs(final) <= 0.05


def test_random_fitted_invariance():
    rng = np.random.default_rng(101)
    grid = geometric_grid(0.1, 10**-0.5, 11)
    done = 0
    while done < 3:
        g = random_game(rng, n_states=5, n_rows=2, n_cols=2)
        limit, dec = build_profile_limit(g, grid)
        done += 1
        rep = check_invariance(limit, dec, tol=2e-2)
        assert rep.passed, rep.residuals
        rep = check_cycle_values(limit, dec, tol=2e-2)
        assert rep.passed, rep.residuals
        rep = check_limit_shapley(limit, dec, t_grid=(0.0, 0.25, 0.5, 0.75), tol=2e-2)
        assert rep.passed, rep.residuals


def test_run_verification_reports_schema(kohlberg_game, kohlberg_limit):
    reports = run_verification(
        kohlberg_game, STANDARD_GRID, prebuilt=kohlberg_limit
    )
    names = [r.check for r in reports]
    assert names[:5] == [
        "weak_constant_payoff",
        "truncated_profile_constant_payoff",
        "invariance",
        "cycle_values",
        "limit_shapley",
    ]
    assert all(r.passed for r in reports)
    text = reports_to_json(reports)
    payload = json.loads(text)
    for entry in payload:
        assert set(entry) == {"check", "residuals", "tolerance", "pass", "inputs"}
    # deterministic serialization
    assert text == reports_to_json(reports)
