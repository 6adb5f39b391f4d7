import json

import numpy as np
import pytest

from dglab.games import (
    GameSpec,
    StationaryProfile,
    dump_game,
    induced_chain,
    load_game,
    uniform_profile,
    validate_game,
)
from dglab.solve import solve_discounted

from conftest import random_game


def test_big_match_is_well_formed(bigmatch):
    assert validate_game(bigmatch) == []


def test_kohlberg_is_well_formed(kohlberg_game):
    assert validate_game(kohlberg_game) == []


def test_defective_transition_row_is_named(bigmatch):
    q = bigmatch.transition.copy()
    q[0, 1, 0, 0] = 0.9  # row (k, B, L) now sums to 0.9
    broken = GameSpec(
        bigmatch.states, bigmatch.actions1, bigmatch.actions2, bigmatch.payoff, q
    )
    problems = validate_game(broken)
    assert len(problems) == 1
    assert "k" in problems[0] and "B" in problems[0] and "L" in problems[0]
    assert "0.9" in problems[0]


def test_empty_action_set_reported():
    spec = GameSpec(
        ("s",), (), ("b",), np.zeros((1, 0, 1)), np.zeros((1, 0, 1, 1))
    )
    assert any("actions1 empty" in p for p in validate_game(spec))


def test_payoff_bound(bigmatch):
    assert bigmatch.payoff_bound == 1.0


def test_pure_profile_deterministic_game_gives_01_matrix(kohlberg_game):
    n = kohlberg_game.n_states
    x1 = np.zeros((n, 2))
    x1[:, 0] = 1.0
    x2 = np.zeros((n, 2))
    x2[:, 1] = 1.0
    q, _ = induced_chain(kohlberg_game, StationaryProfile(x1, x2))
    assert np.all((q == 0) | (q == 1))


def test_uniform_profile_big_match_chain(bigmatch):
    # by hand: (T,L)->1* and (T,R)->0* each w.p. 1/4, B keeps the state;
    # stage payoff averages the four cells to 1/2
    q, g = induced_chain(bigmatch, uniform_profile(bigmatch))
    k, zero, one = 0, 1, 2
    assert q[k, k] == pytest.approx(0.5, abs=1e-12)
    assert q[k, zero] == pytest.approx(0.25, abs=1e-12)
    assert q[k, one] == pytest.approx(0.25, abs=1e-12)
    assert g[k] == pytest.approx(0.5, abs=1e-12)


def test_kohlberg_optimal_chain_matches_leading_terms(kohlberg_game):
    lam = 1e-6
    sol = solve_discounted(kohlberg_game, lam)
    q, _ = induced_chain(kohlberg_game, sol.profile)
    root = np.sqrt(lam)
    k, ell, plus = 1, 2, 0
    assert q[k, ell] == pytest.approx(2 * root, rel=5e-3)
    assert q[k, plus] == pytest.approx(lam, rel=5e-3)
    assert q[k, k] == pytest.approx(1.0, abs=5e-3)


def test_induced_chain_rows_stochastic(bigmatch):
    rng = np.random.default_rng(3)
    for _ in range(10):
        g = random_game(rng)
        q, _ = induced_chain(g, uniform_profile(g))
        assert np.allclose(q.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(q >= 0)


def test_json_round_trip(tmp_path, kohlberg_game):
    path = tmp_path / "game.json"
    dump_game(kohlberg_game, path)
    loaded = load_game(path)
    assert loaded.states == kohlberg_game.states
    assert loaded.actions1 == kohlberg_game.actions1
    assert loaded.actions2 == kohlberg_game.actions2
    assert np.array_equal(loaded.payoff, kohlberg_game.payoff)
    assert np.array_equal(loaded.transition, kohlberg_game.transition)


def test_dump_is_deterministic(tmp_path, bigmatch):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    dump_game(bigmatch, p1)
    dump_game(bigmatch, p2)
    assert p1.read_bytes() == p2.read_bytes()
    json.loads(p1.read_text())  # valid JSON
