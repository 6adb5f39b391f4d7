"""Shared fixtures: worked example games and chains, seeded generators."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from dglab.cycles import LeadingTermChain
from dglab.examples import (
    absorbing_game,
    big_match,
    chain_five_state,
    chain_four_state,
    kohlberg,
    kohlberg_chain,
    periodic_chain,
)
from dglab.games import GameSpec
from dglab.solve import geometric_grid
from dglab.verify import build_profile_limit

STANDARD_GRID = geometric_grid(0.1, 10**-0.5, 13)  # 1e-1 .. 1e-7


@pytest.fixture(scope="session")
def bigmatch():
    return big_match()


@pytest.fixture(scope="session")
def kohlberg_game():
    return kohlberg()


@pytest.fixture(scope="session")
def absorbing():
    return absorbing_game()


@pytest.fixture(scope="session")
def chain4():
    return chain_four_state()


@pytest.fixture(scope="session")
def chain5():
    return chain_five_state()


@pytest.fixture(scope="session")
def ko_chain():
    return kohlberg_chain()


@pytest.fixture(scope="session")
def chain_periodic():
    return periodic_chain()


@pytest.fixture(scope="session")
def kohlberg_limit(kohlberg_game):
    """Fitted limit of the Kohlberg game on the standard grid (slow; shared)."""
    return build_profile_limit(kohlberg_game, STANDARD_GRID)


@pytest.fixture(scope="session")
def bigmatch_limit(bigmatch):
    return build_profile_limit(bigmatch, STANDARD_GRID)


def random_game(rng, n_states=5, n_rows=3, n_cols=3, payoff_scale=1.0) -> GameSpec:
    payoff = payoff_scale * rng.uniform(-1, 1, (n_states, n_rows, n_cols))
    q = rng.uniform(0, 1, (n_states, n_rows, n_cols, n_states)) ** 2
    q /= q.sum(axis=3, keepdims=True)
    return GameSpec(
        tuple(f"s{i}" for i in range(n_states)),
        tuple(f"a{i}" for i in range(n_rows)),
        tuple(f"b{j}" for j in range(n_cols)),
        payoff,
        q,
    )


def exponent_ladder(denominator: int):
    """Exponent levels for random chains, spaced >= 1/2 so that the fixed
    lambda = 1e-8 numeric oracle resolves the leading terms within the
    acceptance tolerances (subdominant contributions <= ~lam**(1/2))."""
    if denominator == 3:
        return [Fraction(0), Fraction(2, 3), Fraction(4, 3)]
    return [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(3, 2)]


def random_chain(rng, n_states=None, denominator=None) -> LeadingTermChain:
    """Random valid leading-term chain with well-separated exponent levels."""
    if n_states is None:
        n_states = int(rng.integers(4, 7))
    if denominator is None:
        denominator = int(rng.choice([2, 3, 4]))
    ladder = exponent_ladder(denominator)
    states = tuple(f"s{i}" for i in range(n_states))
    terms = {}
    for k in range(n_states):
        terms[(k, k)] = (1.0, Fraction(0))
        if rng.random() < 0.15:
            continue  # absorbing state
        n_levels = 1 if rng.random() < 0.6 else 2
        levels = sorted(
            rng.choice(len(ladder), size=min(n_levels, len(ladder)), replace=False)
        )
        has_zero = ladder[int(levels[0])] == 0
        for lvl in levels:
            exp = ladder[int(lvl)]
            others = [j for j in range(n_states) if j != k]
            if exp == 0:
                # keep order-0 exit weights comparable to the other levels'
                # coefficients, so subdominant terms stay resolvable at the
                # oracle's lambda within the acceptance tolerances
                n_dest = int(rng.integers(1, 3))
                coeffs = rng.uniform(0.3, 0.45, size=n_dest)
            elif has_zero:
                # a level competing against an order-0 exit: cap the
                # aggregate so the dominant/subdominant ratio stays small
                n_dest = int(rng.integers(1, 3))
                coeffs = rng.uniform(0.3, 0.8, size=n_dest)
            else:
                n_dest = int(rng.integers(1, min(3, len(others)) + 1))
                coeffs = rng.uniform(0.5, 2.0, size=n_dest)
            dests = rng.choice(others, size=n_dest, replace=False)
            for dest, c in zip(dests, coeffs):
                terms[(k, int(dest))] = (float(c), exp)
        zero_off = sum(
            c for (a, b), (c, e) in terms.items() if a == k and b != k and e == 0
        )
        terms[(k, k)] = (1.0 - zero_off, Fraction(0))
    # drop self-loops that ended up with no mass
    terms = {
        key: val
        for key, val in terms.items()
        if not (key[0] == key[1] and val[0] <= 1e-9)
    }
    return LeadingTermChain(states, denominator, terms)


def matrix_game_2x2_oracle(a):
    """Closed-form value/strategies of a 2x2 game (independent test oracle).

    Checks the four pure saddle points first; otherwise uses the
    completely-mixed formulas value=(ad-bc)/(a+d-b-c), x=(d-c, a-b)/(...),
    y=(d-b, a-c)/(...).
    """
    a = np.asarray(a, dtype=float)
    (p, q), (r, s) = a
    for i in range(2):
        for j in range(2):
            row_ok = a[i, j] <= a[i, 1 - j] + 1e-15
            col_ok = a[i, j] >= a[1 - i, j] - 1e-15
            if row_ok and col_ok:
                x = np.zeros(2)
                x[i] = 1.0
                y = np.zeros(2)
                y[j] = 1.0
                return float(a[i, j]), x, y
    den = p + s - q - r
    value = (p * s - q * r) / den
    x = np.array([s - r, p - q]) / den
    y = np.array([s - q, p - r]) / den
    return float(value), x, y
