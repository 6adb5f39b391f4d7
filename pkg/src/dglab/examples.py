"""Desk-scale fixture games and chains used by the CLI and the test suite."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np

from .cycles import LeadingTermChain, dump_chain
from .games import GameSpec, dump_game


def big_match() -> GameSpec:
    """Three states: one active, an absorbing 0 and an absorbing 1.

    In the active state the row player can keep playing (bottom row) or
    stop the game (top row); stopping absorbs at payoff 1 or 0 depending
    on the column.  The discounted value of the active state is 1/2 at
    every discount factor.
    """
    states = ("k", "0*", "1*")
    actions1 = ("T", "B")
    actions2 = ("L", "R")
    k, zero, one = 0, 1, 2
    payoff = np.zeros((3, 2, 2))
    payoff[k] = [[1.0, 0.0], [0.0, 1.0]]
    payoff[zero] = 0.0
    payoff[one] = 1.0
    q = np.zeros((3, 2, 2, 3))
    q[k, 0, 0, one] = 1.0   # stop against L -> absorb at 1
    q[k, 0, 1, zero] = 1.0  # stop against R -> absorb at 0
    q[k, 1, 0, k] = 1.0
    q[k, 1, 1, k] = 1.0
    q[zero, :, :, zero] = 1.0
    q[one, :, :, one] = 1.0
    return GameSpec(states, actions1, actions2, payoff, q)


def kohlberg() -> GameSpec:
    """Two symmetric active states feeding two opposite absorbing states.

    State k pays +1 and can absorb at +1, state l pays -1 and can absorb
    at -1; optimal strategies mix with weights of order sqrt(lambda) and
    the limit value is (1, 0, 0, -1) in the order (1*, k, l, -1*).
    """
    states = ("1*", "k", "l", "-1*")
    actions1 = ("T", "B")
    actions2 = ("L", "R")
    plus, k, ell, minus = 0, 1, 2, 3
    payoff = np.zeros((4, 2, 2))
    payoff[plus] = 1.0
    payoff[k] = 1.0
    payoff[ell] = -1.0
    payoff[minus] = -1.0
    q = np.zeros((4, 2, 2, 4))
    q[plus, :, :, plus] = 1.0
    q[minus, :, :, minus] = 1.0
    # from k: (T,L)->k, (T,R)->l, (B,L)->l, (B,R)->+1 absorbing
    q[k, 0, 0, k] = 1.0
    q[k, 0, 1, ell] = 1.0
    q[k, 1, 0, ell] = 1.0
    q[k, 1, 1, plus] = 1.0
    # from l: (T,L)->l, (T,R)->k, (B,L)->k, (B,R)->-1 absorbing
    q[ell, 0, 0, ell] = 1.0
    q[ell, 0, 1, k] = 1.0
    q[ell, 1, 0, k] = 1.0
    q[ell, 1, 1, minus] = 1.0
    return GameSpec(states, actions1, actions2, payoff, q)


def absorbing_game(payoffs=(0.25, -0.5, 1.0)) -> GameSpec:
    """Every state absorbing with a fixed payoff; values are the payoffs."""
    n = len(payoffs)
    states = tuple(f"a{i}" for i in range(n))
    payoff = np.zeros((n, 1, 1))
    q = np.zeros((n, 1, 1, n))
    for i, a in enumerate(payoffs):
        payoff[i, 0, 0] = a
        q[i, 0, 0, i] = 1.0
    return GameSpec(states, ("stay",), ("stay",), payoff, q)


def chain_four_state() -> LeadingTermChain:
    """Four-state perturbed chain whose hierarchy has two merged cycles.

    State 1 leaks immediately to the others, states 2 and 3 swap at order
    lambda**(1/3), and everything funnels through state 4 back to 1 at
    order lambda**(2/3).
    """
    f = Fraction
    terms = {
        (0, 0): (0.5, f(0)),
        (0, 1): (1 / 6, f(0)),
        (0, 2): (1 / 6, f(0)),
        (0, 3): (1 / 6, f(0)),
        (1, 1): (1.0, f(0)),
        (1, 2): (5.0, f(1, 3)),
        (1, 3): (1.0, f(2, 3)),
        (2, 2): (1.0, f(0)),
        (2, 1): (5.0, f(1, 3)),
        (2, 3): (1.0, f(2, 3)),
        (3, 3): (1.0, f(0)),
        (3, 0): (1.0, f(2, 3)),
    }
    return LeadingTermChain(("1", "2", "3", "4"), 3, terms)


def chain_five_state() -> LeadingTermChain:
    """Five-state chain with a transient pair, a recurrent pair and an
    absorbing singleton at the relevant cut."""
    f = Fraction
    terms = {
        (0, 0): (1.0, f(0)),
        (0, 1): (1.0, f(1, 4)),
        (0, 3): (1.0, f(3, 4)),
        (0, 4): (1.0, f(3, 4)),
        (1, 0): (1.0, f(1, 4)),
        (1, 1): (1.0, f(0)),
        (2, 2): (1.0, f(0)),
        (2, 3): (1.0, f(1, 2)),
        (2, 4): (1.0, f(1)),
        (3, 2): (1.0, f(1, 2)),
        (3, 3): (1.0, f(0)),
        (4, 2): (1.0, f(5, 4)),
        (4, 4): (1.0, f(0)),
    }
    return LeadingTermChain(("1", "2", "3", "4", "5"), 4, terms)


def kohlberg_chain() -> LeadingTermChain:
    """Leading terms of the chain induced by optimal play in ``kohlberg``."""
    f = Fraction
    terms = {
        (0, 0): (1.0, f(0)),
        (1, 1): (1.0, f(0)),
        (1, 2): (2.0, f(1, 2)),
        (1, 0): (1.0, f(1)),
        (2, 2): (1.0, f(0)),
        (2, 1): (2.0, f(1, 2)),
        (2, 3): (1.0, f(1)),
        (3, 3): (1.0, f(0)),
    }
    return LeadingTermChain(("1*", "k", "l", "-1*"), 2, terms)


def periodic_chain() -> LeadingTermChain:
    """Two states swapping deterministically with a rare leak to a third."""
    f = Fraction
    terms = {
        (0, 1): (1.0, f(0)),
        (0, 2): (1.0, f(1, 2)),
        (1, 0): (1.0, f(0)),
        (2, 2): (1.0, f(0)),
    }
    return LeadingTermChain(("1", "2", "3"), 2, terms)


FIXTURES = {
    "bigmatch": ("game", big_match),
    "kohlberg": ("game", kohlberg),
    "absorbing": ("game", absorbing_game),
    "chain4": ("chain", chain_four_state),
    "chain5": ("chain", chain_five_state),
}


def write_fixtures(directory) -> list[str]:
    """Write every fixture as JSON into ``directory``; return file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (kind, factory) in sorted(FIXTURES.items()):
        path = directory / f"{name}.json"
        if kind == "game":
            dump_game(factory(), path)
        else:
            dump_chain(factory(), path)
        written.append(path.name)
    return written
