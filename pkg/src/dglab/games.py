"""Finite zero-sum stochastic games: data model, validation and induced chains.

A game is a 5-tuple (states, actions of player 1, actions of player 2,
stage payoff tensor, transition tensor).  Player 1 maximizes the discounted
average of the stage payoffs, player 2 minimizes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROB_ATOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GameSpec:
    """A finite zero-sum stochastic game.

    Parameters
    ----------
    states : tuple of str
        State identifiers, in index order.
    actions1, actions2 : tuple of str
        Action identifiers of player 1 (rows) and player 2 (columns).
    payoff : ndarray, shape (K, I, J)
        Stage payoff to player 1.
    transition : ndarray, shape (K, I, J, K)
        transition[k, i, j, k2] is the probability of moving to state k2.
    """

    states: tuple[str, ...]
    actions1: tuple[str, ...]
    actions2: tuple[str, ...]
    payoff: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "actions1", tuple(str(a) for a in self.actions1))
        object.__setattr__(self, "actions2", tuple(str(a) for a in self.actions2))
        object.__setattr__(self, "payoff", _frozen(self.payoff))
        object.__setattr__(self, "transition", _frozen(self.transition))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def payoff_bound(self) -> float:
        """Sup-norm of the stage payoff; bounds every discounted value."""
        return float(np.max(np.abs(self.payoff))) if self.payoff.size else 0.0

    def state_index(self, state: str) -> int:
        return self.states.index(str(state))

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "actions1": list(self.actions1),
            "actions2": list(self.actions2),
            "payoff": self.payoff.tolist(),
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameSpec":
        return cls(
            states=tuple(data["states"]),
            actions1=tuple(data["actions1"]),
            actions2=tuple(data["actions2"]),
            payoff=np.asarray(data["payoff"], dtype=float),
            transition=np.asarray(data["transition"], dtype=float),
        )


def validate_game(spec: GameSpec) -> list[str]:
    """Check all GameSpec invariants; return one message per violation.

    An empty list means the game is well formed.  Diagnostic only: nothing
    is raised, offending indices are named in the messages.
    """
    violations = []
    if len(spec.states) == 0:
        violations.append("states empty")
    if len(spec.actions1) == 0:
        violations.append("actions1 empty")
    if len(spec.actions2) == 0:
        violations.append("actions2 empty")
    if len(set(spec.states)) != len(spec.states):
        violations.append("states contain duplicates")

    expected_g = (len(spec.states), len(spec.actions1), len(spec.actions2))
    if spec.payoff.shape != expected_g:
        violations.append(
            f"payoff shape {spec.payoff.shape} != {expected_g}"
        )
    expected_q = expected_g + (len(spec.states),)
    if spec.transition.shape != expected_q:
        violations.append(
            f"transition shape {spec.transition.shape} != {expected_q}"
        )
    if violations:
        return violations

    if not np.all(np.isfinite(spec.payoff)):
        bad = np.argwhere(~np.isfinite(spec.payoff))[0]
        violations.append(f"payoff not finite at (k,i,j)={tuple(bad)}")

    q = spec.transition
    if np.any(q < -PROB_ATOL) or np.any(q > 1 + PROB_ATOL):
        bad = np.argwhere((q < -PROB_ATOL) | (q > 1 + PROB_ATOL))[0]
        violations.append(f"transition entry outside [0,1] at {tuple(bad)}")
    sums = q.sum(axis=3)
    bad_rows = np.argwhere(np.abs(sums - 1.0) > PROB_ATOL)
    for k, i, j in bad_rows:
        violations.append(
            f"transition row (k={spec.states[k]}, i={spec.actions1[i]}, "
            f"j={spec.actions2[j]}) sums to {sums[k, i, j]:.12g}"
        )
    return violations


def is_distribution(w: np.ndarray, atol: float = PROB_ATOL) -> bool:
    """True iff ``w`` is a probability vector (entries >= 0, sum 1)."""
    w = np.asarray(w, dtype=float)
    return bool(np.all(w >= -atol) and abs(w.sum() - 1.0) <= atol)


@dataclass(frozen=True)
class StationaryProfile:
    """A pair of stationary strategies, one mixed action per state.

    ``x1[k]`` is the mixed action of player 1 in state ``k`` (a probability
    vector over ``actions1``), and symmetrically for ``x2``.
    """

    x1: np.ndarray  # shape (K, I)
    x2: np.ndarray  # shape (K, J)

    def __post_init__(self):
        object.__setattr__(self, "x1", _frozen(self.x1))
        object.__setattr__(self, "x2", _frozen(self.x2))

    def validate(self, atol: float = PROB_ATOL) -> list[str]:
        violations = []
        for name, x in (("x1", self.x1), ("x2", self.x2)):
            for k, row in enumerate(x):
                if not is_distribution(row, atol):
                    violations.append(f"{name} row {k} is not a distribution")
        return violations


def uniform_profile(spec: GameSpec) -> StationaryProfile:
    k, ni, nj = spec.n_states, len(spec.actions1), len(spec.actions2)
    return StationaryProfile(
        x1=np.full((k, ni), 1.0 / ni), x2=np.full((k, nj), 1.0 / nj)
    )


def induced_chain(
    spec: GameSpec, profile: StationaryProfile
) -> tuple[np.ndarray, np.ndarray]:
    """Markov chain and stage payoff vector induced by a stationary profile.

    Returns ``(Q, g_x)`` where ``Q[k, k2] = sum_ij x1[k,i] x2[k,j] q(k2|k,i,j)``
    and ``g_x[k] = sum_ij x1[k,i] x2[k,j] g(k,i,j)``.
    """
    q = np.einsum("ki,kj,kijl->kl", profile.x1, profile.x2, spec.transition)
    g = np.einsum("ki,kj,kij->k", profile.x1, profile.x2, spec.payoff)
    # renormalize away accumulated rounding; rows are stochastic by contract
    q = np.clip(q, 0.0, None)
    q /= q.sum(axis=1, keepdims=True)
    return q, g


def load_game(path: str | Path) -> GameSpec:
    with open(path) as fh:
        return GameSpec.from_dict(json.load(fh))


def dump_game(spec: GameSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
