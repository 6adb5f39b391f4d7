"""Hierarchy of cycles of a Markov chain with rare transitions.

The chain is given by leading terms Q(k,k2) ~ c * lambda**e with exponents
that are nonnegative multiples of 1/N.  States merge into cycles level by
level; each cycle carries an exit height/rate/distribution, a mixing
height/distribution, and a graded occupation (per-state mass and depth)
that drives the characteristics of the enclosing cycles.  Relevant cycles
(occupied for a positive fraction of a vanishing-discount game) define the
entrance law, the inter-cycle generator and the position matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import ChainError

EXIT_NEVER = math.inf
COEFF_ATOL = 1e-9


# ---------------------------------------------------------------------------
# leading-term arithmetic: positive coefficient times lambda**exponent

@dataclass(frozen=True)
class _Term:
    coeff: float
    exp: Fraction

    def __mul__(self, other: "_Term") -> "_Term":
        return _Term(self.coeff * other.coeff, self.exp + other.exp)

    def __truediv__(self, other: "_Term") -> "_Term":
        return _Term(self.coeff / other.coeff, self.exp - other.exp)

    def __add__(self, other: "_Term") -> "_Term":
        # smaller exponent dominates as lambda -> 0; equal exponents add
        if self.exp < other.exp:
            return self
        if other.exp < self.exp:
            return other
        return _Term(self.coeff + other.coeff, self.exp)


def _term_sum(terms) -> _Term | None:
    total = None
    for t in terms:
        if t is None:
            continue
        total = t if total is None else total + t
    return total


# ---------------------------------------------------------------------------
# chain data model

@dataclass(frozen=True)
class LeadingTermChain:
    """Leading terms of a family of stochastic matrices.

    ``terms[(k, k2)] = (coeff, exponent)`` with coeff > 0 and exponent a
    nonnegative multiple of 1/denominator; absent pairs are structurally
    zero.  Order-0 mass missing from a row is carried by the self loop.
    """

    states: tuple[str, ...]
    denominator: int
    terms: dict

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        clean = {}
        for (a, b), (c, e) in self.terms.items():
            clean[(int(a), int(b))] = (float(c), Fraction(e))
        object.__setattr__(self, "terms", clean)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def row(self, k: int) -> dict:
        return {k2: ce for (k1, k2), ce in self.terms.items() if k1 == k}

    def to_dict(self) -> dict:
        entries = [
            {
                "from": self.states[a],
                "to": self.states[b],
                "coeff": c,
                "exp_num": int(e * self.denominator),
            }
            for (a, b), (c, e) in sorted(self.terms.items())
        ]
        return {
            "states": list(self.states),
            "denominator": self.denominator,
            "terms": entries,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LeadingTermChain":
        states = [str(s) for s in data["states"]]
        idx = {s: i for i, s in enumerate(states)}
        den = int(data["denominator"])
        terms = {}
        for entry in data["terms"]:
            a, b = idx[str(entry["from"])], idx[str(entry["to"])]
            terms[(a, b)] = (float(entry["coeff"]), Fraction(int(entry["exp_num"]), den))
        return cls(tuple(states), den, terms)


def load_chain(path: str | Path) -> LeadingTermChain:
    with open(path) as fh:
        return LeadingTermChain.from_dict(json.load(fh))


def dump_chain(chain: LeadingTermChain, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(chain.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate_chain(chain: LeadingTermChain) -> list[str]:
    """Check the LeadingTermChain invariants; empty list iff well formed."""
    violations = []
    n = chain.n_states
    if n == 0:
        violations.append("states empty")
    if chain.denominator < 1:
        violations.append("denominator must be >= 1")
    if len(set(chain.states)) != n:
        violations.append("states contain duplicates")
    rows = {k: {} for k in range(n)}
    for (a, b), (c, e) in chain.terms.items():
        name = f"({chain.states[a]}->{chain.states[b]})" if 0 <= a < n and 0 <= b < n else f"({a}->{b})"
        if not (0 <= a < n and 0 <= b < n):
            violations.append(f"term {name} outside the state set")
            continue
        if c <= 0:
            violations.append(f"term {name} has nonpositive coefficient {c}")
        if e < 0:
            violations.append(f"term {name} has negative exponent {e}")
        elif (e * chain.denominator).denominator != 1:
            violations.append(
                f"term {name} exponent {e} is not a multiple of 1/{chain.denominator}"
            )
        rows[a][b] = (c, e)
    for k in range(n):
        if not rows[k]:
            violations.append(f"row {chain.states[k]} has no terms")
            continue
        zero_sum = sum(c for c, e in rows[k].values() if e == 0)
        if zero_sum > 1 + COEFF_ATOL:
            violations.append(
                f"row {chain.states[k]} order-0 coefficients sum to {zero_sum:.9g} > 1"
            )
        diag = rows[k].get(k)
        if diag is not None and diag[1] == 0 and abs(zero_sum - 1.0) > COEFF_ATOL:
            violations.append(
                f"row {chain.states[k]} declares self-loop {diag[0]:.9g} but "
                f"order-0 mass {zero_sum:.9g} leaves residual unexplained"
            )
    return violations


# ---------------------------------------------------------------------------
# cycle tree

@dataclass(frozen=True)
class CycleNode:
    """A cycle of the hierarchy together with its characteristics.

    exit_height E, exit_rate r and exit_distribution p describe the escape
    from the cycle (p is a probability vector over the full state space,
    supported outside the cycle); mixing height M and mixing distribution
    mu describe the internal equilibration (mu supported on the cycle;
    undefined for singletons).  ``graded`` maps each member state to a
    (mass, depth) pair: depth-0 states carry mu, deeper states are occupied
    a vanishing fraction of the time, of order lambda**depth.
    """

    member_states: tuple[int, ...]
    children: tuple["CycleNode", ...]
    exit_height: Fraction | float
    exit_rate: float | None
    exit_distribution: np.ndarray | None
    mixing_height: Fraction | None
    mixing_distribution: np.ndarray | None
    graded: dict
    exit_intensity: _Term | None = field(repr=False, default=None)

    @property
    def is_singleton(self) -> bool:
        return len(self.member_states) == 1

    def label(self, states) -> str:
        return "{" + ",".join(states[k] for k in self.member_states) + "}"


def _node_exits(chain: LeadingTermChain, node: CycleNode):
    """Exit pairs (k, k2, term) with k inside, k2 outside, graded weights."""
    members = set(node.member_states)
    exits = []
    for (a, b), (c, e) in chain.terms.items():
        if a in members and b not in members:
            mass, depth = node.graded[a]
            exits.append((a, b, _Term(mass * c, depth + e)))
    return exits


def _exit_characteristics(chain, members, graded, n):
    exits = []
    member_set = set(members)
    for (a, b), (c, e) in chain.terms.items():
        if a in member_set and b not in member_set:
            mass, depth = graded[a]
            exits.append((a, b, _Term(mass * c, depth + e)))
    if not exits:
        return EXIT_NEVER, None, None, None
    height = min(t.exp for _, _, t in exits)
    coeff = sum(t.coeff for _, _, t in exits if t.exp == height)
    dist = np.zeros(n)
    for _, b, t in exits:
        if t.exp == height:
            dist[b] += t.coeff
    dist /= dist.sum()
    return height, coeff, dist, _Term(coeff, height)


def _singleton_node(chain: LeadingTermChain, k: int) -> CycleNode:
    n = chain.n_states
    graded = {k: (1.0, Fraction(0))}
    height, coeff, dist, intensity = _exit_characteristics(chain, (k,), graded, n)
    if height == EXIT_NEVER:
        rate = None
    elif height == 0:
        # limiting self-loop mass; the survival parameter is -ln(q0)
        off0 = sum(
            c
            for (a, b), (c, e) in chain.terms.items()
            if a == k and b != k and e == 0
        )
        q0 = max(0.0, 1.0 - off0)
        rate = -math.log(q0) if q0 > 1e-12 else None
    else:
        rate = coeff
    return CycleNode(
        member_states=(k,),
        children=(),
        exit_height=height,
        exit_rate=rate,
        exit_distribution=dist,
        mixing_height=None,
        mixing_distribution=None,
        graded=graded,
        exit_intensity=intensity,
    )


def _strongly_connected(nodes, edges):
    """Tarjan SCC over ``nodes``; ``edges[i]`` is a set of node indices."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    sccs = []
    counter = [0]

    def visit(v):
        work = [(v, iter(sorted(edges.get(v, ()))))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(edges.get(w, ())))))
                    advanced = True
                    break
                if w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(sorted(comp))

    for v in nodes:
        if v not in index:
            visit(v)
    return sccs


def _gth_leading(order, probs):
    """Leading term of the invariant distribution of an irreducible chain.

    ``probs[i][j]`` are off-diagonal transition probabilities as _Term
    objects.  State elimination uses only additions, multiplications and
    divisions of positive leading terms, so the computed leading behavior
    is exact.  Returns {node: _Term}, normalized so the smallest exponent
    is zero and the coefficients at that exponent sum to one.
    """
    n = len(order)
    a = {i: dict(probs.get(i, {})) for i in order}
    steps = []
    remaining = list(order)
    while len(remaining) > 1:
        s = remaining[-1]
        others = remaining[:-1]
        total = _term_sum(a[s].get(j) for j in others)
        if total is None:
            raise ChainError("jump chain is not irreducible")
        incoming = {i: a[i][s] for i in others if s in a[i]}
        steps.append((s, incoming, total))
        for i in others:
            w = a[i].pop(s, None)
            if w is None:
                continue
            f = w / total
            for j, p_sj in a[s].items():
                if j == i or j not in set(others):
                    continue
                add = f * p_sj
                a[i][j] = add if j not in a[i] else a[i][j] + add
        remaining = others
    nu = {remaining[0]: _Term(1.0, Fraction(0))}
    for s, incoming, total in reversed(steps):
        flows = [nu[i] * w for i, w in incoming.items() if i in nu]
        if not flows:
            raise ChainError("jump chain is not irreducible")
        nu[s] = _term_sum(flows) / total
    base = min(t.exp for t in nu.values())
    z = sum(t.coeff for t in nu.values() if t.exp == base)
    return {i: _Term(t.coeff / z, t.exp - base) for i, t in nu.items()}


def _merge_class(chain, nodes, level):
    """Merge a recurrent class of top-level cycles observed at ``level``."""
    n = chain.n_states
    members = tuple(sorted(k for node in nodes for k in node.member_states))
    member_of = {}
    for pos, node in enumerate(nodes):
        for k in node.member_states:
            member_of[k] = pos

    weights = {pos: {} for pos in range(len(nodes))}
    for pos, node in enumerate(nodes):
        for _, dest, term in _node_exits(chain, node):
            tgt = member_of.get(dest)
            if tgt is None or tgt == pos:
                continue
            cur = weights[pos].get(tgt)
            weights[pos][tgt] = term if cur is None else cur + term
    probs = {}
    for pos in range(len(nodes)):
        total = _term_sum(weights[pos].values())
        if total is None:
            raise ChainError("recurrent class member without internal exits")
        probs[pos] = {tgt: w / total for tgt, w in weights[pos].items()}

    nu = _gth_leading(list(range(len(nodes))), probs)

    occupations = {}
    for pos, node in enumerate(nodes):
        sojourn = _Term(1.0, Fraction(0)) / node.exit_intensity
        occupations[pos] = nu[pos] * sojourn

    raw = {}
    for pos, node in enumerate(nodes):
        for k in node.member_states:
            mass, depth = node.graded[k]
            term = occupations[pos] * _Term(mass, depth)
            raw[k] = term
    base = min(t.exp for t in raw.values())
    z = sum(t.coeff for t in raw.values() if t.exp == base)
    graded = {k: (t.coeff / z, t.exp - base) for k, t in raw.items()}

    mu = np.zeros(n)
    for k, (mass, depth) in graded.items():
        if depth == 0:
            mu[k] = mass

    height, coeff, dist, intensity = _exit_characteristics(chain, members, graded, n)
    rate = None if height == EXIT_NEVER else coeff
    return CycleNode(
        member_states=members,
        children=tuple(sorted(nodes, key=lambda nd: nd.member_states[0])),
        exit_height=height,
        exit_rate=rate,
        exit_distribution=dist,
        mixing_height=Fraction(level),
        mixing_distribution=mu,
        graded=graded,
        exit_intensity=intensity,
    )


def build_cycle_tree(chain: LeadingTermChain) -> tuple[CycleNode, ...]:
    """Hierarchy of cycles of a valid leading-term chain.

    Exponent levels are scanned in increasing order; at each level the jump
    graph among the current top-level cycles (edges at effective exponent
    <= level, exits weighted by graded occupations) is formed, and every
    recurrent communicating class with at least two members merges into a
    new cycle whose mixing height is the level.  Returns the forest roots;
    every state is a leaf.
    """
    problems = validate_chain(chain)
    if problems:
        raise ChainError("invalid chain: " + "; ".join(problems))
    tops = [_singleton_node(chain, k) for k in range(chain.n_states)]
    while len(tops) > 1:
        member_of = {}
        for pos, node in enumerate(tops):
            for k in node.member_states:
                member_of[k] = pos
        inter = {}
        for pos, node in enumerate(tops):
            for _, dest, term in _node_exits(chain, node):
                tgt = member_of[dest]
                if tgt == pos:
                    continue
                key = (pos, tgt)
                inter[key] = term if key not in inter else inter[key] + term
        if not inter:
            break
        levels = sorted({t.exp for t in inter.values()})
        merged = None
        for level in levels:
            edges = {}
            for (src, tgt), term in inter.items():
                if term.exp <= level:
                    edges.setdefault(src, set()).add(tgt)
            sccs = _strongly_connected(range(len(tops)), edges)
            closed = []
            for comp in sccs:
                comp_set = set(comp)
                leaves = any(
                    tgt not in comp_set
                    for src in comp
                    for tgt in edges.get(src, ())
                )
                if not leaves and len(comp) >= 2:
                    closed.append(comp)
            if closed:
                merged = sorted(
                    closed, key=lambda comp: min(tops[p].member_states[0] for p in comp)
                )
                new_nodes = [
                    _merge_class(chain, [tops[p] for p in comp], level)
                    for comp in merged
                ]
                absorbed = {p for comp in merged for p in comp}
                tops = [t for p, t in enumerate(tops) if p not in absorbed] + new_nodes
                break
        if merged is None:
            break
    return tuple(sorted(tops, key=lambda nd: nd.member_states[0]))


def iter_nodes(forest):
    """All nodes of a forest: leaves first (state order), then merged
    cycles by (mixing height, first member)."""
    leaves = []
    internal = []

    def walk(node):
        if node.is_singleton:
            leaves.append(node)
        else:
            internal.append(node)
        for child in node.children:
            walk(child)

    for root in forest:
        walk(root)
    leaves.sort(key=lambda nd: nd.member_states[0])
    internal.sort(key=lambda nd: (nd.mixing_height, nd.member_states[0]))
    return leaves + internal


# ---------------------------------------------------------------------------
# relevant cycles and limit objects

@dataclass
class LimitDecomposition:
    """Partition of the states into transient states and relevant cycles,
    together with the limit objects built on them.

    ``phi`` (K x L) is the entrance law, ``gen`` (L x L) the inter-cycle
    generator and ``mix`` (L x K) the matrix of mixing distributions;
    ``classes[l]`` is "recurrent" (exit height 1) or "absorbing" (> 1).
    """

    states: tuple[str, ...]
    denominator: int
    forest: tuple[CycleNode, ...]
    relevant: tuple[CycleNode, ...]
    classes: tuple[str, ...]
    transient: tuple[int, ...]
    transient_aggregates: tuple[CycleNode, ...]
    threshold: Fraction
    mix: np.ndarray
    phi: np.ndarray | None = None
    gen: np.ndarray | None = None

    @property
    def n_relevant(self) -> int:
        return len(self.relevant)

    def cycle_of(self, k: int) -> int | None:
        for idx, node in enumerate(self.relevant):
            if k in node.member_states:
                return idx
        return None


def classify_relevant(
    forest: tuple[CycleNode, ...], denominator: int, states=None
) -> LimitDecomposition:
    """Cut the cycle tree at mixing height 1 - 1/(2N) and classify.

    Cut nodes with exit height above the threshold are the relevant cycles
    (recurrent at exit height exactly 1, absorbing above); states of the
    remaining cut nodes are transient.  Relevant singletons receive the
    point mass as mixing distribution.
    """
    threshold = Fraction(2 * denominator - 1, 2 * denominator)
    cut = []

    def descend(node):
        if node.is_singleton or node.mixing_height < threshold:
            cut.append(node)
        else:
            for child in node.children:
                descend(child)

    for root in forest:
        descend(root)
    cut.sort(key=lambda nd: nd.member_states[0])

    n = max(max(nd.member_states) for nd in cut) + 1
    state_names = tuple(states) if states is not None else tuple(
        str(i) for i in range(n)
    )

    relevant, classes, aggregates, transient = [], [], [], []
    for node in cut:
        if node.exit_height > threshold:
            if node.exit_height != EXIT_NEVER and node.exit_height < 1:
                raise ChainError(
                    f"cycle {node.label(state_names)} has exit height "
                    f"{node.exit_height} strictly between the threshold and 1"
                )
            if node.is_singleton and node.mixing_distribution is None:
                mu = np.zeros(n)
                mu[node.member_states[0]] = 1.0
                node = CycleNode(
                    member_states=node.member_states,
                    children=node.children,
                    exit_height=node.exit_height,
                    exit_rate=node.exit_rate,
                    exit_distribution=node.exit_distribution,
                    mixing_height=node.mixing_height,
                    mixing_distribution=mu,
                    graded=node.graded,
                    exit_intensity=node.exit_intensity,
                )
            relevant.append(node)
            classes.append("recurrent" if node.exit_height == 1 else "absorbing")
        else:
            aggregates.append(node)
            transient.extend(node.member_states)

    mix = np.zeros((len(relevant), n))
    for idx, node in enumerate(relevant):
        mix[idx] = node.mixing_distribution
    return LimitDecomposition(
        states=state_names,
        denominator=denominator,
        forest=forest,
        relevant=tuple(relevant),
        classes=tuple(classes),
        transient=tuple(sorted(transient)),
        transient_aggregates=tuple(aggregates),
        threshold=threshold,
        mix=mix,
    )


def entrance_law(decomposition: LimitDecomposition, chain: LeadingTermChain) -> np.ndarray:
    """Probabilities Phi(k, l) of funnelling from k into relevant cycle l.

    States inside a relevant cycle map to it with probability one; each
    transient aggregate routes through its exit distribution, giving a
    small linear hitting system over the aggregates.
    """
    n = chain.n_states
    n_rel = decomposition.n_relevant
    phi = np.zeros((n, n_rel))
    for idx, node in enumerate(decomposition.relevant):
        for k in node.member_states:
            phi[k, idx] = 1.0

    aggs = decomposition.transient_aggregates
    if aggs:
        m = len(aggs)
        routing = np.zeros((m, m))
        into = np.zeros((m, n_rel))
        for i, agg in enumerate(aggs):
            p = agg.exit_distribution
            if p is None:
                raise ChainError(
                    f"transient aggregate {agg.label(chain.states)} has no exit"
                )
            for j, agg2 in enumerate(aggs):
                routing[i, j] = p[list(agg2.member_states)].sum()
            for idx, node in enumerate(decomposition.relevant):
                into[i, idx] = p[list(node.member_states)].sum()
        try:
            rows = np.linalg.solve(np.eye(m) - routing, into)
        except np.linalg.LinAlgError as exc:
            raise ChainError("transient hitting system is singular") from exc
        for i, agg in enumerate(aggs):
            for k in agg.member_states:
                phi[k] = rows[i]
    decomposition.phi = phi
    return phi


def generator(decomposition: LimitDecomposition, chain: LeadingTermChain) -> np.ndarray:
    """Inter-cycle jump rates A(l, l2) = r_l * sum_k p_l(k) Phi(k, l2).

    Rows of absorbing cycles vanish; the diagonal makes rows sum to zero.
    """
    if decomposition.phi is None:
        entrance_law(decomposition, chain)
    phi = decomposition.phi
    n_rel = decomposition.n_relevant
    a = np.zeros((n_rel, n_rel))
    for idx, node in enumerate(decomposition.relevant):
        if decomposition.classes[idx] != "recurrent":
            continue
        rate = node.exit_rate
        p = node.exit_distribution
        for jdx in range(n_rel):
            if jdx == idx:
                continue
            a[idx, jdx] = rate * float(p @ phi[:, jdx])
        a[idx, idx] = -a[idx].sum()
    decomposition.gen = a
    return a


def decompose(chain: LeadingTermChain) -> LimitDecomposition:
    """Full pipeline: cycle tree, classification, entrance law, generator."""
    forest = build_cycle_tree(chain)
    dec = classify_relevant(forest, chain.denominator, chain.states)
    entrance_law(dec, chain)
    generator(dec, chain)
    return dec


@dataclass(frozen=True)
class PositionMatrix:
    """Limiting distribution of the state at the fraction t of the game."""

    t: float
    matrix: np.ndarray


def position_matrix(decomposition: LimitDecomposition, t: float) -> PositionMatrix:
    """pi_t = Phi exp(-ln(1-t) A) M for t in [0, 1)."""
    if not (0.0 <= t < 1.0):
        raise ValueError(f"t {t} outside [0, 1)")
    if decomposition.phi is None or decomposition.gen is None:
        raise ChainError("decomposition is missing entrance law or generator")
    horizon = -math.log1p(-t)
    kern = expm(horizon * decomposition.gen)
    mat = decomposition.phi @ kern @ decomposition.mix
    return PositionMatrix(float(t), mat)


def limit_occupation(decomposition: LimitDecomposition) -> np.ndarray:
    """Integral of pi_t over the game: Pi = Phi (I - A)^(-1) M."""
    if decomposition.phi is None or decomposition.gen is None:
        raise ChainError("decomposition is missing entrance law or generator")
    n_rel = decomposition.n_relevant
    core = np.linalg.solve(np.eye(n_rel) - decomposition.gen, decomposition.mix)
    return decomposition.phi @ core


# ---------------------------------------------------------------------------
# numeric substrate: instantiation at a fixed lambda and exact linear algebra

def instantiate(chain: LeadingTermChain, lam: float) -> np.ndarray:
    """Stochastic matrix with entries c*lam**e; self-loops absorb residuals.

    Order-0 coefficients of a row (with the implicit self-loop completing
    them to one) share the mass left over by the positive-exponent entries.

    Raises
    ------
    ChainError
        If some row's positive-exponent entries already exceed mass one.
    """
    if not (0.0 < lam < 1.0):
        raise ChainError(f"lam {lam} outside (0, 1)")
    n = chain.n_states
    q = np.zeros((n, n))
    for k in range(n):
        row = chain.row(k)
        vanishing = 0.0
        zero_weights = {}
        for k2, (c, e) in row.items():
            if e == 0:
                zero_weights[k2] = c
            else:
                q[k, k2] += c * lam ** float(e)
                vanishing += c * lam ** float(e)
        residual = 1.0 - vanishing
        if residual <= 0.0:
            raise ChainError(
                f"lam {lam} too large: row {chain.states[k]} has vanishing "
                f"mass {vanishing:.6g} >= 1"
            )
        implicit = max(0.0, 1.0 - sum(zero_weights.values()))
        if implicit > 0:
            zero_weights[k] = zero_weights.get(k, 0.0) + implicit
        total0 = sum(zero_weights.values())
        for k2, w in zero_weights.items():
            q[k, k2] += residual * w / total0
        # absorb the rounding ulps into the largest entry so the row sums
        # to exactly 1.0; matrix powers over ~1e20 stages would otherwise
        # amplify a one-ulp surplus beyond any tolerance
        for _ in range(3):
            excess = math.fsum(q[k]) - 1.0
            if excess == 0.0:
                break
            q[k, int(np.argmax(q[k]))] -= excess
    return q


class ChainOracle:
    """Exact linear-algebra answers about the chain instantiated at ``lam``.

    No asymptotics: every query is an absorbing-chain solve, a resolvent or
    a matrix power on the fixed stochastic matrix.
    """

    def __init__(self, chain: LeadingTermChain, lam: float):
        self.chain = chain
        self.lam = float(lam)
        self.q = instantiate(chain, lam)

    def _split(self, members):
        inside = sorted(members)
        outside = [k for k in range(self.chain.n_states) if k not in set(inside)]
        t = self.q[np.ix_(inside, inside)]
        b = self.q[np.ix_(inside, outside)]
        return inside, outside, t, b

    def exit_distribution(self, members, start: int) -> np.ndarray:
        """Law of the state at the first exit from ``members``.

        The hitting system is solved in exact rational arithmetic (floats
        are exact binary rationals), since exits can sit twenty orders of
        magnitude below the holding probabilities and no floating-point
        factorization of I - T survives that.
        """
        inside, outside, t, b = self._split(members)
        if not outside:
            raise ChainError("the whole state space cannot be exited")
        n = len(inside)
        rows = []
        for i in range(n):
            # row-normalize in exact arithmetic: the float entries sum to
            # 1 only up to an ulp, and that phantom leak would dominate
            # exits twenty orders of magnitude below the holding mass
            t_rat = [Fraction(float(x)) for x in t[i]]
            b_rat = [Fraction(float(x)) for x in b[i]]
            total = sum(t_rat) + sum(b_rat)
            if total <= 0:
                raise ChainError("empty transition row")
            t_rat = [x / total for x in t_rat]
            b_rat = [x / total for x in b_rat]
            rows.append(
                [
                    (Fraction(1) if i == j else Fraction(0)) - t_rat[j]
                    for j in range(n)
                ]
                + b_rat
            )
        for col in range(n):
            pivot = max(range(col, n), key=lambda r: abs(rows[r][col]))
            if rows[pivot][col] == 0:
                raise ChainError("the queried set cannot be exited")
            rows[col], rows[pivot] = rows[pivot], rows[col]
            inv = 1 / rows[col][col]
            rows[col] = [x * inv for x in rows[col]]
            for r in range(n):
                if r != col and rows[r][col] != 0:
                    f = rows[r][col]
                    rows[r] = [x - f * y for x, y in zip(rows[r], rows[col])]
        out = np.zeros(self.chain.n_states)
        sol = rows[inside.index(start)][n:]
        for pos, k in enumerate(outside):
            out[k] = float(sol[pos])
        return out

    def discounted_occupation(self, start: int, discount: float | None = None) -> np.ndarray:
        """Expected discounted visit frequencies from ``start``."""
        d = self.lam if discount is None else float(discount)
        n = self.chain.n_states
        res = np.linalg.solve(np.eye(n) - (1.0 - d) * self.q, np.eye(n))
        return d * res[start]

    def survival(self, members, start: int, stages: int) -> float:
        """P(the chain stays inside ``members`` for ``stages`` steps)."""
        inside, _, t, _ = self._split(members)
        alive = np.linalg.matrix_power(t, int(stages)) @ np.ones(len(inside))
        return float(alive[inside.index(start)])

    def occupation_before_exit(self, members, start: int, discount: float) -> np.ndarray:
        """Normalized discounted visit frequencies before leaving ``members``."""
        inside, _, t, _ = self._split(members)
        res = np.linalg.solve(np.eye(len(inside)) - (1.0 - discount) * t,
                              np.eye(len(inside)))
        w = discount * res[inside.index(start)]
        out = np.zeros(self.chain.n_states)
        for pos, k in enumerate(inside):
            out[k] = w[pos]
        total = out.sum()
        if total <= 0:
            raise ChainError("no occupation mass before exit")
        return out / total

    def position(self, start: int, stage: int) -> np.ndarray:
        """Law of the state at stage ``stage`` (stage 1 is the start)."""
        if stage < 1:
            raise ValueError("stage must be >= 1")
        row = np.zeros(self.chain.n_states)
        row[start] = 1.0
        return row @ np.linalg.matrix_power(self.q, int(stage) - 1)

    def position_before_exit(self, members, start: int, stage: int) -> np.ndarray:
        """Law of the state at ``stage`` conditioned on staying in ``members``.

        Powers of the restricted block involve no cancellation, and only
        the direction of the row matters, so every squaring is renormalized
        (float row sums of 1 +- eps would otherwise blow up at depths like
        2**80).  At a stage between the mixing and exit scales this is the
        mixing distribution.
        """
        inside, _, t, _ = self._split(members)
        row = np.zeros(len(inside))
        row[inside.index(start)] = 1.0
        n = int(stage) - 1
        base = t.copy()
        while n > 0:
            if n & 1:
                row = row @ base
                total = row.sum()
                if total <= 0:
                    raise ChainError("no survival mass at the requested stage")
                row /= total
            n >>= 1
            if n:
                base = base @ base
                base /= max(base.max(), 1e-300)
        total = row.sum()
        out = np.zeros(self.chain.n_states)
        for pos, k in enumerate(inside):
            out[k] = row[pos] / total
        return out


# ---------------------------------------------------------------------------
# cycle table report

def _fmt_height(h) -> str:
    if h == EXIT_NEVER:
        return "inf"
    return str(h)


def _fmt_num(x) -> str:
    return format(float(x), ".10g")


def _fmt_dist(d) -> str:
    if d is None:
        return "-"
    return "(" + ",".join(_fmt_num(x) for x in d) + ")"


def cycle_table_rows(chain: LeadingTermChain, decomposition: LimitDecomposition | None = None):
    """Rows of the cycle-table report, one per cycle of the hierarchy.

    Columns: cycle, exit_height, exit_rate, exit_distribution,
    mixing_height, mixing_distribution, classification.
    """
    forest = decomposition.forest if decomposition is not None else build_cycle_tree(chain)
    tags = {}
    if decomposition is not None:
        for node, cls in zip(decomposition.relevant, decomposition.classes):
            tags[node.member_states] = cls
        for agg in decomposition.transient_aggregates:
            tags[agg.member_states] = "transient"
    rows = []
    for node in iter_nodes(forest):
        rows.append(
            (
                node.label(chain.states),
                _fmt_height(node.exit_height),
                _fmt_num(node.exit_rate) if node.exit_rate is not None else "-",
                _fmt_dist(node.exit_distribution),
                _fmt_height(node.mixing_height) if node.mixing_height is not None else "-",
                _fmt_dist(node.mixing_distribution),
                tags.get(node.member_states, ""),
            )
        )
    return rows


CYCLE_TABLE_HEADER = (
    "cycle",
    "exit_height",
    "exit_rate",
    "exit_distribution",
    "mixing_height",
    "mixing_distribution",
    "classification",
)
