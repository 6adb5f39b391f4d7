"""Numerical recovery of leading fractional-power terms of lambda-families.

A bounded semi-algebraic family f(lambda) behaves like c*lambda**(m/N) near
0.  Given samples on a geometric grid, the leading exponent is estimated by
least squares in log-log coordinates on the asymptotic tail and snapped to
a nearby rational with small denominator; the coefficient follows from the
intercept.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import FitError
from .games import StationaryProfile

DEFAULT_MAX_DENOMINATOR = 12
ZERO_ATOL = 1e-14


@dataclass(frozen=True)
class LeadingTermFit:
    """Leading term c*lambda**exponent of a sampled scalar family.

    ``fit_error`` is the largest relative deviation of the fitted term from
    the samples on the tail grid used for the regression; ``lambda_max`` is
    the largest tail grid point, below which the fit claims validity.  A
    family that vanishes identically is the designated zero fit
    (coefficient 0, exponent 0).
    """

    coefficient: float
    exponent: Fraction
    fit_error: float
    denominator: int
    lambda_max: float = float("nan")

    @property
    def is_zero(self) -> bool:
        return self.coefficient == 0.0

    def __call__(self, lam: float) -> float:
        return self.coefficient * lam ** float(self.exponent)

    @classmethod
    def zero(cls) -> "LeadingTermFit":
        return cls(0.0, Fraction(0), 0.0, 1)


def _ratio_limit(ratios: np.ndarray) -> float:
    """Limit of a positive sequence with one geometric correction term.

    Applies one Aitken step when the successive differences decay cleanly;
    otherwise returns the geometric mean of the last two entries.
    """
    r = np.asarray(ratios, dtype=float)
    if len(r) < 3:
        return float(r[-1])
    d = np.diff(r)
    tail = d[-2:]
    if np.all(np.abs(tail) > 0) and tail[0] * tail[1] > 0:
        q = tail[1] / tail[0]
        if 1e-6 < abs(q) < 0.9:
            return float(r[-1] + tail[1] * q / (1.0 - q))
    return float(np.sqrt(r[-1] * r[-2]))


def snap_to_rational(slope: float, max_denominator: int) -> Fraction | None:
    """Rational with the smallest denominator <= max_denominator inside
    slope +- 1/(4*max_denominator), or None if the window contains none."""
    window = 1.0 / (4.0 * max_denominator)
    for den in range(1, max_denominator + 1):
        num = round(slope * den)
        if abs(num / den - slope) <= window:
            return Fraction(num, den)
    return None


def fit_leading_terms(
    samples,
    max_denominator: int = DEFAULT_MAX_DENOMINATOR,
    reject_error: float = 0.5,
) -> LeadingTermFit:
    """Fit the leading Puiseux term of ``samples`` = [(lambda, value), ...].

    Requires at least 4 samples on a decreasing geometric grid.  The
    regression uses the last half of the grid (at least 4 points).  Values
    must keep a constant sign on that tail, or vanish identically there
    (zero fit).  A mixed-sign tail, a negative snapped exponent, or a tail
    deviating from the fitted power by more than ``reject_error`` relative
    is rejected.

    Raises
    ------
    FitError
        If the tail is inconsistent with a single leading term.
    """
    pts = [(float(l), float(v)) for l, v in samples]
    if len(pts) < 4:
        raise FitError(f"need at least 4 samples, got {len(pts)}")
    lams = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])
    if np.any(lams <= 0) or np.any(np.diff(lams) >= 0):
        raise FitError("sample grid must be strictly decreasing and positive")

    n_tail = max(4, -(-len(pts) // 2))  # ceil(n/2), at least 4
    n_tail = min(n_tail, len(pts))
    tl, tv = lams[-n_tail:], vals[-n_tail:]

    if np.all(np.abs(tv) <= ZERO_ATOL):
        return LeadingTermFit(0.0, Fraction(0), 0.0, 1, float(tl[0]))
    signs = np.sign(tv[np.abs(tv) > ZERO_ATOL])
    if signs.min() != signs.max():
        raise FitError("sign change on the sample tail")
    if np.any(np.abs(tv) <= ZERO_ATOL):
        raise FitError("tail mixes zero and nonzero values")
    sign = float(signs[0])

    logl = np.log(tl)
    logv = np.log(np.abs(tv))
    slope, intercept = np.polyfit(logl, logv, 1)

    exponent = snap_to_rational(float(slope), max_denominator)
    if exponent is None:
        exponent = Fraction(float(slope)).limit_denominator(max_denominator)
    if exponent < 0:
        raise FitError(f"fitted exponent {exponent} is negative (growth near 0)")

    # with the exponent pinned, the ratio family v/lam**e tends to the
    # coefficient; extrapolating its geometric correction removes the bias
    # the largest tail points would otherwise leave in a plain average
    ratios = np.abs(tv) / tl ** float(exponent)
    coefficient = sign * _ratio_limit(ratios)

    fitted = coefficient * tl ** float(exponent)
    fit_error = float(np.max(np.abs(fitted - tv) / np.abs(tv)))
    if fit_error > reject_error:
        raise FitError(
            f"tail deviates from c*lam^{exponent} by {fit_error:.3g} relative"
        )
    return LeadingTermFit(
        coefficient, exponent, fit_error, exponent.denominator, float(tl[0])
    )


@dataclass(frozen=True)
class ProfileFits:
    """Per-(state, action) leading-term fits of a stationary profile family.

    ``x1[k][i]`` is the fit of lambda -> x1_lambda(k, i); zero fits mark
    actions whose probability vanishes identically.
    """

    states: tuple[str, ...]
    actions1: tuple[str, ...]
    actions2: tuple[str, ...]
    x1: tuple[tuple[LeadingTermFit, ...], ...]
    x2: tuple[tuple[LeadingTermFit, ...], ...]


def fit_profile(spec, solutions) -> ProfileFits:
    """Fit every strategy entry of a list of DiscountedSolution."""
    lams = [s.lam for s in solutions]
    first = solutions[0]
    k_n, i_n = first.profile.x1.shape
    j_n = first.profile.x2.shape[1]

    def fit_entry(series):
        if all(abs(x) <= ZERO_ATOL for x in series[-max(4, len(series) // 2):]):
            return LeadingTermFit.zero()
        return fit_leading_terms(list(zip(lams, series)))

    x1 = tuple(
        tuple(
            fit_entry([s.profile.x1[k, i] for s in solutions]) for i in range(i_n)
        )
        for k in range(k_n)
    )
    x2 = tuple(
        tuple(
            fit_entry([s.profile.x2[k, j] for s in solutions]) for j in range(j_n)
        )
        for k in range(k_n)
    )
    return ProfileFits(spec.states, spec.actions1, spec.actions2, x1, x2)


def truncate_profile(fits: ProfileFits, lam: float) -> StationaryProfile:
    """Stationary profile proportional to the fitted leading terms at ``lam``.

    Each entry is c*lam**e for its fit (0 for zero fits), normalized per
    state.  Entries below 1e-14 after normalization are structural zeros.

    Raises
    ------
    FitError
        If some state has no positive leading term for one of the players.
    """
    def build(table):
        rows = []
        for k, row in enumerate(table):
            w = np.array([f(lam) for f in row])
            if np.any(w < 0):
                raise FitError(f"negative fitted weight in state {k}")
            total = w.sum()
            if total <= 0:
                raise FitError(f"all-zero fitted row for state {k}")
            w = w / total
            w[w < ZERO_ATOL] = 0.0
            rows.append(w / w.sum())
        return np.array(rows)

    return StationaryProfile(build(fits.x1), build(fits.x2))
