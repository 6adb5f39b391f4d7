from fractions import Fraction

import numpy as np
import pytest

from dglab.errors import FitError
from dglab.puiseux import (
    LeadingTermFit,
    ProfileFits,
    fit_leading_terms,
    snap_to_rational,
    truncate_profile,
)

GRID = [10.0**-k for k in range(2, 8)]


def test_constant_family():
    fit = fit_leading_terms([(l, 0.5) for l in GRID])
    assert fit.coefficient == pytest.approx(0.5, abs=1e-12)
    assert fit.exponent == 0
    assert fit.fit_error <= 1e-12


def test_lambda_over_one_plus_lambda():
    fit = fit_leading_terms([(l, l / (1 + l)) for l in GRID])
    assert fit.coefficient == pytest.approx(1.0, rel=1e-6)
    assert fit.exponent == 1
    assert fit.fit_error <= 1e-2


def test_sqrt_family_with_negative_sign():
    fit = fit_leading_terms([(l, -2.0 * np.sqrt(l)) for l in GRID])
    assert fit.exponent == Fraction(1, 2)
    assert fit.coefficient == pytest.approx(-2.0, rel=1e-9)


def test_zero_family_sentinel():
    fit = fit_leading_terms([(l, 0.0) for l in GRID])
    assert fit.is_zero
    assert fit.exponent == 0


def test_noise_recovery_invariant():
    # multiplicative noise <= 1e-6 must leave the snapped exponent exact
    # and the coefficient within 1e-3 relative
    rng = np.random.default_rng(23)
    for _ in range(25):
        c = rng.uniform(0.2, 5.0)
        den = int(rng.choice([1, 2, 3, 4, 6]))
        e = Fraction(int(rng.integers(0, den + den // 2 + 1)), den)
        noise = 1 + 1e-6 * rng.uniform(-1, 1, len(GRID))
        samples = [(l, c * l ** float(e) * n) for l, n in zip(GRID, noise)]
        fit = fit_leading_terms(samples)
        assert fit.exponent == e
        assert fit.coefficient == pytest.approx(c, rel=1e-3)


def test_rejects_sign_change():
    values = [1e-3, 1e-4, 1e-5, -1e-6, 1e-7, -1e-8]
    with pytest.raises(FitError):
        fit_leading_terms(list(zip(GRID, values)))


def test_rejects_growth_towards_zero():
    with pytest.raises(FitError):
        fit_leading_terms([(l, 1.0 / l) for l in GRID])


def test_rejects_log_periodic_wobble():
    vals = [l * (2 + 1.8 * np.cos(4 * np.log(l))) for l in GRID]
    with pytest.raises(FitError):
        fit_leading_terms(list(zip(GRID, vals)))


def test_requires_enough_samples():
    with pytest.raises(FitError):
        fit_leading_terms([(0.1, 1.0), (0.01, 1.0), (0.001, 1.0)])


def test_requires_decreasing_grid():
    with pytest.raises(FitError):
        fit_leading_terms([(l, l) for l in reversed(GRID)])


def test_snap_to_rational():
    assert snap_to_rational(0.5002, 12) == Fraction(1, 2)
    assert snap_to_rational(0.3337, 12) == Fraction(1, 3)
    assert snap_to_rational(1.0, 12) == Fraction(1)
    # smallest denominator inside the window wins: 1/10 beats 1/12
    assert snap_to_rational(0.0842, 12) == Fraction(1, 10)
    # prefers the smallest denominator inside the window
    assert snap_to_rational(0.51, 12) == Fraction(1, 2)


def test_fit_error_reported_on_tail():
    fit = fit_leading_terms([(l, l * (1 + 0.05 * l)) for l in GRID])
    assert fit.exponent == 1
    assert 0 <= fit.fit_error < 1e-4


def _fits(table):
    return tuple(
        tuple(
            LeadingTermFit(c, Fraction(e), 0.0, 1)
            if (c, e) != (0, 0)
            else LeadingTermFit.zero()
            for (c, e) in row
        )
        for row in table
    )


def test_truncate_single_action():
    fits = ProfileFits(
        ("s",), ("only",), ("only",), _fits([[(1.0, 0)]]), _fits([[(1.0, 0)]])
    )
    profile = truncate_profile(fits, 0.3)
    assert profile.x1[0, 0] == 1.0


def test_truncate_big_match_weights():
    # by hand: weights (lam, 1) normalize to (lam, 1)/(1+lam) at lam = 0.01
    fits = ProfileFits(
        ("k",),
        ("T", "B"),
        ("L", "R"),
        _fits([[(1.0, 1), (1.0, 0)]]),
        _fits([[(0.5, 0), (0.5, 0)]]),
    )
    profile = truncate_profile(fits, 0.01)
    assert profile.x1[0, 0] == pytest.approx(0.01 / 1.01, abs=1e-15)
    assert profile.x1[0, 1] == pytest.approx(1.0 / 1.01, abs=1e-15)
    assert np.allclose(profile.x2[0], [0.5, 0.5])


def test_truncate_kohlberg_weights():
    # weights (1, lam**0.5) at lam = 1e-4 normalize to (1, 0.01)/1.01
    fits = ProfileFits(
        ("k",),
        ("T", "B"),
        ("L", "R"),
        _fits([[(1.0, 0), (1.0, Fraction(1, 2))]]),
        _fits([[(1.0, 0), (0, 0)]]),
    )
    profile = truncate_profile(fits, 1e-4)
    assert profile.x1[0, 1] == pytest.approx(0.01 / 1.01, abs=1e-15)
    assert profile.x2[0, 0] == 1.0


def test_truncate_all_zero_row_raises():
    fits = ProfileFits(
        ("s",), ("a", "b"), ("c",), _fits([[(0, 0), (0, 0)]]), _fits([[(1.0, 0)]])
    )
    with pytest.raises(FitError):
        truncate_profile(fits, 0.1)


def test_truncated_ratios_tend_to_one():
    # x(lam) = (lam/(1+lam), 1/(1+lam)) has leading terms (lam, 1);
    # the truncation ratio x~/x tends to 1 along the grid
    fits = ProfileFits(
        ("k",),
        ("T", "B"),
        ("L",),
        _fits([[(1.0, 1), (1.0, 0)]]),
        _fits([[(1.0, 0)]]),
    )
    for lam in (1e-2, 1e-4, 1e-6):
        profile = truncate_profile(fits, lam)
        exact = np.array([lam / (1 + lam), 1 / (1 + lam)])
        ratios = profile.x1[0] / exact
        assert np.max(np.abs(ratios - 1)) <= 2 * lam
