"""Numerical laboratory for discounted zero-sum stochastic games and the
hierarchy-of-cycles analysis of their vanishing-discount limits."""

from .clock import (
    BLambda,
    ClockPoint,
    OccupationMeasure,
    b_lambda,
    check_variational,
    cumulated_payoff,
    cumulated_payoff_vector,
    derivative_check,
    eta,
    h_payoff,
    occupation_measure,
    varphi,
)
from .cycles import (
    ChainOracle,
    CycleNode,
    LeadingTermChain,
    LimitDecomposition,
    PositionMatrix,
    build_cycle_tree,
    classify_relevant,
    decompose,
    dump_chain,
    entrance_law,
    generator,
    instantiate,
    limit_occupation,
    load_chain,
    position_matrix,
    validate_chain,
)
from .errors import ChainError, DglabError, FitError, GridError, SolverError
from .games import (
    GameSpec,
    StationaryProfile,
    dump_game,
    induced_chain,
    load_game,
    uniform_profile,
    validate_game,
)
from .matrix_games import MatrixGameSolution, solve_matrix_game
from .puiseux import (
    LeadingTermFit,
    ProfileFits,
    fit_leading_terms,
    fit_profile,
    truncate_profile,
)
from .report import CheckReport, reports_to_json
from .solve import (
    DiscountedSolution,
    geometric_grid,
    shapley_operator,
    solve_discounted,
    value_curve,
)
from .verify import (
    ProfileLimit,
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

__version__ = "0.1.0"
