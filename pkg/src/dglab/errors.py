"""Exception hierarchy shared by all dglab modules."""


class DglabError(Exception):
    """Base class for all dglab errors."""


class SolverError(DglabError):
    """A matrix-game LP or a fixed-point iteration failed to converge."""

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class FitError(DglabError):
    """A sampled family is inconsistent with a single leading power term."""


class ChainError(DglabError):
    """A leading-term chain is malformed or cannot be instantiated."""


class GridError(DglabError):
    """A discount grid does not satisfy the preconditions of an operation."""
