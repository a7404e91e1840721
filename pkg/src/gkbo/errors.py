"""Exceptions raised by the solvers."""


class NumericError(RuntimeError):
    """A numeric quantity (objective value or position) became non-finite."""


class EmptyLeaderSetError(RuntimeError):
    """An operation that needs at least one leader was given none."""
