"""Shared exception types. The CLI maps these onto process exit codes."""


class CapflocError(Exception):
    """Base class for all package errors."""


class InfeasibleError(CapflocError):
    """No feasible object exists for the request (instance, generator, assignment)."""


class SolverFailure(CapflocError):
    """Numerical breakdown (e.g. pivot budget exhausted); never a wrong answer."""


class InvariantViolation(CapflocError):
    """A property the algorithm guarantees failed at runtime."""


class ContractError(CapflocError):
    """An operation was called outside its stated precondition."""


class ParseError(CapflocError):
    """Malformed input file."""
