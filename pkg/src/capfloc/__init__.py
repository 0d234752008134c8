"""LP-based approximation algorithms for capacitated facility location
with hard capacities, plus the supporting LP/flow machinery, an exact
brute-force oracle, and a benchmark harness."""

__version__ = "0.1.0"

from .errors import (CapflocError, ContractError, InfeasibleError,
                     InvariantViolation, ParseError, SolverFailure)
from .instances import CflInstance, FractionalSolution, IntegralSolution

__all__ = [
    "CapflocError", "ContractError", "InfeasibleError", "InvariantViolation",
    "ParseError", "SolverFailure",
    "CflInstance", "FractionalSolution", "IntegralSolution",
]
