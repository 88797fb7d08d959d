"""Exception hierarchy for couplesolve.

Validation failures (bad input data, broken preconditions) are distinct from
solver failures (degenerate or unbounded subproblems, infeasible instances) so
the CLI can map them to different exit codes.
"""


class CoupleSolveError(Exception):
    """Base class for all couplesolve errors."""


class ValidationError(CoupleSolveError):
    """Input data violates a documented precondition or schema."""


class DimensionMismatchError(ValidationError):
    """Array shapes disagree with the declared agent/constraint dimensions."""


class DisconnectedSubgraphError(ValidationError):
    """A constraint's participant set induces a disconnected subgraph."""


class RankDeficiencyError(ValidationError):
    """An agent's stacked constraint rows are not linearly independent."""


class WeightMatrixError(ValidationError):
    """A consensus weight matrix violates its structural invariants."""


class ConfigError(ValidationError):
    """Bad CLI/config input: unknown keys, out-of-range values."""


class SolverError(CoupleSolveError):
    """A subproblem or the centralized solve could not be completed."""


class UnboundedSubproblemError(SolverError):
    """Objective curvature vanishes along a feasible ray: no minimizer."""


class DegenerateSubproblemError(SolverError):
    """Active-set iteration cycled or exceeded its iteration cap."""


class InfeasibleProblemError(SolverError):
    """No point satisfies the stacked constraints (Phase-1 search failed)."""


class LocalityViolationError(CoupleSolveError):
    """An agent read a value outside its permitted constraint neighborhood."""
