"""Exception hierarchy. Every domain error derives from DGLearnError so the CLI
can map it to exit code 1."""


class DGLearnError(Exception):
    kind = "domain"


class DimensionMismatch(DGLearnError, ValueError):
    kind = "dimension_mismatch"


class InvalidGraph(DGLearnError, ValueError):
    kind = "invalid_graph"


class NotGraphRepresentable(DGLearnError, ValueError):
    kind = "not_graph_representable"


class NotAcyclic(DGLearnError, ValueError):
    kind = "not_acyclic"


class IndexOutOfRange(DGLearnError, IndexError):
    kind = "index_out_of_range"


class NotACycle(DGLearnError, ValueError):
    kind = "not_a_cycle"


class NotExchangeable(DGLearnError, ValueError):
    kind = "not_exchangeable"


class NotReducible(DGLearnError, ValueError):
    kind = "not_reducible"


class IllegalTarget(DGLearnError, ValueError):
    kind = "illegal_target"


class SingularSystem(DGLearnError, ArithmeticError):
    kind = "singular_system"


class StabilityRejectionLimit(DGLearnError, RuntimeError):
    kind = "stability_rejection_limit"


class InfeasibleConstraints(DGLearnError, ValueError):
    kind = "infeasible_constraints"


class NotPositiveDefinite(DGLearnError, ValueError):
    kind = "not_positive_definite"


class OptimizationFailed(DGLearnError, RuntimeError):
    kind = "optimization_failed"


class UnstableOptimum(OptimizationFailed):
    kind = "unstable_optimum"


class PreconditionViolated(DGLearnError, ValueError):
    kind = "precondition_violated"


class ParseError(DGLearnError, ValueError):
    kind = "parse"
