"""Exception types shared across the package."""


class ImpcError(Exception):
    """Base class for all library-specific errors."""


class ShapeError(ImpcError, ValueError):
    """Array arguments have inconsistent or invalid shapes."""


class ContainmentSolverError(ImpcError):
    """The LP behind a containment query failed for numerical reasons.

    Distinct from a clean "not contained" answer: callers must not
    interpret this as either membership verdict.
    """


class RankDeficient(ImpcError):
    """The stacked data matrix does not have full row rank."""

    def __init__(self, rank: int, required: int):
        self.rank = rank
        self.required = required
        super().__init__(
            f"data matrix rank {rank} < required {required}; "
            "the experiment is not exciting enough"
        )


class InconsistentData(ImpcError):
    """The per-row membership polyhedron is empty.

    Happens when the recorded trajectory cannot be explained by any
    parameter matrix under the declared disturbance bound.
    """


class UnboundedParameter(ImpcError):
    """A parameter entry is unbounded on the membership polyhedron."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(
            f"parameter entry ({row}, {col}) is unbounded; "
            "data does not excite this direction"
        )


class EmptyTightened(ImpcError):
    """A tightened constraint set is empty: the tube outgrew the bounds."""


class AllInfeasible(ImpcError):
    """Every candidate horizon produced an infeasible program."""

    def __init__(self, statuses=None):
        self.statuses = dict(statuses or {})
        super().__init__(
            "no feasible horizon: " + ", ".join(
                f"n={n}: {s}" for n, s in sorted(self.statuses.items())
            )
        )


class InfeasibleStart(ImpcError):
    """The very first control step had no feasible horizon."""


class NotContractive(ImpcError):
    """The closed-loop uncertainty description fails the contractivity gate."""


class NoValidTerminalSet(ImpcError):
    """Terminal set synthesis did not produce a certified invariant set."""


class ConfigError(ImpcError, ValueError):
    """An experiment configuration file is malformed."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
