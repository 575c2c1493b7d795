"""Exception types shared across the package."""


class InvalidStateError(ValueError):
    """Input violates a type invariant beyond the construction tolerance."""


class SingularMrpError(ValueError):
    """Operation evaluated at the MRP point at infinity where it is undefined."""


class InvalidInitialStateError(ValueError):
    """Initial condition lies outside both the flow set and the jump set."""


class SimulationBlowupError(RuntimeError):
    """Flow map or state became non-finite.

    Carries the partial arc integrated up to the failure in ``arc``.
    """

    def __init__(self, message, arc=None):
        super().__init__(message)
        self.arc = arc


class OutOfDomainError(ValueError):
    """Hybrid time query outside the domain of the arc."""


class ContractViolationError(RuntimeError):
    """A jump map was applied to a state outside its jump set."""


class StructuralMismatchError(RuntimeError):
    """Two arcs cannot be aligned jump-for-jump."""


class ConfigError(ValueError):
    """Scenario configuration is malformed or violates a parameter constraint."""
