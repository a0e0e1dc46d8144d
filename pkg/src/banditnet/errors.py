"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Array shapes do not match the topology they are used with."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (e.g. lied about a loss bound)."""


class ConstructionError(ValueError):
    """A trace, reference policy or learner cannot be built from the given parameters."""


class InvariantFailure(RuntimeError):
    """An internal invariant that should hold by construction was violated."""


class ScenarioError(ValueError):
    """Invalid scenario file or override; the message names the offending key."""
