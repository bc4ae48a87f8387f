"""Exception types shared across the package."""


class CoplanError(Exception):
    """Base class for all package-specific errors."""


class ModelValidationError(CoplanError):
    """A model kernel or distribution failed a stochasticity/shape check."""


class SchemaError(CoplanError):
    """A serialized artifact is malformed or has an unsupported version."""


class ZeroProbabilityObservation(CoplanError):
    """A filtering step conditioned on an observation with zero likelihood."""


class AllActionsPruned(CoplanError):
    """The action threshold removed every action from a marginal."""


class DegenerateTask(CoplanError):
    """A grid task configuration describes an unsolvable or empty task."""


class InstanceTooLarge(CoplanError):
    """An exact enumeration would exceed its work guard."""


class CompilationLimitExceeded(CoplanError):
    """The reachable extended-state closure exceeded its cap."""


class FscStructureError(CoplanError):
    """A controller is structurally unsound (missing edge, bad distribution)."""
