"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(ValueError):
    """A request needs more idle nodes than the sequence holds."""


class InfeasibleError(RuntimeError):
    """No placement satisfies the constraints of an allocation problem."""


class InvariantError(RuntimeError):
    """A data structure invariant was violated (e.g. overlapping node sets)."""


class ConfigError(ValueError):
    """Invalid experiment or workload configuration."""


class MaskError(RuntimeError):
    """Every action of the policy is masked out."""


class PolicyFileError(RuntimeError):
    """A serialized policy file is malformed or fails its integrity check."""
