"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration is malformed or violates a documented constraint."""


class InvariantViolation(RuntimeError):
    """A physical invariant (hermiticity, positivity, trace bounds) failed mid-run."""
