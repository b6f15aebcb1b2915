"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config value is structurally invalid or inconsistent."""


class NoCandidateError(RuntimeError):
    """A decision was requested for a user with no visible satellite."""


class TrainingError(RuntimeError):
    """Training hit a non-recoverable numerical problem."""
