"""Exception types shared across the package.

Each class maps to one failure category so the CLI can translate them
into stable exit codes.
"""


class ActdiffError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ActdiffError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class DatasetError(ActdiffError, ValueError):
    """Unreadable, truncated, or incompatible dataset file."""


class CheckpointError(ActdiffError, ValueError):
    """Unreadable, truncated, corrupt, or shape-incompatible checkpoint."""


class NumericalFailure(ActdiffError, ArithmeticError):
    """Non-finite value produced during sampling.

    Carries the step index at which the failure was detected.
    """

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class TrainingDivergence(ActdiffError, RuntimeError):
    """Training loss exceeded the divergence threshold for too long."""
