"""Exception types shared across the package."""


class BlindIdError(Exception):
    """Base class for errors raised by blindid."""


class IdentifiabilityError(BlindIdError):
    """The data do not determine the dynamics uniquely.

    Raised when the stacked regressor matrix is rank deficient, i.e. the
    persistency-of-excitation rank conditions on the output matrices Z_k
    fail (too few experiments, or degenerate state trajectories).
    """


class BudgetError(BlindIdError):
    """A brute-force enumeration would exceed its subset-evaluation budget."""


class ConfigError(BlindIdError, ValueError):
    """A configuration value is invalid or inconsistent."""
