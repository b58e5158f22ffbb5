class NavigationError(ValueError):
    """
    Root of every error raised by the navigation engine.

    Subclasses ValueError so the API layer can translate any of them into a
    400 response the same way it handles plain validation errors.
    """


class DimensionError(NavigationError):
    """Operand shapes do not agree."""


class DomainError(NavigationError):
    """Input lies outside the mathematical domain of an operation."""


class ContractError(NavigationError):
    """A pre- or postcondition of an operation was violated."""


class OracleError(NavigationError):
    """The verification oracle could not produce a trustworthy answer."""


class InputError(NavigationError):
    """User-supplied data is empty or malformed."""


class CapacityError(NavigationError):
    """Input exceeds a configured capacity limit."""


class ConfigurationError(NavigationError):
    """Configuration values are inconsistent or unknown."""


class TrainingDivergedError(NavigationError):
    """
    A training loss became NaN or infinite.

    Attributes:
        iteration: Training iteration at which the loss diverged.
        batch_seeds: (world seed, episode seed) pairs of the failing batch.
    """

    def __init__(self, iteration: int, batch_seeds: list[tuple[int, int]]):
        self.iteration = iteration
        self.batch_seeds = batch_seeds
        super().__init__(f"Non-finite loss at iteration {iteration}; batch seeds: {batch_seeds}")
