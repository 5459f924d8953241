"""Exception types shared across modules; the CLI maps them to exit codes."""


class DataError(ValueError):
    """Input data is missing, malformed, or cannot support the requested protocol."""


class CohortFormatError(DataError):
    pass


class CohortValidationError(DataError):
    pass


class StratificationError(DataError):
    pass


class ExperimentError(RuntimeError):
    """A training or inference job failed; carries the fold that failed."""

    def __init__(self, message: str, fold: int | None = None):
        super().__init__(message if fold is None else f"fold {fold}: {message}")
        self.fold = fold
