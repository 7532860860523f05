"""Exception hierarchy."""


class ZabsError(Exception):
    """Base class for package errors."""


class DomainError(ZabsError, ValueError):
    """An argument lies outside the domain of a function or distribution."""


class ConfigError(ZabsError, ValueError):
    """Malformed run configuration or environment setting."""


class ModelSpecError(ZabsError, ValueError):
    """The model specification is inconsistent with itself or the data."""


class DataError(ZabsError, ValueError):
    """The dataset cannot be used (missing cells, negative responses, ...)."""


class RankDeficientError(ZabsError):
    def __init__(self, block: str, rank: int, ncol: int):
        self.block = block
        super().__init__(
            f"derivative matrix for the {block} block is rank deficient "
            f"(numerical rank {rank} < {ncol} columns)"
        )


class ConvergenceError(ZabsError):
    """Fisher scoring did not converge; ``trace`` holds the iteration history."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class QuadratureError(ZabsError):
    pass


class SingularHessianError(ZabsError):
    pass
