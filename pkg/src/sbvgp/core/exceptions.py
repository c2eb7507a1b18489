"""Exception hierarchy for the sbvgp package."""

from typing import Optional


class SBVError(Exception):
    """Base class for all package errors."""


class UsageError(SBVError, ValueError):
    """A precondition or configuration value was violated."""


class DataFormatError(UsageError):
    """Malformed CSV or report input."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(SBVError):
    """A Cholesky factorization failed.

    Attributes:
        pivot: 0-based index of the leading minor that was not positive definite
        block: index of the Vecchia block being factorized, if any
        stage: ``"conditioning"`` or ``"block"`` for blockwise likelihoods
    """

    def __init__(
        self,
        message: str,
        pivot: Optional[int] = None,
        block: Optional[int] = None,
        stage: Optional[str] = None,
    ) -> None:
        self.pivot = pivot
        self.block = block
        self.stage = stage
        details = []
        if block is not None:
            details.append(f"block {block}")
        if stage is not None:
            details.append(f"stage {stage}")
        if pivot is not None:
            details.append(f"pivot {pivot}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
