"""Exception hierarchy and the exit codes the command line maps them to."""

from typing import Any, Dict, Optional

from pydantic import ValidationError

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_NUMERIC = 3


class VCHGCLError(Exception):
    """Base class for every error raised by the package."""


class ContractError(VCHGCLError):
    """A pre-condition or API contract was violated."""


class ShapeError(ContractError):
    """Operand shapes are incompatible."""

    def __init__(self, message: str, *shapes: Any):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class DegenerateInputError(ContractError):
    """Input is well-typed but mathematically degenerate (zero norm, empty box)."""


class NumericError(VCHGCLError):
    """A NaN or infinity was produced or received."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.context = dict(context or {})
        if self.context:
            details = ", ".join(f"{k}={v}" for k, v in self.context.items())
            message = f"{message} ({details})"
        super().__init__(message)


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the process exit code."""
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (ContractError, ValidationError)):
        return EXIT_CONTRACT
    return 1
