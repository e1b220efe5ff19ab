"""Exception hierarchy shared by the simulator modules."""

from __future__ import annotations


class NhqaError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(NhqaError, ValueError):
    """Invalid physical or run parameter."""


class DomainError(ParameterError):
    """Argument outside the domain where a formula is defined."""


class NumericalError(NhqaError, ArithmeticError):
    """A computation could not reach the requested accuracy."""

    def __init__(
        self,
        message: str,
        *,
        location: str | None = None,
        achieved: float | None = None,
    ) -> None:
        super().__init__(message)
        self.location = location
        self.achieved = achieved

    def __str__(self) -> str:
        text = super().__str__()
        if self.location:
            text = f"{text} (at {self.location})"
        if self.achieved is not None:
            text = f"{text}; achieved {self.achieved:.3e}"
        return text


class ExceptionalPointError(NumericalError):
    """Right eigenvectors coalesce, the adiabatic basis is not invertible."""


class ModeFailureError(NumericalError):
    """One or more modes of a sweep failed; `failures` maps p to the message."""

    def __init__(self, failures: dict[int, str]) -> None:
        listed = ", ".join(str(p) for p in sorted(failures))
        super().__init__(f"{len(failures)} mode(s) failed: p = {listed}")
        self.failures = dict(failures)
