from __future__ import annotations


class ErgodicHJBError(Exception):
    """Base class for every error raised by the domain layer."""


class InvalidGridError(ErgodicHJBError, ValueError):
    pass


class ProblemValidationError(ErgodicHJBError, ValueError):
    """A problem field is malformed (NaN, wrong shape, negative kernel)."""


class ConstraintViolation(ErgodicHJBError, ValueError):
    """A parameter family's admissibility chain is broken."""

    def __init__(self, inequality: str, detail: str = "") -> None:
        self.inequality = inequality
        msg = f"constraint violated: {inequality}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class QuadratureError(ErgodicHJBError, ValueError):
    pass


class MonotonicityError(ErgodicHJBError, ValueError):
    """An assembled off-diagonal weight came out negative."""

    def __init__(self, node: int, control: str, offset: tuple[float, ...], weight: float) -> None:
        self.node = node
        self.control = control
        self.offset = offset
        self.weight = weight
        super().__init__(
            f"negative off-diagonal weight {weight:.3e} at node {node}, "
            f"control {control!r}, offset {offset}"
        )


class UnknownControlError(ErgodicHJBError, KeyError):
    pass


class MissingLyapunovDataError(ErgodicHJBError, ValueError):
    pass


class OracleSizeError(ErgodicHJBError, ValueError):
    pass


class ContractionError(ErgodicHJBError, ValueError):
    """Damped fixed-point step does not contract; shrink the step."""


class SingularPolicySystemError(ErgodicHJBError, AssertionError):
    pass


class ExpressionError(ErgodicHJBError, ValueError):
    pass
