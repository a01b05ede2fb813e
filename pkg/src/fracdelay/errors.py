"""Exception types shared across the package."""

from __future__ import annotations


class FracDelayError(Exception):
    """Base class for all package errors."""


class NonFiniteValueError(FracDelayError, ValueError):
    pass


class QuadratureError(FracDelayError, ValueError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateOperatorError(FracDelayError):
    pass


class ConvergenceError(FracDelayError):
    def __init__(self, message: str, history: list[float] | None = None, step: int | None = None):
        super().__init__(message)
        self.history = list(history or [])
        self.step = step


class RhsEvaluationError(FracDelayError):
    def __init__(self, message: str, node: int | None = None, t: float | None = None):
        super().__init__(message)
        self.node = node
        self.t = t


class ConfigError(FracDelayError, ValueError):
    pass


class ExprError(FracDelayError, ValueError):
    """Any failure while parsing or evaluating a model expression."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")
        self.offset = offset
        self.expected = expected


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


class ExprDomainError(ExprError):
    def __init__(self, message: str, subexpr: str):
        super().__init__(f"{message} in '{subexpr}'")
        self.subexpr = subexpr
