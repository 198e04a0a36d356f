"""Exception hierarchy shared by every module of the toolkit."""

from typing import Optional


class GeometryError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(GeometryError, ValueError):
    """Input that violates an operation's preconditions."""


class WordParseError(InvalidInputError):
    pass


class RankMismatchError(InvalidInputError):
    pass


class InvalidAutomorphismError(InvalidInputError):
    def __init__(self, message: str, generator: Optional[str] = None):
        super().__init__(message)
        self.generator = generator


class TrivialClassError(InvalidInputError):
    pass


class MarkedGraphError(InvalidInputError):
    pass


class SubgroupNotPreservedError(InvalidInputError):
    def __init__(self, message: str = "subgroup not preserved"):
        super().__init__(message)


class NotAFiberPairError(InvalidInputError):
    def __init__(self, message: str = "not a fiber pair"):
        super().__init__(message)


class ConfigError(InvalidInputError):
    """Config problem with an optional source position (1-based)."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class BudgetExceededError(GeometryError):
    """A search ran out of its node or iteration budget."""

    def __init__(self, message: str, budget: int, explored: int = 0):
        super().__init__(f"{message} (budget {budget}, explored {explored})")
        self.budget = budget
        self.explored = explored


class FoldingError(GeometryError):
    pass
