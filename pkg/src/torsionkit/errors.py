"""Exception hierarchy shared by every module."""

from __future__ import annotations


class TorsionError(Exception):
    """Base class for all errors raised by torsionkit."""


class DimensionMismatch(TorsionError):
    pass


class InvalidGram(TorsionError):
    pass


class SingularMap(TorsionError):
    pass


class NotNested(TorsionError):
    pass


class NotAcyclic(TorsionError):
    pass


class NotEquivalence(TorsionError):
    pass


class NotExact(TorsionError):
    pass


class NotChainMap(TorsionError):
    pass


class InvalidFiltration(TorsionError):
    pass


class NotSquareZero(TorsionError):
    pass


class BoundaryNotSquareZero(NotSquareZero):
    pass


class SingularInduced(TorsionError):
    pass


class NotTwoRow(TorsionError):
    pass


class InvalidModel(TorsionError):
    pass


class ParseError(TorsionError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class NotUnimodular(TorsionError):
    pass


class NotUnimodularWarning(UserWarning):
    """The alternating monodromy determinant differs from 1."""
