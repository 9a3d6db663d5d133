#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Exceptions raised by the cocycle lab

Every error derives from ValueError so callers that only guard against
bad input keep working. The CLI maps each class to an exit code.
"""


class CocycleLabError(ValueError):
    """Base class for all lab errors."""
    exit_code = 2


class DomainError(CocycleLabError):
    """An input lies outside the domain of an operation."""


class ValidationError(CocycleLabError):
    """A configuration field failed validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class PrecisionError(CocycleLabError):
    """A query exceeds the precision budget of the data it uses."""
    exit_code = 3


class BudgetExhausted(CocycleLabError):
    """A computation ran out of budget; partial results are attached."""
    exit_code = 3

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class GateError(CocycleLabError):
    """The KAM smallness gate is violated."""


class MisuseError(CocycleLabError):
    """An operation was called in a situation it does not handle."""


class CertificateError(CocycleLabError):
    """A rotation-number certificate could not be established."""


class UnsupportedError(CocycleLabError):
    """The input is valid but the operation does not support it."""


class ConsistencyError(CocycleLabError):
    """Internal numerical consistency failed."""
    exit_code = 3


class BoundViolation(CocycleLabError):
    """A slack-adjusted bound was violated in strict mode."""
    exit_code = 4

    def __init__(self, name: str, measured: float, bound: float):
        self.name = name
        self.measured = measured
        self.bound = bound
        super().__init__(f"bound {name} violated: measured {measured:.6e} > bound {bound:.6e}")
