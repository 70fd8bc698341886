"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class MatchflowError(Exception):
    exit_code = 1


class SchemaError(MatchflowError):
    """An input file does not parse against its schema."""

    exit_code = 2

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidationError(MatchflowError):
    """An input parses but violates a model invariant (e.g. delta <= 0)."""

    exit_code = 2


class NonConvergence(MatchflowError):
    exit_code = 3


class IterationLimit(NonConvergence):
    def __init__(self, message: str, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class InfeasibleFlows(MatchflowError):
    """Pair flows cannot be sustained by positive stationary masses."""

    exit_code = 3


class CertificateViolation(MatchflowError):
    exit_code = 4
