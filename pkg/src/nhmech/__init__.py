"""Discrete nonholonomic mechanics on Lie groupoids.

The package solves discrete nonholonomic Euler-Lagrange equations step by
step on four groupoid backends (pair, Lie group, action, Atiyah), with
regularity/reversibility/momentum diagnostics and a library of classical
example systems.
"""

from .errors import (
    ChartDomainError,
    ChartInversionFailed,
    ConfigError,
    ConstraintViolationError,
    NhError,
    NoConvergenceError,
    NotComposableError,
    NotInConstraintCone,
    RankDeficientAnnihilator,
    SingularError,
)

__all__ = [
    "NhError",
    "NotComposableError",
    "ChartDomainError",
    "SingularError",
    "NoConvergenceError",
    "ConstraintViolationError",
    "NotInConstraintCone",
    "RankDeficientAnnihilator",
    "ChartInversionFailed",
    "ConfigError",
]

__version__ = "0.1.0"
