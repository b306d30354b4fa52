"""Exponential Runge-Kutta integration with boundary corrections.

Core pieces: phi-function kernels (`phi`), method tableaux (`tableaux`),
finite-difference semidiscretizations (`spacedisc`), manufactured test
problems (`problems`), boundary trace providers (`traces`), the time
steppers (`steppers`) and the convergence harness (`harness`).
"""

from .phi import (
    LinearOperator,
    KrylovBasis,
    KrylovConvergenceError,
    arnoldi,
    phi_combination,
    phi_dense,
    phi_scalar,
)
from .tableaux import EERKTableau, builtin_tableau

__all__ = [
    "LinearOperator",
    "KrylovBasis",
    "KrylovConvergenceError",
    "arnoldi",
    "phi_combination",
    "phi_dense",
    "phi_scalar",
    "EERKTableau",
    "builtin_tableau",
]
