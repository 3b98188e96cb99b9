"""Stationary covariance via the continuous-time Lyapunov equation.

The mean harvested power is the stationary variance of the voltage state,
J = C P C^T, where P solves A P + P A^T + B_xi W B_xi^T = 0 for the stable
closed-loop matrix A. At n = 5 the Kronecker-vectorized dense solve is cheap
and exact to working precision; no Bartels-Stewart machinery is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EPS_STAB, StateSpaceModel

RESIDUAL_RTOL = 1e-8


class UnstableMatrixError(ValueError):
    """A is not Hurwitz; the stationary covariance does not exist."""


class SingularSolveError(np.linalg.LinAlgError):
    """The vectorized Lyapunov system is numerically rank-deficient."""


@dataclass(frozen=True)
class CovarianceResult:
    P: np.ndarray  # stationary covariance, symmetric PSD
    residual_norm: float  # Frobenius norm of A P + P A^T + Q


def solve_stationary_covariance(A: np.ndarray, Q: np.ndarray) -> CovarianceResult:
    """Solve A P + P A^T + Q = 0 for the stationary covariance P.

    A must be Hurwitz and Q symmetric PSD. The returned P is symmetrized and
    checked against the residual tolerance
    ||A P + P A^T + Q||_F <= RESIDUAL_RTOL * (2 ||A||_F ||P||_F + ||Q||_F).
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A and Q must be square with matching shape")
    margin = float(np.max(np.linalg.eigvals(A).real))
    if margin >= -EPS_STAB:
        raise UnstableMatrixError(f"A is not Hurwitz (margin {margin:.3e})")

    eye = np.eye(n)
    K = np.kron(A, eye) + np.kron(eye, A)
    try:
        vec_p = np.linalg.solve(K, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularSolveError(str(exc)) from exc
    P = vec_p.reshape(n, n)
    P = 0.5 * (P + P.T)

    residual = float(np.linalg.norm(A @ P + P @ A.T + Q, "fro"))
    bound = RESIDUAL_RTOL * (
        2.0 * np.linalg.norm(A, "fro") * np.linalg.norm(P, "fro")
        + np.linalg.norm(Q, "fro")
    )
    if residual > bound:
        raise SingularSolveError(
            f"Lyapunov residual {residual:.3e} exceeds bound {bound:.3e}"
        )
    return CovarianceResult(P=P, residual_norm=residual)


def mean_power(
    m: StateSpaceModel, W: float, *, paper_orientation: bool = False
) -> float:
    """Stationary mean harvested power J = C P C^T = Var(v).

    With paper_orientation=True the transposed equation
    A^T P + P A + B_xi W B_xi^T = 0 is solved instead. That orientation mixes
    the observability equation with the input matrix and does not reproduce
    the stationary voltage variance; it exists purely for comparison.
    """
    if W < 0:
        raise ValueError("W must be nonnegative")
    A = m.A.T if paper_orientation else m.A
    Q = (m.B_xi @ m.B_xi.T) * W
    res = solve_stationary_covariance(A, Q)
    return float((m.C @ res.P @ m.C.T)[0, 0])
