"""Seeded Monte Carlo simulation of the closed-loop stochastic system.

The default scheme is exact discretization: A_d = exp(A h) and the step-noise
covariance Q_d from the Van Loan augmented-exponential construction, so the
sampled states are exact in distribution at the grid times for any step size.
An Euler-Maruyama mode is retained for comparison only.

Randomness comes from numpy's PCG64 generator (period 2^128) through
``numpy.random.Generator.standard_normal``; the algorithm name is recorded in
trajectory metadata so runs are reproducible across machines. Ensemble member
seeds are derived from a base seed with ``numpy.random.SeedSequence((base, i))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import expm

from .model import (
    ControlGains,
    HarvesterParams,
    StateSpaceModel,
    build_closed_loop,
    is_hurwitz,
)
from .lyapunov import UnstableMatrixError

RNG_ALGORITHM = "numpy-PCG64/standard_normal"
SCHEMES = ("exact", "euler_maruyama")


class TooShortTrajectoryError(ValueError):
    """Not enough retained samples for the batch-means estimator."""


class MismatchedModelError(ValueError):
    """Trajectory was not generated from the given parameter/gain combination."""


@dataclass(frozen=True)
class Trajectory:
    step: float
    states: np.ndarray  # (n_steps + 1, 5), row 0 is the zero initial state
    seed: int
    scheme: str
    model: StateSpaceModel | None = None  # generating model, kept for audits

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[1] != 5 or states.shape[0] == 0:
            raise ValueError("states must be a nonempty (n, 5) array")
        if not self.step > 0:
            raise ValueError("step must be strictly positive")
        if not np.all(np.isfinite(states)):
            raise ValueError("states must be finite")
        object.__setattr__(self, "states", states)


@dataclass(frozen=True)
class PowerEstimate:
    mean: float
    std_error: float
    burn_in_steps: int


@dataclass(frozen=True)
class EnergyAudit:
    """Losslessness residuals of the two feedback channels.

    mech_residual / elec_residual are the absolute defects of the lossless
    work-storage identity divided by the corresponding accumulated absolute
    work (mech_scale / elec_scale).
    """

    mech_residual: float
    elec_residual: float
    mech_scale: float
    elec_scale: float


def discretize(
    m: StateSpaceModel, h: float, W: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step transition matrix and step-noise covariance.

    A_d = exp(A h); Q_d = Int_0^h exp(A s) B W B^T exp(A^T s) ds via the
    Van Loan block-exponential of [[-A, B W B^T], [0, A^T]] * h.
    """
    if not h > 0:
        raise ValueError("h must be strictly positive")
    if W < 0:
        raise ValueError("W must be nonnegative")
    stable, margin = is_hurwitz(m)
    if not stable:
        raise UnstableMatrixError(f"model is not Hurwitz (margin {margin:.3e})")
    n = 5
    Qc = (m.B_xi @ m.B_xi.T) * W
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -m.A
    M[:n, n:] = Qc
    M[n:, n:] = m.A.T
    F = expm(M * h)
    if not np.all(np.isfinite(F)):
        raise FloatingPointError("matrix exponential did not converge")
    A_d = F[n:, n:].T
    Q_d = A_d @ F[:n, n:]
    return A_d, 0.5 * (Q_d + Q_d.T)


@njit(cache=True)
def _iterate(A_d, L, z):  # pragma: no cover - exercised via simulate()
    n = z.shape[0]
    out = np.zeros((n + 1, 5))
    x = np.zeros(5)
    for k in range(n):
        x = A_d @ x + L @ z[k]
        out[k + 1] = x
    return out


def _noise_factor(Q_d: np.ndarray) -> np.ndarray:
    # Q_d is near rank-1 for small h; the trace-scaled jitter keeps the
    # Cholesky factorization well posed without visibly perturbing the law.
    n = Q_d.shape[0]
    return np.linalg.cholesky(Q_d + 1e-15 * np.trace(Q_d) * np.eye(n))


def simulate(
    m: StateSpaceModel,
    W: float,
    h: float,
    n_steps: int,
    seed: int,
    scheme: str = "exact",
) -> Trajectory:
    """Sample one trajectory x_{k+1} = A_d x_k + w_k from rest, w_k ~ N(0, Q_d).

    Identical arguments (including seed) give bitwise-identical output.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if scheme == "exact":
        A_d, Q_d = discretize(m, h, W)
    else:
        stable, margin = is_hurwitz(m)
        if not stable:
            raise UnstableMatrixError(f"model is not Hurwitz (margin {margin:.3e})")
        A_d = np.eye(5) + m.A * h
        Q_d = (m.B_xi @ m.B_xi.T) * (W * h)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_steps, 5))
    if W == 0:
        L = np.zeros((5, 5))
    else:
        L = _noise_factor(Q_d)
    states = _iterate(np.ascontiguousarray(A_d), np.ascontiguousarray(L), z)
    return Trajectory(step=h, states=states, seed=seed, scheme=scheme, model=m)


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic per-member seed for ensembles: SeedSequence((base, index))."""
    return int(np.random.SeedSequence((base_seed, index)).generate_state(1)[0])


def estimate_power(t: Trajectory, burn_in: float = 0.1) -> PowerEstimate:
    """Time-averaged v^2 with a 16-block batch-means standard error."""
    if not 0.0 <= burn_in <= 0.9:
        raise ValueError("burn_in must be in [0, 0.9]")
    n_total = t.states.shape[0]
    burn = int(burn_in * n_total)
    v_sq = t.states[burn:, 4] ** 2
    n_batches = 16
    if v_sq.size < n_batches:
        raise TooShortTrajectoryError(
            f"{v_sq.size} retained samples cannot fill {n_batches} batches"
        )
    mean = float(np.mean(v_sq))
    block = v_sq.size // n_batches
    batch_means = np.mean(v_sq[: n_batches * block].reshape(n_batches, block), axis=1)
    std_error = float(np.std(batch_means, ddof=1) / np.sqrt(n_batches))
    return PowerEstimate(mean=mean, std_error=std_error, burn_in_steps=burn)


def energy_audit(
    t: Trajectory, p: HarvesterParams, g: ControlGains
) -> EnergyAudit:
    """Check the lossless work-storage identities of both feedback channels.

    Mechanical: u_m = -K_m x_h, so Int u_m dx_h/dt dt + Delta(K_m x_h^2 / 2) = 0
    along any trajectory. Electrical: u_e = -K_e dv/dt against storage
    K_e v^2 / 2, with dv/dt reconstructed from the closed-loop state equation
    dv/dt = (dx_h/dt - alpha v) / (1 + K_e) rather than finite-differenced.
    Work integrals use trapezoidal accumulation of the sampled power products.
    """
    if t.model is None or t.model.gains != g:
        raise MismatchedModelError("trajectory was not generated with these gains")
    expected = build_closed_loop(p, g)
    if not np.array_equal(expected.A, t.model.A):
        raise MismatchedModelError("trajectory model does not match the parameters")

    h = t.step
    x_h = t.states[:, 2]
    dx_h = t.states[:, 3]
    v = t.states[:, 4]

    u_m = -g.K_m * x_h
    mech_work = float(np.trapezoid(u_m * dx_h, dx=h))
    mech_storage = g.K_m * (x_h[-1] ** 2 - x_h[0] ** 2) / 2.0
    mech_scale = float(np.trapezoid(np.abs(u_m * dx_h), dx=h))

    v_dot = (dx_h - p.alpha * v) / (1.0 + g.K_e)
    u_e = -g.K_e * v_dot
    elec_work = float(np.trapezoid(u_e * v, dx=h))
    elec_storage = g.K_e * (v[-1] ** 2 - v[0] ** 2) / 2.0
    elec_scale = float(np.trapezoid(np.abs(u_e * v), dx=h))

    return EnergyAudit(
        mech_residual=abs(mech_work + mech_storage) / mech_scale if mech_scale else 0.0,
        elec_residual=abs(elec_work + elec_storage) / elec_scale if elec_scale else 0.0,
        mech_scale=mech_scale,
        elec_scale=elec_scale,
    )


def write_trajectory_csv(t: Trajectory, path, p: HarvesterParams | None = None) -> None:
    """CSV export: columns t, x_s, dx_s, x_h, dx_h, v with '#' metadata lines."""
    n = t.states.shape[0]
    times = np.arange(n) * t.step
    header_lines = [
        f"# seed={t.seed}",
        f"# h={t.step!r}",
        f"# scheme={t.scheme}",
        f"# rng={RNG_ALGORITHM}",
    ]
    if p is not None:
        header_lines.append(
            f"# params zeta_s={p.zeta_s!r} lambda={p.lam!r} zeta_h={p.zeta_h!r} "
            f"kappa={p.kappa!r} alpha={p.alpha!r} W={p.W!r}"
        )
    if t.model is not None and t.model.gains is not None:
        g = t.model.gains
        header_lines.append(f"# gains K_m={g.K_m!r} K_e={g.K_e!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        fh.write("t,x_s,dx_s,x_h,dx_h,v\n")
        for k in range(n):
            row = ",".join(f"{x:.17g}" for x in (times[k], *t.states[k]))
            fh.write(row + "\n")
