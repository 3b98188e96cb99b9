"""Plant parameters and state-space construction for the harvester-on-structure model.

The model is a 5-state linear system: a single-mode host structure carrying a
piezoelectric harvester oscillator coupled to a resistive harvesting circuit.
State ordering is fixed throughout the package:

    x1 = x_s (structure displacement)   x2 = dx_s/dt
    x3 = x_h (harvester displacement)   x4 = dx_h/dt
    x5 = v   (nondimensional voltage)

Passive feedback consists of a stiffness gain K_m on the harvester spring and a
capacitance gain K_e on the circuit; both enter the closed-loop matrix only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Eigenvalues with real part above -EPS_STAB are treated as unstable; guards the
# Lyapunov and quadrature routines against near-marginal systems.
EPS_STAB = 1e-9


class ModelError(ValueError):
    """Invalid physical or nondimensional parameter set."""


class InfeasibleGainsError(ModelError):
    """Control gains outside the open feasible set K_m > 0, K_e > -1."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional plant parameters (SI units)."""

    m_s: float  # structure modal mass [kg]
    m_h: float  # harvester mass [kg]
    k_s: float  # structure stiffness [N/m]
    k_h: float  # harvester stiffness [N/m]
    c_s: float  # structure damping [N s/m]
    c_h: float  # harvester damping [N s/m]
    theta: float  # electromechanical coupling coefficient [N/V]
    C_p: float  # piezo capacitance [F]
    R: float  # load resistance [ohm]
    l_c: float  # scaling length [m]

    def __post_init__(self) -> None:
        for name in ("m_s", "m_h", "k_s", "k_h", "C_p", "R", "l_c"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be strictly positive")
        for name in ("c_s", "c_h", "theta"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be nonnegative")

    @property
    def omega_s(self) -> float:
        """Structure natural frequency [rad/s]."""
        return math.sqrt(self.k_s / self.m_s)

    @property
    def omega_h(self) -> float:
        """Harvester natural frequency [rad/s]."""
        return math.sqrt(self.k_h / self.m_h)


@dataclass(frozen=True)
class HarvesterParams:
    """Nondimensional plant parameters plus white-noise intensity.

    W is the intensity of the excitation in the sense that the stationary state
    covariance solves A P + P A^T + B_xi W B_xi^T = 0.
    """

    zeta_s: float  # structure damping ratio
    lam: float  # frequency ratio omega_s / omega_h
    zeta_h: float  # harvester damping ratio
    kappa: float  # coupling strength (the model uses kappa**2)
    alpha: float  # mechanical-to-electrical time-constant ratio
    W: float = 1.0  # white-noise intensity

    def __post_init__(self) -> None:
        if not (self.zeta_s > 0 and self.zeta_h > 0):
            raise ModelError("damping ratios must be strictly positive")
        if not self.lam > 0:
            raise ModelError("lam must be strictly positive")
        if self.kappa < 0:
            raise ModelError("kappa must be nonnegative")
        if not self.alpha > 0:
            raise ModelError("alpha must be strictly positive")
        if self.W < 0:
            raise ModelError("W must be nonnegative")


@dataclass(frozen=True)
class ControlGains:
    """Passive feedback gains: stiffness gain K_m, capacitance gain K_e.

    Feasibility (K_m > 0, K_e > -1) is deliberately not enforced here; use
    :func:`validate_gains` or let :func:`build_closed_loop` reject.
    """

    K_m: float
    K_e: float


@dataclass(frozen=True)
class StateSpaceModel:
    """Matrices of the 5-state model, open loop or closed under given gains."""

    A: np.ndarray
    B_xi: np.ndarray  # 5x1
    C: np.ndarray  # 1x5
    gains: ControlGains | None = None  # None means open loop

    def __post_init__(self) -> None:
        for name, shape in (("A", (5, 5)), ("B_xi", (5, 1)), ("C", (1, 5))):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ModelError(f"{name} must have shape {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def loop(self) -> str:
        return "open" if self.gains is None else "closed"


def validate_gains(g: ControlGains) -> bool:
    """Feasibility verdict for the open constraint set K_m > 0, K_e > -1."""
    return g.K_m > 0 and g.K_e > -1


def nondimensionalize(phys: PhysicalParams, W_dim: float = 1.0) -> HarvesterParams:
    """Reduce dimensional parameters to the nondimensional set.

    W_dim is passed through unchanged as the nondimensional noise intensity W
    (the package-wide convention; see HarvesterParams).
    """
    zeta_s = phys.c_s / (2.0 * math.sqrt(phys.k_s * phys.m_s))
    zeta_h = phys.c_h / (2.0 * math.sqrt(phys.k_h * phys.m_h))
    lam = phys.omega_s / phys.omega_h
    kappa = phys.theta / math.sqrt(phys.C_p * phys.k_h)
    alpha = 1.0 / (phys.R * phys.C_p * phys.omega_h)
    return HarvesterParams(
        zeta_s=zeta_s, lam=lam, zeta_h=zeta_h, kappa=kappa, alpha=alpha, W=W_dim
    )


def dimensional_power(J_nd: float, phys: PhysicalParams) -> float:
    """Convert nondimensional mean power to watts.

    Scale factor is m_h * omega_h**3 * l_c**2 * alpha * kappa**2.
    """
    if J_nd < 0:
        raise ModelError("J_nd must be nonnegative")
    p = nondimensionalize(phys)
    return phys.m_h * phys.omega_h**3 * phys.l_c**2 * p.alpha * p.kappa**2 * J_nd


_B_XI = np.array([[0.0], [1.0], [0.0], [-1.0], [0.0]])
_C = np.array([[0.0, 0.0, 0.0, 0.0, 1.0]])


def build_open_loop(p: HarvesterParams) -> StateSpaceModel:
    """Open-loop dynamics matrix (no control)."""
    k2 = p.kappa**2
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [-p.lam**2, -2.0 * p.zeta_s * p.lam, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [p.lam**2, 2.0 * p.zeta_s * p.lam, -1.0, -2.0 * p.zeta_h, -k2],
            [0.0, 0.0, 0.0, 1.0, -p.alpha],
        ]
    )
    return StateSpaceModel(A=A, B_xi=_B_XI, C=_C)


def build_closed_loop(p: HarvesterParams, g: ControlGains) -> StateSpaceModel:
    """Closed-loop dynamics under u_m = -K_m x_h and u_e = -K_e dv/dt.

    The stiffness gain hardens the harvester spring (row 4); the capacitance
    gain rescales the voltage equation (row 5) by 1/(1 + K_e).
    """
    if not validate_gains(g):
        raise InfeasibleGainsError(
            f"gains (K_m={g.K_m}, K_e={g.K_e}) violate K_m > 0, K_e > -1"
        )
    s = 1.0 + g.K_e
    k2 = p.kappa**2
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [-p.lam**2, -2.0 * p.zeta_s * p.lam, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [p.lam**2, 2.0 * p.zeta_s * p.lam, -(1.0 + g.K_m), -2.0 * p.zeta_h, -k2],
            [0.0, 0.0, 0.0, 1.0 / s, -p.alpha / s],
        ]
    )
    return StateSpaceModel(A=A, B_xi=_B_XI, C=_C, gains=g)


def is_hurwitz(m: StateSpaceModel) -> tuple[bool, float]:
    """Stability verdict plus margin (max real part of the eigenvalues).

    Stable means every eigenvalue real part is below -EPS_STAB, so marginal
    (undamped) systems are reported unstable.
    """
    margin = float(np.max(np.linalg.eigvals(m.A).real))
    return margin < -EPS_STAB, margin
