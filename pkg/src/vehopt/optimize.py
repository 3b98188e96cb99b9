"""Gain sweeps and derivative-free maximization of the harvested power.

The feasible set K_m > 0, K_e > -1 is open, so the simplex search runs in the
transformed coordinates (a, b) = (ln K_m, ln(1 + K_e)) where it is
unconstrained. Multi-start from a small deterministic lattice guards against
local maxima; all starts are recorded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import lyapunov, spectral
from .model import ControlGains, HarvesterParams, build_closed_loop, is_hurwitz

EVALUATION_METHODS = ("lyapunov", "spectral")
TRANSFER_MODES = ("statespace", "paper")

# (K_m, K_e) start lattice: spans weak to stiff spring gains and neutral to
# strongly parallel capacitance gains.
DEFAULT_STARTS = (
    (0.1, 0.0),
    (1.0, 10.0),
    (10.0, 1.0),
    (0.3, 100.0),
    (3.0, 1000.0),
)


@dataclass(frozen=True)
class SweepResult:
    km_values: np.ndarray
    ke_values: np.ndarray
    J: np.ndarray  # shape (len(km_values), len(ke_values)); NaN marks a failed cell
    evaluation_method: str
    transfer_mode: str = "statespace"
    failures: tuple[tuple[int, int], ...] = ()

    @property
    def any_failed(self) -> bool:
        return len(self.failures) > 0

    def argmax(self) -> tuple[int, int]:
        """Indices of the largest power value; earliest (i, j) wins ties."""
        J = np.where(np.isnan(self.J), -np.inf, self.J)
        return np.unravel_index(int(np.argmax(J)), J.shape)


@dataclass(frozen=True)
class OptimizerOptions:
    method: str = "lyapunov"
    transfer_mode: str = "statespace"
    simplex_tol: float = 1e-6  # simplex diameter threshold in (a, b) coordinates
    max_iterations: int = 2000
    multi_start: bool = True
    starts: tuple[tuple[float, float], ...] = DEFAULT_STARTS
    quadrature: spectral.QuadratureOptions = field(
        default_factory=spectral.QuadratureOptions
    )


@dataclass(frozen=True)
class OptimResult:
    gains_star: ControlGains
    J_star: float
    iterations: int
    converged: bool
    trace: tuple[tuple[ControlGains, float], ...]
    starts: tuple[tuple[ControlGains, float, bool], ...] = ()


def _make_evaluator(p: HarvesterParams, method: str, transfer_mode: str, quad=None):
    if method not in EVALUATION_METHODS:
        raise ValueError(f"method must be one of {EVALUATION_METHODS}")
    if transfer_mode not in TRANSFER_MODES:
        raise ValueError(f"transfer_mode must be one of {TRANSFER_MODES}")

    def evaluate(g: ControlGains) -> float:
        m = build_closed_loop(p, g)
        stable, margin = is_hurwitz(m)
        if not stable:
            raise lyapunov.UnstableMatrixError(
                f"closed loop not Hurwitz at {g} (margin {margin:.3e})"
            )
        if method == "lyapunov":
            return lyapunov.mean_power(m, p.W)
        if transfer_mode == "paper":
            return spectral.harvested_power_paper(p, g, p.W, quad)
        return spectral.harvested_power_spectral(m, p.W, quad)

    return evaluate


def sweep(
    p: HarvesterParams,
    km_grid,
    ke_grid,
    method: str = "lyapunov",
    transfer_mode: str = "statespace",
    quadrature: spectral.QuadratureOptions | None = None,
) -> SweepResult:
    """Evaluate the mean power on the Cartesian gain grid, cell by cell.

    A failing cell (evaluator error) is recorded and marked NaN; the sweep
    continues.
    """
    km_values = np.asarray(km_grid, dtype=float)
    ke_values = np.asarray(ke_grid, dtype=float)
    if km_values.size == 0 or ke_values.size == 0:
        raise ValueError("gain grids must be nonempty")
    evaluate = _make_evaluator(p, method, transfer_mode, quadrature)
    J = np.empty((km_values.size, ke_values.size))
    failures: list[tuple[int, int]] = []
    for i, km in enumerate(km_values):
        for j, ke in enumerate(ke_values):
            try:
                J[i, j] = evaluate(ControlGains(K_m=float(km), K_e=float(ke)))
            except Exception:
                J[i, j] = np.nan
                failures.append((i, j))
    return SweepResult(
        km_values=km_values,
        ke_values=ke_values,
        J=J,
        evaluation_method=method,
        transfer_mode=transfer_mode,
        failures=tuple(failures),
    )


def default_ke_grid(n: int = 200) -> np.ndarray:
    """Log-spaced K_e grid over [1, 1e4] used for figure-style sweeps."""
    return np.logspace(0.0, 4.0, n)


def default_km_grid(n: int = 200, km_max: float = 50.0) -> np.ndarray:
    """Linear K_m grid over (0, km_max].

    km_max defaults to 50 so the resonance-tuned interior optimum near
    K_m = lam^2 - 1 stays inside the grid for frequency ratios up to ~7.
    """
    return np.linspace(0.0, km_max, n + 1)[1:]


def _gains_from_ab(ab: np.ndarray) -> ControlGains:
    # K_e is recovered via expm1 so 1 + K_e never rounds to zero.
    return ControlGains(K_m=float(np.exp(ab[0])), K_e=float(np.expm1(ab[1])))


class _Objective:
    """Negated power in (a, b) coordinates with iterate bookkeeping."""

    def __init__(self, evaluate):
        self._evaluate = evaluate
        self.trace: list[tuple[ControlGains, float]] = []
        self.calls = 0

    def __call__(self, ab: np.ndarray) -> float:
        self.calls += 1
        if np.max(np.abs(ab)) > 60.0:  # overflow guard far outside any optimum
            return np.inf
        g = _gains_from_ab(ab)
        try:
            value = self._evaluate(g)
        except Exception:
            return np.inf
        self.trace.append((g, value))
        return -value


def _nelder_mead(f, x0: np.ndarray, diam_tol: float, max_iter: int):
    """Standard Nelder-Mead on R^2 (reflection 1, expansion 2, contraction 0.5,
    shrink 0.5). Converged when the simplex diameter falls below diam_tol."""
    step = 0.25
    simplex = [np.array(x0, dtype=float)]
    for k in range(2):
        v = np.array(x0, dtype=float)
        v[k] += step
        simplex.append(v)
    values = [f(v) for v in simplex]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        diam = max(
            float(np.linalg.norm(simplex[i] - simplex[j]))
            for i in range(3)
            for j in range(i + 1, 3)
        )
        if diam < diam_tol:
            return simplex[0], values[0], iterations, True
        centroid = 0.5 * (simplex[0] + simplex[1])
        worst = simplex[2]
        reflected = centroid + (centroid - worst)
        f_r = f(reflected)
        if f_r < values[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = f(expanded)
            if f_e < f_r:
                simplex[2], values[2] = expanded, f_e
            else:
                simplex[2], values[2] = reflected, f_r
        elif f_r < values[1]:
            simplex[2], values[2] = reflected, f_r
        else:
            inside = f_r >= values[2]
            base = worst if inside else reflected
            contracted = centroid + 0.5 * (base - centroid)
            f_c = f(contracted)
            if f_c < min(values[2], f_r):
                simplex[2], values[2] = contracted, f_c
            else:
                for k in (1, 2):
                    simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0])
                    values[k] = f(simplex[k])
    return simplex[int(np.argmin(values))], min(values), iterations, False


def maximize_gains(
    p: HarvesterParams,
    init: ControlGains,
    opts: OptimizerOptions | None = None,
) -> OptimResult:
    """Locate a power-maximizing gain pair by simplex search.

    Every evaluated iterate goes through the closed-loop Hurwitz check inside
    the evaluator; infeasible or unstable iterates are treated as -inf power.
    """
    opts = opts or OptimizerOptions()
    evaluate = _make_evaluator(p, opts.method, opts.transfer_mode, opts.quadrature)
    start_points = [(init.K_m, init.K_e)]
    if opts.multi_start:
        start_points.extend(opts.starts)

    best = None
    start_records = []
    total_iterations = 0
    trace: list[tuple[ControlGains, float]] = []
    for km0, ke0 in start_points:
        objective = _Objective(evaluate)
        x0 = np.array([np.log(km0), np.log1p(ke0)])
        x_opt, f_opt, iterations, converged = _nelder_mead(
            objective, x0, opts.simplex_tol, opts.max_iterations
        )
        total_iterations += iterations
        trace.extend(objective.trace)
        g_opt = _gains_from_ab(x_opt)
        start_records.append((g_opt, -f_opt, converged))
        if best is None or f_opt < best[1]:
            best = (g_opt, f_opt, converged)

    gains_star, neg_j, converged = best
    return OptimResult(
        gains_star=gains_star,
        J_star=-neg_j,
        iterations=total_iterations,
        converged=converged,
        trace=tuple(trace),
        starts=tuple(start_records),
    )


def sweep_to_csv(result: SweepResult, path) -> None:
    """Long-format CSV: one row per (K_m, K_e) cell."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# method={result.evaluation_method}")
        fh.write(f" transfer_mode={result.transfer_mode}\n")
        fh.write(f"# failed_cells={len(result.failures)}\n")
        fh.write("K_m,K_e,J,method\n")
        for i, km in enumerate(result.km_values):
            for j, ke in enumerate(result.ke_values):
                fh.write(
                    f"{km:.17g},{ke:.17g},{result.J[i, j]:.17g},"
                    f"{result.evaluation_method}\n"
                )


def optim_to_dict(result: OptimResult) -> dict:
    return {
        "gains_star": {"K_m": result.gains_star.K_m, "K_e": result.gains_star.K_e},
        "J_star": result.J_star,
        "iterations": result.iterations,
        "converged": result.converged,
        "trace": [
            {"K_m": g.K_m, "K_e": g.K_e, "J": j} for g, j in result.trace
        ],
        "starts": [
            {"K_m": g.K_m, "K_e": g.K_e, "J": j, "converged": c}
            for g, j, c in result.starts
        ],
    }


def optim_to_json(result: OptimResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(optim_to_dict(result), fh, indent=2)
        fh.write("\n")
