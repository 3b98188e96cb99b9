"""Command-line front end.

One JSON configuration document drives all subcommands; individual fields can
be overridden with repeated ``--set dotted.key=value`` flags. Outputs are flat
CSV/JSON files; no timestamps are written anywhere, so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lyapunov, optimize, sim, spectral
from .model import (
    ControlGains,
    HarvesterParams,
    ModelError,
    PhysicalParams,
    build_closed_loop,
    build_open_loop,
    is_hurwitz,
    nondimensionalize,
    validate_gains,
)

EXIT_OK = 0
EXIT_VALIDATION_FAILURE = 1
EXIT_CONFIG_ERROR = 2


class ConfigError(ValueError):
    """Configuration document is malformed or violates a model invariant."""


DEFAULT_PARAMS = {
    "zeta_s": 0.01,
    "lambda": 5.0,
    "zeta_h": 0.01,
    "kappa": 0.6,
    "alpha": 10.0,
    "W": 1.0,
}
DEFAULT_GAINS = {"K_m": 0.1, "K_e": 900.0}


@dataclass
class RunConfig:
    params: HarvesterParams
    gains: ControlGains | None
    sweep: dict = field(default_factory=dict)
    quadrature: spectral.QuadratureOptions = field(
        default_factory=spectral.QuadratureOptions
    )
    simulate: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)
    out: Path = Path(".")


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _parse_params(doc: dict) -> HarvesterParams:
    if "physical" in doc and "params" in doc:
        raise ConfigError("give either 'params' or 'physical', not both")
    try:
        if "physical" in doc:
            section = dict(doc["physical"])
            w_dim = section.pop("W_dim", 1.0)
            _check_keys(
                section,
                {"m_s", "m_h", "k_s", "k_h", "c_s", "c_h", "theta", "C_p", "R", "l_c"},
                "physical",
            )
            return nondimensionalize(PhysicalParams(**section), w_dim)
        section = {**DEFAULT_PARAMS, **doc.get("params", {})}
        _check_keys(section, set(DEFAULT_PARAMS), "params")
        section["lam"] = section.pop("lambda")
        return HarvesterParams(**section)
    except (ModelError, TypeError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc


def _parse_gains(doc: dict) -> ControlGains | None:
    if "gains" not in doc:
        return None
    section = doc["gains"]
    _check_keys(section, {"K_m", "K_e"}, "gains")
    try:
        g = ControlGains(K_m=float(section["K_m"]), K_e=float(section["K_e"]))
    except KeyError as exc:
        raise ConfigError(f"gains: missing field {exc}") from exc
    if not validate_gains(g):
        raise ConfigError(
            f"gains: (K_m={g.K_m}, K_e={g.K_e}) infeasible; require K_m > 0 and K_e > -1"
        )
    return g


def _parse_grid(spec, name: str) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict):
        _check_keys(spec, {"start", "stop", "num", "spacing"}, name)
        try:
            if spec.get("spacing", "linear") == "log":
                return np.logspace(
                    np.log10(spec["start"]), np.log10(spec["stop"]), spec["num"]
                )
            return np.linspace(spec["start"], spec["stop"], spec["num"])
        except KeyError as exc:
            raise ConfigError(f"{name}: missing field {exc}") from exc
    raise ConfigError(f"{name} must be a list or a start/stop/num object")


def load_config(doc: dict) -> RunConfig:
    _check_keys(
        doc,
        {"params", "physical", "gains", "sweep", "quadrature", "simulate",
         "optimize", "out"},
        "config root",
    )
    quad_section = doc.get("quadrature", {})
    _check_keys(quad_section, {"rel_tol", "abs_tol", "omega_max"}, "quadrature")
    sweep_section = doc.get("sweep", {})
    _check_keys(
        sweep_section, {"km_grid", "ke_grid", "method", "transfer_mode"}, "sweep"
    )
    sim_section = doc.get("simulate", {})
    _check_keys(
        sim_section, {"h", "n_steps", "seed", "burn_in", "scheme"}, "simulate"
    )
    opt_section = doc.get("optimize", {})
    _check_keys(
        opt_section,
        {"init", "method", "transfer_mode", "max_iterations", "simplex_tol",
         "multi_start"},
        "optimize",
    )
    try:
        quadrature = spectral.QuadratureOptions(**quad_section)
    except ValueError as exc:
        raise ConfigError(f"quadrature: {exc}") from exc
    return RunConfig(
        params=_parse_params(doc),
        gains=_parse_gains(doc),
        sweep=sweep_section,
        quadrature=quadrature,
        simulate=sim_section,
        optimize=opt_section,
        out=Path(doc.get("out", ".")),
    )


def _apply_set(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {key!r} crosses a non-object value")
    node[parts[-1]] = value


def _read_config(args) -> RunConfig:
    doc: dict = {}
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config parse error at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}"
            ) from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
    for assignment in args.set or []:
        _apply_set(doc, assignment)
    if args.out is not None:
        doc["out"] = args.out
    if args.seed is not None:
        doc.setdefault("simulate", {})["seed"] = args.seed
    if args.method is not None:
        doc.setdefault("sweep", {})["method"] = args.method
        doc.setdefault("optimize", {})["method"] = args.method
    if args.transfer_mode is not None:
        doc.setdefault("sweep", {})["transfer_mode"] = args.transfer_mode
        doc.setdefault("optimize", {})["transfer_mode"] = args.transfer_mode
    return load_config(doc)


def _require_gains(cfg: RunConfig) -> ControlGains:
    if cfg.gains is None:
        raise ConfigError("this command requires a 'gains' section")
    return cfg.gains


def cmd_evaluate(cfg: RunConfig) -> int:
    g = cfg.gains or ControlGains(**DEFAULT_GAINS)
    m = build_closed_loop(cfg.params, g)
    j_lyap = lyapunov.mean_power(m, cfg.params.W)
    j_spec = spectral.harvested_power_spectral(m, cfg.params.W, cfg.quadrature)
    rel = abs(j_lyap - j_spec) / j_lyap if j_lyap else 0.0
    raw = spectral.paper_integral_raw(cfg.params, g, cfg.quadrature)
    print(f"gains: K_m={g.K_m:.17g} K_e={g.K_e:.17g}")
    print(f"J_lyapunov            = {j_lyap:.17g}")
    print(f"J_spectral_statespace = {j_spec:.17g}")
    print(f"relative_difference   = {rel:.3e}")
    print(f"paper_literal_raw_integral = {raw:.17g}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    section = cfg.sweep
    km_grid = (
        _parse_grid(section["km_grid"], "sweep.km_grid")
        if "km_grid" in section
        else np.array([0.1, 0.3, 0.5])
    )
    ke_grid = (
        _parse_grid(section["ke_grid"], "sweep.ke_grid")
        if "ke_grid" in section
        else optimize.default_ke_grid()
    )
    result = optimize.sweep(
        cfg.params,
        km_grid,
        ke_grid,
        method=section.get("method", "lyapunov"),
        transfer_mode=section.get("transfer_mode", "statespace"),
        quadrature=cfg.quadrature,
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "sweep.csv"
    optimize.sweep_to_csv(result, path)
    print(f"wrote {path} ({result.J.size} cells, {len(result.failures)} failed)")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig) -> int:
    section = cfg.optimize
    init_section = section.get("init", DEFAULT_GAINS)
    init = ControlGains(K_m=float(init_section["K_m"]), K_e=float(init_section["K_e"]))
    opts = optimize.OptimizerOptions(
        method=section.get("method", "lyapunov"),
        transfer_mode=section.get("transfer_mode", "statespace"),
        simplex_tol=section.get("simplex_tol", 1e-6),
        max_iterations=section.get("max_iterations", 2000),
        multi_start=section.get("multi_start", True),
        quadrature=cfg.quadrature,
    )
    result = optimize.maximize_gains(cfg.params, init, opts)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "optimize.json"
    optimize.optim_to_json(result, path)
    print(
        f"wrote {path}: K_m*={result.gains_star.K_m:.8g} "
        f"K_e*={result.gains_star.K_e:.8g} J*={result.J_star:.10g} "
        f"converged={result.converged}"
    )
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    g = _require_gains(cfg)
    section = cfg.simulate
    m = build_closed_loop(cfg.params, g)
    trajectory = sim.simulate(
        m,
        cfg.params.W,
        h=section.get("h", 0.01),
        n_steps=section.get("n_steps", 100_000),
        seed=section.get("seed", 42),
        scheme=section.get("scheme", "exact"),
    )
    estimate = sim.estimate_power(trajectory, burn_in=section.get("burn_in", 0.1))
    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / "trajectory.csv"
    sim.write_trajectory_csv(trajectory, csv_path, cfg.params)
    json_path = cfg.out / "power.json"
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {
                "mean": estimate.mean,
                "std_error": estimate.std_error,
                "burn_in_steps": estimate.burn_in_steps,
                "seed": trajectory.seed,
                "h": trajectory.step,
                "scheme": trajectory.scheme,
                "rng": sim.RNG_ALGORITHM,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"wrote {csv_path} and {json_path}")
    print(f"J_simulated = {estimate.mean:.10g} +/- {estimate.std_error:.3g} (1 s.e.)")
    return EXIT_OK


def _validation_checks(cfg: RunConfig):
    p = cfg.params
    g = cfg.gains or ControlGains(**DEFAULT_GAINS)

    # scalar Lyapunov closed form P = W / (2a)
    res = lyapunov.solve_stationary_covariance(np.array([[-2.0]]), np.array([[3.0]]))
    yield "lyapunov scalar closed form", abs(res.P[0, 0] - 0.75) <= 1e-12

    # 2-state oscillator: Var(x) = Var(dx) = W / (4 zeta)
    zeta, W2 = 0.15, 2.0
    a2 = np.array([[0.0, 1.0], [-1.0, -2.0 * zeta]])
    b2 = np.array([[0.0], [1.0]])
    p2 = lyapunov.solve_stationary_covariance(a2, (b2 @ b2.T) * W2).P
    ok2 = (
        abs(p2[0, 0] - W2 / (4 * zeta)) <= 1e-12
        and abs(p2[1, 1] - W2 / (4 * zeta)) <= 1e-12
        and abs(p2[0, 1]) <= 1e-12
    )
    yield "lyapunov 2-state oscillator closed form", ok2

    # cross-method equivalence at the configured gains
    m = build_closed_loop(p, g)
    j_l = lyapunov.mean_power(m, p.W)
    j_s = spectral.harvested_power_spectral(m, p.W, cfg.quadrature)
    yield "lyapunov vs spectral (<= 1e-6 relative)", abs(j_l - j_s) <= 1e-6 * j_l

    # zero-gain limit recovers the open loop
    tiny = build_closed_loop(p, ControlGains(K_m=1e-14, K_e=0.0))
    yield "zero-gain limit matches open loop", bool(
        np.allclose(tiny.A, build_open_loop(p).A, atol=1e-12)
    )

    # random feasible draws stay Hurwitz
    rng = np.random.default_rng(0)
    stable_all = True
    for _ in range(200):
        draw = HarvesterParams(
            zeta_s=10 ** rng.uniform(-3, 0),
            lam=10 ** rng.uniform(-1, 1),
            zeta_h=10 ** rng.uniform(-3, 0),
            kappa=rng.uniform(0, 2),
            alpha=10 ** rng.uniform(-1, 2),
        )
        gains = ControlGains(
            K_m=10 ** rng.uniform(-3, 3),
            K_e=float(np.expm1(rng.uniform(np.log(1e-6), np.log(1e4 + 1)))),
        )
        stable_all &= is_hurwitz(build_closed_loop(draw, gains))[0]
    yield "random feasible closed loops Hurwitz (200 draws)", stable_all

    # short Monte Carlo run consistent with the Lyapunov value
    seed = cfg.simulate.get("seed", 42)
    trajectory = sim.simulate(m, p.W, h=0.01, n_steps=400_000, seed=seed)
    estimate = sim.estimate_power(trajectory)
    yield (
        "Monte Carlo within 3 standard errors",
        abs(estimate.mean - j_l) <= 3.0 * estimate.std_error,
    )

    # determinism of the simulation path
    repeat = sim.simulate(m, p.W, h=0.01, n_steps=1_000, seed=seed)
    again = sim.simulate(m, p.W, h=0.01, n_steps=1_000, seed=seed)
    yield "simulation determinism (same seed)", bool(
        np.array_equal(repeat.states, again.states)
    )


def cmd_validate(cfg: RunConfig) -> int:
    failures = 0
    for name, ok in _validation_checks(cfg):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += not ok
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VALIDATION_FAILURE
    print("all checks passed")
    return EXIT_OK


COMMANDS = {
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vehopt",
        description="Harvested-power evaluation and passive gain optimization "
        "for a piezoelectric vibration energy harvester on a single-mode "
        "structure under white-noise excitation.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="path to a JSON configuration document")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config field by dotted path (repeatable)",
    )
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--method", choices=optimize.EVALUATION_METHODS)
    parser.add_argument("--transfer-mode", choices=optimize.TRANSFER_MODES)
    parser.add_argument("--seed", type=int)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _read_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as exc:
        print(f"{type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
