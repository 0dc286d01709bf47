"""Experiment runner CLI.

Reads a JSON config (or equivalent flags), dispatches the requested scenario,
solves the backward Riccati equation with the chosen solver, synthesizes the
feedback gain, runs the enabled verification checks, and writes:

* ``report.json`` — config echo, Riccati summary, regularity report,
  verification residuals/flags, timings, and the artifact manifest;
* ``riccati.csv`` — ``(t, path_id, P, Lambda, K, L)`` trajectories (all grid
  nodes for the first up-to-16 path ids; deterministic runs export their
  single path in full);
* ``sweep.csv`` — ``(perturbation_id, epsilon, J, J_minus_Jfb, std_err)``;
* ``regularity.csv`` — ``(path_id, sqnorm_theta)`` for every path.

Floats in CSVs are written with 17 significant digits, and identical configs
reproduce every CSV byte for byte.  Exit status: 0 all enabled checks passed,
2 a check failed, 3 configuration/input error, 4 runtime/numerical error.
The output directory may be overridden with the ``OUTPUT_DIR`` environment
variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SlqError
from .evaluate import (
    completion_of_squares_check,
    counterexample_divergence_probe,
    make_perturbations,
    optimality_sweep,
    simulate_closed_loop,
    value_identity_check,
)
from .feedback import regularity_diagnostics, stationarity_residual, synthesize
from .grid import PathArray, make_grid, sample_brownian
from .problem import (
    InitialCondition,
    scenario_counterexample,
    scenario_deterministic,
    scenario_example1,
)
from .riccati import (
    RegressionBasis,
    closed_form_counterexample,
    closed_form_example1,
    solve_bsre_regression,
    solve_deterministic,
)

__all__ = ["ExperimentConfig", "RunReport", "load_config", "run", "main"]

SCENARIOS = ("example1", "counterexample", "deterministic", "custom-from-file")
SOLVERS = ("closed_form", "regression", "deterministic_ode")
CHECKS = ("value_identity", "completion_of_squares", "optimality",
          "stationarity", "divergence")
TOLERANCE_DEFAULTS = {
    "n_se": 3.0,            # standard-error multiplier of all MC checks
    "disc_coeff": 0.5,      # coefficient of the sqrt(h) allowance
    "stationarity": 1e-8,   # max ||L + K Theta|| line
    "synthesis": 1e-8,      # pointwise PSD/range tolerance
    "regularity_bound": 0.0,  # 0 = auto (10x median of this run)
    "basis_degree": 3.0,    # regression basis degree
    "cos_epsilon": 0.1,     # perturbation size of the CLI's cos check
}
RICCATI_CSV_MAX_PATHS = 16


@dataclass
class ExperimentConfig:
    """Validated experiment description (see module docstring for files)."""

    scenario: str
    T: float = 1.0
    steps: int = 256
    paths: int = 10000
    seed: int = 1
    start_index: int = 0
    eta: list = field(default_factory=lambda: [1.0])
    solver: str = "closed_form"
    checks: list = field(default_factory=list)  # empty = all applicable
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "out"
    deterministic: list = field(default_factory=lambda: [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0])
    custom_model: str | None = None

    def enabled_checks(self) -> list:
        if self.checks:
            return list(self.checks)
        base = ["value_identity", "completion_of_squares", "optimality", "stationarity"]
        if self.scenario == "counterexample":
            base.append("divergence")
        return base

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, TOLERANCE_DEFAULTS[name]))


@dataclass
class RunReport:
    """In-memory mirror of report.json."""

    config: dict
    riccati_summary: dict
    regularity: dict
    verification: dict
    timings: dict
    manifest: list
    all_passed: bool
    failed: str | None = None


def _expect(cond: bool, fld: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"config field '{fld}': {msg}", field=fld)


def _validate_config(raw: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config field '{key}'", field=key)
    _expect("scenario" in raw, "scenario", "required")
    cfg = ExperimentConfig(scenario=raw["scenario"])
    for key, value in raw.items():
        setattr(cfg, key, value)
    _expect(cfg.scenario in SCENARIOS, "scenario",
            f"must be one of {SCENARIOS}, got {cfg.scenario!r}")
    _expect(isinstance(cfg.T, (int, float)) and not isinstance(cfg.T, bool)
            and float(cfg.T) > 0, "T", f"must be a positive real, got {cfg.T!r}")
    cfg.T = float(cfg.T)
    _expect(isinstance(cfg.steps, int) and not isinstance(cfg.steps, bool)
            and cfg.steps >= 2, "steps", f"must be an integer >= 2, got {cfg.steps!r}")
    _expect(isinstance(cfg.paths, int) and not isinstance(cfg.paths, bool)
            and cfg.paths >= 1, "paths", f"must be a positive integer, got {cfg.paths!r}")
    _expect(isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool),
            "seed", f"must be an integer, got {cfg.seed!r}")
    _expect(isinstance(cfg.start_index, int) and 0 <= cfg.start_index < cfg.steps,
            "start_index", f"must be an integer in [0, steps), got {cfg.start_index!r}")
    _expect(isinstance(cfg.eta, list) and cfg.eta
            and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in cfg.eta),
            "eta", f"must be a non-empty list of reals, got {cfg.eta!r}")
    cfg.eta = [float(v) for v in cfg.eta]
    _expect(cfg.solver in SOLVERS, "solver",
            f"must be one of {SOLVERS}, got {cfg.solver!r}")
    if cfg.checks == "all":
        cfg.checks = []
    _expect(isinstance(cfg.checks, list), "checks",
            f"must be 'all' or a list of check names, got {cfg.checks!r}")
    for name in cfg.checks:
        _expect(name in CHECKS, "checks",
                f"unknown check {name!r}; known: {CHECKS}")
        if name == "divergence":
            _expect(cfg.scenario == "counterexample", "checks",
                    "the divergence check requires the counterexample scenario")
    _expect(isinstance(cfg.tolerances, dict), "tolerances",
            f"must be a name->value map, got {cfg.tolerances!r}")
    for name, value in cfg.tolerances.items():
        _expect(name in TOLERANCE_DEFAULTS, "tolerances",
                f"unknown tolerance {name!r}; known: {sorted(TOLERANCE_DEFAULTS)}")
        _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
                "tolerances", f"{name} must be a real, got {value!r}")
    cfg.tolerances = {k: float(v) for k, v in cfg.tolerances.items()}
    _expect(isinstance(cfg.output_dir, str) and cfg.output_dir, "output_dir",
            "must be a non-empty path string")
    _expect(isinstance(cfg.deterministic, list) and len(cfg.deterministic) == 7
            and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in cfg.deterministic),
            "deterministic", "must be a list of 7 reals [a,b,c,d,q,r,g]")
    cfg.deterministic = [float(v) for v in cfg.deterministic]
    if cfg.scenario == "custom-from-file":
        _expect(isinstance(cfg.custom_model, str) and ":" in (cfg.custom_model or ""),
                "custom_model", "must be 'module:callable' for custom-from-file")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Load and validate a JSON experiment config.

    Raises
    ------
    FileNotFoundError
        Missing file (io-error; exit code 3 from the CLI).
    ConfigError
        Malformed JSON or schema violation; names the offending field.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field="json") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", field="json")
    return _validate_config(raw)


def _resolve_model(cfg: ExperimentConfig):
    if cfg.scenario == "example1":
        return scenario_example1(cfg.T)
    if cfg.scenario == "counterexample":
        return scenario_counterexample(cfg.T).model
    if cfg.scenario == "deterministic":
        return scenario_deterministic(*cfg.deterministic, T=cfg.T)
    import importlib

    mod_name, _, attr = cfg.custom_model.partition(":")
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import custom model {cfg.custom_model!r}: {exc}",
                          field="custom_model") from exc
    return factory(cfg.T)


def _solve(cfg: ExperimentConfig, model, grid, batch):
    if cfg.solver == "regression":
        return solve_bsre_regression(model, grid, batch,
                                     RegressionBasis(int(cfg.tolerance("basis_degree"))))
    if cfg.solver == "deterministic_ode" or (cfg.solver == "closed_form"
                                             and cfg.scenario == "deterministic"):
        if model.kind != "deterministic":
            raise ConfigError(
                "solver 'deterministic_ode' requires deterministic coefficients",
                field="solver")
        return solve_deterministic(model, grid)
    if cfg.solver == "closed_form":
        if cfg.scenario == "example1":
            return closed_form_example1(grid, batch)
        if cfg.scenario == "counterexample":
            return closed_form_counterexample(grid, batch)
        raise ConfigError(
            f"no closed-form solver for scenario {cfg.scenario!r}; "
            "use 'regression' or 'deterministic_ode'", field="solver")
    raise ConfigError(f"unhandled solver {cfg.solver!r}", field="solver")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x:
            return None  # NaN -> null
        if x in (float("inf"), float("-inf")):
            return repr(x)
        return x
    return obj


def run(config: ExperimentConfig) -> RunReport:
    """Execute one experiment; write artifacts; return the report.

    Module errors (solver failures, finite escape, ...) propagate to the
    caller after a partial ``report.json`` with a ``failed`` marker has been
    written; check *failures* do not raise — they are recorded in the report
    and reflected in the exit code by :func:`main`.
    """
    out_dir = Path(os.environ.get("OUTPUT_DIR") or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    manifest: list[str] = []
    report_path = out_dir / "report.json"

    def _emit_report(report: RunReport) -> None:
        payload = _jsonable(dataclasses.asdict(report))
        report_path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")

    try:
        t0 = time.perf_counter()
        model = _resolve_model(config)
        grid = make_grid(config.T, config.steps)
        batch = sample_brownian(grid, config.paths, config.seed)
        timings["setup_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        sol = _solve(config, model, grid, batch)
        timings["riccati_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        law = synthesize(sol, model, tol=config.tolerance("synthesis"))
        bound = config.tolerance("regularity_bound")
        reg = regularity_diagnostics(law, grid, None if bound == 0.0 else bound)
        timings["feedback_s"] = time.perf_counter() - t0

        init = InitialCondition(start_index=config.start_index,
                                eta=np.asarray(config.eta))
        n_se = config.tolerance("n_se")
        disc = config.tolerance("disc_coeff")
        enabled = config.enabled_checks()
        pass_flags: dict[str, dict] = {}
        verification: dict = {
            "value_identity_residual": None,
            "cos_identity_residual": None,
            "stationarity_residual": None,
            "optimality_sweep": [],
        }
        sweep_rows: list[list[str]] = []

        t0 = time.perf_counter()
        if "value_identity" in enabled:
            res = value_identity_check(sol, law, model, init, batch,
                                       n_se=n_se, disc_coeff=disc)
            verification["value_identity_residual"] = res.residual
            pass_flags["value_identity"] = {
                "passed": res.passed, "residual": res.residual,
                "tolerance": res.tolerance, "details": res.details,
            }
        if "completion_of_squares" in enabled:
            eps = config.tolerance("cos_epsilon")
            _, u_fb = simulate_closed_loop(model, law, init, batch)
            worst = None
            all_ok = True
            arms = {}
            for pid, v in make_perturbations(grid, batch, model.m):
                u = PathArray(u_fb.values + eps * v)
                res = completion_of_squares_check(sol, law, model, u, init, batch,
                                                  n_se=n_se, disc_coeff=disc)
                arms[pid] = {"residual": res.residual, "tolerance": res.tolerance,
                             "passed": res.passed}
                all_ok &= res.passed
                if worst is None or res.residual > worst:
                    worst = res.residual
            replay = completion_of_squares_check(sol, law, model, u_fb, init, batch,
                                                 n_se=n_se, disc_coeff=disc)
            arms["closed_loop_replay"] = {"residual": replay.residual,
                                          "tolerance": 0.0,
                                          "passed": replay.residual == 0.0}
            all_ok &= replay.residual == 0.0
            verification["cos_identity_residual"] = worst
            pass_flags["completion_of_squares"] = {
                "passed": bool(all_ok), "residual": worst,
                "tolerance": None, "arms": arms,
            }
        if "optimality" in enabled:
            sweep = optimality_sweep(sol, law, model, init, batch,
                                     n_se=n_se, disc_coeff=disc)
            verification["optimality_sweep"] = [
                {"perturbation_id": r.perturbation_id, "epsilon": r.epsilon,
                 "J": r.J, "J_minus_Jfb": r.J_minus_Jfb, "std_err": r.std_err}
                for r in sweep.rows
            ]
            pass_flags["optimality"] = {
                "passed": sweep.passed, "min_gap": sweep.min_gap,
                "first_order_ok": sweep.first_order_ok,
                "quad_ratios": sweep.quad_ratios, "quad_ok": sweep.quad_ok,
            }
            sweep_rows = [
                [r.perturbation_id, _fmt(r.epsilon), _fmt(r.J),
                 _fmt(r.J_minus_Jfb), _fmt(r.std_err)]
                for r in sweep.rows
            ]
        if "stationarity" in enabled:
            st = stationarity_residual(law, sol, model, batch.W)
            tol = config.tolerance("stationarity")
            verification["stationarity_residual"] = st.max_residual
            pass_flags["stationarity"] = {
                "passed": st.max_residual <= tol,
                "residual": st.max_residual, "tolerance": tol,
                "pi_form_residual": st.pi_form_residual,
            }
        if "divergence" in enabled:
            ladder_steps = [config.steps]
            ladder_paths = [config.paths]
            if config.steps > 256 and config.paths > 1000:
                ladder_steps.insert(0, 256)
                ladder_paths.insert(0, 1000)
            probe = counterexample_divergence_probe(
                config.T, ladder_steps, ladder_paths, config.seed)
            pass_flags["divergence"] = {
                "passed": probe.bounds_ok and probe.growth_monotone,
                "bounds_ok": probe.bounds_ok,
                "growth_ratio": probe.growth_ratio,
                "rows": [dataclasses.asdict(r) for r in probe.rows],
            }
        timings["checks_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        n_export = min(RICCATI_CSV_MAX_PATHS, sol.P.n_paths)
        riccati_rows = (
            [_fmt(grid.points[i]), str(p),
             _fmt(sol.P.values[i, p, 0, 0]), _fmt(sol.Lambda.values[i, p, 0, 0]),
             _fmt(sol.K.values[i, p, 0, 0]), _fmt(sol.L.values[i, p, 0, 0])]
            for p in range(n_export) for i in range(grid.N + 1)
        ) if model.n == 1 and model.m == 1 else (
            [_fmt(grid.points[i]), str(p),
             _fmt(np.linalg.norm(sol.P.values[i, p])),
             _fmt(np.linalg.norm(sol.Lambda.values[i, p])),
             _fmt(np.linalg.norm(sol.K.values[i, p])),
             _fmt(np.linalg.norm(sol.L.values[i, p]))]
            for p in range(n_export) for i in range(grid.N + 1)
        )
        _write_csv(out_dir / "riccati.csv",
                   ["t", "path_id", "P", "Lambda", "K", "L"], riccati_rows)
        manifest.append("riccati.csv")
        _write_csv(out_dir / "sweep.csv",
                   ["perturbation_id", "epsilon", "J", "J_minus_Jfb", "std_err"],
                   sweep_rows)
        manifest.append("sweep.csv")
        _write_csv(out_dir / "regularity.csv", ["path_id", "sqnorm_theta"],
                   ([str(p), _fmt(v)] for p, v in enumerate(reg.pathwise_sqnorm)))
        manifest.append("regularity.csv")
        timings["artifacts_s"] = time.perf_counter() - t0

        s = config.start_index
        p_start = sol.P.values[s, :, 0, 0] if model.n == 1 else \
            np.linalg.norm(sol.P.values[s], axis=(1, 2))
        report = RunReport(
            config=dataclasses.asdict(config),
            riccati_summary={
                "solver_tag": sol.solver_tag,
                "P_at_start_mean": float(p_start.mean()),
                "P_at_start_std": float(p_start.std()),
                "paths_in_csv": n_export,
            },
            regularity={
                "max": reg.max, "mean": reg.mean,
                "quantiles": reg.quantiles,
                "bound_threshold": reg.bound_threshold,
                "qualified": reg.qualified,
            },
            verification={**verification, "pass_flags": pass_flags},
            timings=timings,
            manifest=manifest + ["report.json"],
            all_passed=all(f["passed"] for f in pass_flags.values()),
        )
        _emit_report(report)
        return report
    except SlqError as exc:
        report = RunReport(
            config=dataclasses.asdict(config),
            riccati_summary={}, regularity={}, verification={},
            timings=timings, manifest=manifest + ["report.json"],
            all_passed=False, failed=f"{type(exc).__name__}: {exc}",
        )
        _emit_report(report)
        raise


def _apply_flag_overrides(raw: dict, args: argparse.Namespace) -> dict:
    if args.scenario is not None:
        raw["scenario"] = args.scenario
    if args.T is not None:
        raw["T"] = args.T
    if args.steps is not None:
        raw["steps"] = args.steps
    if args.paths is not None:
        raw["paths"] = args.paths
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output_dir"] = args.out
    if args.solver is not None:
        raw["solver"] = args.solver
    if args.check:
        raw["checks"] = list(args.check)
    if args.tol:
        tols = dict(raw.get("tolerances", {}))
        for spec_str in args.tol:
            name, sep, value = spec_str.partition("=")
            if not sep:
                raise ConfigError(
                    f"--tol expects NAME=VALUE, got {spec_str!r}", field="tolerances")
            try:
                tols[name] = float(value)
            except ValueError as exc:
                raise ConfigError(
                    f"--tol {name}: not a real number: {value!r}",
                    field="tolerances") from exc
        raw["tolerances"] = tols
    return raw


def main(argv: list | None = None) -> int:
    """Entry point: parse flags, run the experiment, map outcomes to exit
    codes (0 pass / 2 check failed / 3 config or input error / 4 runtime)."""
    parser = argparse.ArgumentParser(
        prog="slqkit",
        description="Run a stochastic linear-quadratic control experiment "
                    "and write verification artifacts.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--scenario", choices=SCENARIOS)
    parser.add_argument("--T", type=float, help="horizon")
    parser.add_argument("--steps", type=int, help="grid steps")
    parser.add_argument("--paths", type=int, help="Monte Carlo paths")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--solver", choices=SOLVERS)
    parser.add_argument("--check", action="append", metavar="NAME",
                        help="enable a specific check (repeatable)")
    parser.add_argument("--tol", action="append", metavar="NAME=VAL",
                        help="override a tolerance (repeatable)")
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg_path = Path(args.config)
            if not cfg_path.is_file():
                print(f"io-error: config file not found: {args.config}",
                      file=sys.stderr)
                return 3
            try:
                raw = json.loads(cfg_path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}", field="json")
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object", field="json")
        else:
            raw = {}
        raw = _apply_flag_overrides(raw, args)
        config = _validate_config(raw)
    except ConfigError as exc:
        print(f"config-error: {exc}", file=sys.stderr)
        return 3
    try:
        report = run(config)
    except ConfigError as exc:
        print(f"config-error: {exc}", file=sys.stderr)
        return 3
    except SlqError as exc:
        print(f"runtime-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    out_dir = os.environ.get("OUTPUT_DIR") or config.output_dir
    flags = report.verification.get("pass_flags", {})
    for name, info in flags.items():
        print(f"{name}: {'PASS' if info['passed'] else 'FAIL'}")
    print(f"artifacts written to {out_dir}")
    return 0 if report.all_passed else 2


if __name__ == "__main__":
    raise SystemExit(main())
