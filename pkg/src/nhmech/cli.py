"""Command line front end: simulate, check and momentum runs from one config.

A single JSON config file names the system, its physical parameters, the
initial element, the step count and the output paths.  The schema is small
and strict; unknown keys anywhere raise :class:`ConfigError` so typos fail
loudly instead of silently running something else.

Exit codes: 0 success, 2 config error, 3 solver failure (singular matrix or
no convergence, with the failing step index in the message), 4 I/O error.
Output files are written to a temporary name and renamed into place, so a
crashed run never leaves a partial trajectory behind.
"""

import argparse
import copy
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from . import models as md
from . import solver as sv
from .errors import (
    ConfigError,
    ConstraintViolationError,
    NhError,
    NoConvergenceError,
    SingularError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

_TOP_KEYS = {"system", "initial", "steps", "solver", "outputs", "momentum", "check"}
_SYSTEM_KEYS = {"name", "params"}
_SOLVER_KEYS = {"tol_residual", "max_iters", "max_backtracks", "cond_limit", "warm_start"}
_OUTPUT_KEYS = {"trajectory", "summary", "report", "format"}
_MOMENTUM_KEYS = {"specs", "tolerance"}
_CHECK_KEYS = {"samples", "seed", "points", "trajectory_steps"}
_FORMATS = ("csv", "json")

DEFAULT_MOMENTUM_TOL = 1e-9
DEFAULT_CHECK_SAMPLES = 8
DEFAULT_CHECK_STEPS = 25


# ---------------------------------------------------------------------------
# Config parsing


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``raw`` holds a deep copy of the parsed JSON document, so that
    ``serialize_config(parse_config(d)) == d`` for every valid ``d``.
    """

    system: str
    params: dict
    initial: dict
    steps: int
    solver: dict
    outputs: dict
    momentum: dict
    check: dict
    raw: dict


def _expect_mapping(value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a JSON object")
    return value


def _reject_unknown(mapping, allowed, where):
    extra = sorted(set(mapping) - allowed)
    if extra:
        raise ConfigError(f"unknown {where} key(s): {', '.join(extra)}")


def _expect_int(value, where, minimum=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{where} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where} must be >= {minimum}")
    return value


def _expect_number(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number")
    if positive and not value > 0:
        raise ConfigError(f"{where} must be positive")
    return float(value)


def parse_config(data):
    """Validate a parsed JSON document and return a :class:`RunConfig`."""
    data = _expect_mapping(data, "config")
    _reject_unknown(data, _TOP_KEYS, "config")

    system = _expect_mapping(data.get("system", None), "system")
    _reject_unknown(system, _SYSTEM_KEYS, "system")
    name = system.get("name")
    if not isinstance(name, str) or name not in md.FACTORIES:
        known = ", ".join(sorted(md.FACTORIES))
        raise ConfigError(f"system.name must be one of: {known}")
    params = _expect_mapping(system.get("params", {}), "system.params")

    initial = data.get("initial")
    if initial is not None:
        _expect_mapping(initial, "initial")

    steps = data.get("steps")
    if steps is not None:
        _expect_int(steps, "steps", minimum=0)

    solver = _expect_mapping(data.get("solver", {}), "solver")
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    for key, value in solver.items():
        if key == "warm_start":
            if not isinstance(value, bool):
                raise ConfigError("solver.warm_start must be a boolean")
        elif key in ("max_iters", "max_backtracks"):
            _expect_int(value, f"solver.{key}", minimum=1)
        else:
            _expect_number(value, f"solver.{key}", positive=True)

    outputs = _expect_mapping(data.get("outputs", {}), "outputs")
    _reject_unknown(outputs, _OUTPUT_KEYS, "outputs")
    for key in ("trajectory", "summary", "report"):
        if key in outputs and not isinstance(outputs[key], str):
            raise ConfigError(f"outputs.{key} must be a file name")
    fmt = outputs.get("format", "csv")
    if fmt not in _FORMATS:
        raise ConfigError("outputs.format must be 'csv' or 'json'")

    momentum = _expect_mapping(data.get("momentum", {}), "momentum")
    _reject_unknown(momentum, _MOMENTUM_KEYS, "momentum")
    if "specs" in momentum:
        specs = momentum["specs"]
        if not isinstance(specs, list) or not all(isinstance(s, str) for s in specs):
            raise ConfigError("momentum.specs must be a list of spec names")
    if "tolerance" in momentum:
        _expect_number(momentum["tolerance"], "momentum.tolerance", positive=True)

    check = _expect_mapping(data.get("check", {}), "check")
    _reject_unknown(check, _CHECK_KEYS, "check")
    if "samples" in check:
        _expect_int(check["samples"], "check.samples", minimum=1)
    if "seed" in check:
        _expect_int(check["seed"], "check.seed")
    if "trajectory_steps" in check:
        _expect_int(check["trajectory_steps"], "check.trajectory_steps", minimum=1)
    if "points" in check:
        points = check["points"]
        if not isinstance(points, list):
            raise ConfigError("check.points must be a list of initial-state objects")
        for point in points:
            _expect_mapping(point, "check.points entry")

    return RunConfig(
        system=name,
        params=dict(params),
        initial=initial,
        steps=steps,
        solver=dict(solver),
        outputs=dict(outputs),
        momentum=dict(momentum),
        check=dict(check),
        raw=copy.deepcopy(data),
    )


def serialize_config(cfg):
    """Inverse of :func:`parse_config` on valid documents."""
    return copy.deepcopy(cfg.raw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(data)


# ---------------------------------------------------------------------------
# Shared plumbing


def build_problem(cfg):
    factory = md.FACTORIES[cfg.system]
    try:
        return factory(**cfg.params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {cfg.system}: {exc}") from None


def build_initial(problem, cfg):
    if cfg.initial is None:
        raise ConfigError("this command needs an 'initial' section in the config")
    return problem.initial_builder(cfg.initial)


def solver_options(cfg):
    return sv.SolverOptions(**cfg.solver)


def _resolve_spec_names(problem, cfg, require=False):
    names = cfg.momentum.get("specs")
    if names is None:
        names = sorted(problem.momentum_specs)
    unknown = [n for n in names if n not in problem.momentum_specs]
    if unknown:
        known = ", ".join(sorted(problem.momentum_specs)) or "none"
        raise ConfigError(
            f"unknown momentum spec(s) for {problem.name}: "
            f"{', '.join(unknown)} (known: {known})"
        )
    if require and not names:
        raise ConfigError(
            f"system {problem.name} defines no momentum maps; "
            "the momentum command needs at least one"
        )
    return names


def trajectory_table(problem, trajectory):
    """Header and rows for the trajectory file.

    One row per element; the metric cells (iterations, residual norm,
    condition estimate, multipliers) describe the step that PRODUCED the
    row's element and are empty on row zero.
    """
    header = (
        ["step"]
        + list(problem.coord_names)
        + ["iterations", "residual_norm", "cond_estimate"]
        + [f"lambda_{j + 1}" for j in range(problem.k)]
    )
    rows = []
    for idx, g in enumerate(trajectory.elements):
        cells = [idx] + [float(v) for v in problem.to_row(g)]
        if idx == 0:
            cells += [None] * (3 + problem.k)
        else:
            res = trajectory.results[idx - 1]
            cells += [
                int(res.iterations),
                float(res.residual_norm),
                float(res.jacobian_condition_estimate),
            ]
            cells += [float(lam) for lam in res.multipliers]
        rows.append(cells)
    return header, rows


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _table_text(header, rows, fmt):
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(cell) for cell in row])
        return buf.getvalue()
    return json.dumps({"columns": header, "rows": rows}, indent=2) + "\n"


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    handle = tempfile.NamedTemporaryFile(
        "w",
        encoding="utf-8",
        newline="",
        dir=directory,
        prefix=os.path.basename(path) + ".",
        suffix=".tmp",
        delete=False,
    )
    try:
        with handle as fh:
            fh.write(text)
        os.replace(handle.name, path)
    except BaseException:
        try:
            os.unlink(handle.name)
        except OSError:
            pass
        raise


def _write_json(path, record):
    _atomic_write(path, json.dumps(record, indent=2, sort_keys=True) + "\n")


def _max_constraint_violation(problem, trajectory):
    if problem.k == 0:
        return 0.0
    return max(float(np.max(np.abs(problem.phi(g)))) for g in trajectory.elements)


# ---------------------------------------------------------------------------
# simulate


def run_simulate(cfg, out_dir, verbose=False):
    problem = build_problem(cfg)
    if cfg.steps is None:
        raise ConfigError("simulate needs a 'steps' count in the config")
    spec_names = _resolve_spec_names(problem, cfg)
    g0 = build_initial(problem, cfg)
    options = solver_options(cfg)
    trajectory = sv.evolve(problem, g0, cfg.steps, options)
    if verbose:
        print(f"solved {trajectory.n_steps} step(s) of {problem.name}", file=sys.stderr)

    fmt = cfg.outputs.get("format", "csv")
    header, rows = trajectory_table(problem, trajectory)
    traj_name = cfg.outputs.get("trajectory", "trajectory." + fmt)
    traj_path = os.path.join(out_dir, traj_name)
    _atomic_write(traj_path, _table_text(header, rows, fmt))

    summary = {
        "system": problem.name,
        "steps": trajectory.n_steps,
        "trajectory": traj_name,
        "final_state": {
            name: float(value)
            for name, value in zip(problem.coord_names, problem.to_row(trajectory.elements[-1]))
        },
        "max_constraint_violation": _max_constraint_violation(problem, trajectory),
    }
    if trajectory.results:
        summary["max_iterations"] = max(r.iterations for r in trajectory.results)
        summary["max_residual_norm"] = max(
            float(r.residual_norm) for r in trajectory.results
        )
    if spec_names:
        drift = 0.0
        for name in spec_names:
            spec = problem.momentum_specs[name]
            for measured, _ in dg.momentum_drift(problem, spec, trajectory):
                drift = max(drift, abs(measured))
        summary["max_momentum_drift"] = drift

    summary_path = os.path.join(out_dir, cfg.outputs.get("summary", "summary.json"))
    _write_json(summary_path, summary)
    return summary


# ---------------------------------------------------------------------------
# check


def _regularity_entry(label, report):
    regular = bool(report.left_nondegenerate and report.right_nondegenerate)
    return {
        "point": label,
        "regular": regular,
        "left_nondegenerate": bool(report.left_nondegenerate),
        "right_nondegenerate": bool(report.right_nondegenerate),
        "sigma_min_left": float(report.sigma_min_left),
        "sigma_min_right": float(report.sigma_min_right),
        "jacobian_condition": float(report.jacobian_condition),
    }


def run_check(cfg, out_dir, verbose=False):
    problem = build_problem(cfg)
    options = solver_options(cfg)
    n_samples = cfg.check.get("samples", DEFAULT_CHECK_SAMPLES)
    seed = cfg.check.get("seed", 0)
    rng = np.random.default_rng(seed)
    samples = problem.sample_states(rng, n_samples)

    entries = []
    identity_flags = []
    for idx, g in enumerate(samples):
        entries.append(_regularity_entry(f"sample_{idx}", dg.regularity_report(problem, g)))
        at_identity = problem.backend.identity(problem.backend.target(g))
        report = dg.regularity_report(problem, at_identity)
        identity_flags.append(report.left_nondegenerate and report.right_nondegenerate)
        entries.append(_regularity_entry(f"identity_{idx}", report))
    for idx, point in enumerate(cfg.check.get("points", [])):
        g = problem.initial_builder(point)
        entries.append(_regularity_entry(f"point_{idx}", dg.regularity_report(problem, g)))

    rev = dg.reversibility_report(problem, samples, options=options)
    # Structural verdict: the time-reversed system coincides with the original
    # exactly when the Lagrangian is inversion-symmetric and the constraint set
    # is inversion-invariant.  The measured dynamics defect is reported too but
    # does not enter the verdict (a one-sided potential can still happen to
    # produce reversible-looking pairs on the sampled window).
    reversible = bool(rev.lagrangian_symmetric and rev.constraint_invariant)

    steps = cfg.check.get("trajectory_steps", DEFAULT_CHECK_STEPS)
    g0 = build_initial(problem, cfg) if cfg.initial is not None else samples[0]
    trajectory = sv.evolve(problem, g0, steps, options)
    gaps = []
    for g, g_next in zip(trajectory.elements[:-1], trajectory.elements[1:]):
        plus = sv.legendre_plus(problem, g)
        minus = sv.legendre_minus(problem, g_next)
        gaps.append(float(np.max(np.abs(plus.components - minus.components))))
    max_gap = max(gaps) if gaps else 0.0
    matching = {
        "steps": len(gaps),
        "max_gap": max_gap,
        "mean_gap": float(np.mean(gaps)) if gaps else 0.0,
        "matched": max_gap <= 10.0 * options.tol_residual,
    }

    report = {
        "system": problem.name,
        "samples": n_samples,
        "seed": seed,
        "regularity": entries,
        "identity_regular": bool(all(identity_flags)),
        "all_points_regular": bool(all(e["regular"] for e in entries)),
        "reversible": reversible,
        "reversibility": {
            "lagrangian_symmetric": bool(rev.lagrangian_symmetric),
            "constraint_invariant": bool(rev.constraint_invariant),
            "dynamics_reversible": bool(rev.dynamics_reversible),
            "max_lagrangian_defect": float(rev.max_lagrangian_defect),
            "max_constraint_defect": float(rev.max_constraint_defect),
            "max_dynamics_defect": float(rev.max_dynamics_defect),
            "declared": rev.declared,
            "consistent": bool(rev.consistent),
        },
        "legendre_matching": matching,
    }
    report_name = cfg.outputs.get("report", "check_report.json")
    _write_json(os.path.join(out_dir, report_name), report)
    if verbose:
        print(f"checked {problem.name}: reversible={reversible}", file=sys.stderr)
    report["report"] = report_name
    return report


# ---------------------------------------------------------------------------
# momentum


def momentum_report(problem, spec_names, trajectory, tolerance=DEFAULT_MOMENTUM_TOL):
    """Per-step drift table for each named momentum map.

    measured is the change of the momentum value across the step, predicted
    the value the discrete evolution identity assigns to it; their gap is the
    identity defect and should sit at solver tolerance for true symmetries.
    """
    specs = {}
    worst = 0.0
    for name in spec_names:
        spec = problem.momentum_specs[name]
        rows = []
        max_gap = 0.0
        max_drift = 0.0
        for k, (measured, predicted) in enumerate(dg.momentum_drift(problem, spec, trajectory)):
            gap = abs(measured - predicted)
            rows.append([k + 1, measured, predicted, gap])
            max_gap = max(max_gap, gap)
            max_drift = max(max_drift, abs(measured))
        specs[name] = {
            "max_abs_drift": max_drift,
            "max_identity_gap": max_gap,
            "within_tolerance": max_gap <= tolerance,
            "rows": rows,
        }
        worst = max(worst, max_gap)
    return {
        "specs": specs,
        "max_identity_gap": worst,
        "tolerance": tolerance,
        "within_tolerance": worst <= tolerance,
    }


def run_momentum(cfg, out_dir, verbose=False):
    problem = build_problem(cfg)
    if cfg.steps is None:
        raise ConfigError("momentum needs a 'steps' count in the config")
    spec_names = _resolve_spec_names(problem, cfg, require=True)
    g0 = build_initial(problem, cfg)
    trajectory = sv.evolve(problem, g0, cfg.steps, solver_options(cfg))
    tolerance = cfg.momentum.get("tolerance", DEFAULT_MOMENTUM_TOL)
    report = momentum_report(problem, spec_names, trajectory, tolerance)
    report["system"] = problem.name
    report["steps"] = trajectory.n_steps

    report_name = cfg.outputs.get("report", "momentum_report.json")
    _write_json(os.path.join(out_dir, report_name), report)
    if verbose:
        print(
            f"momentum check on {problem.name}: "
            f"max identity gap {report['max_identity_gap']:.3e}",
            file=sys.stderr,
        )

    record = {key: value for key, value in report.items() if key != "specs"}
    record["specs"] = {
        name: {key: value for key, value in entry.items() if key != "rows"}
        for name, entry in report["specs"].items()
    }
    record["report"] = report_name
    return record


# ---------------------------------------------------------------------------
# Entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nhmech",
        description="Discrete nonholonomic mechanics: simulate, check, momentum.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, helptext in (
        ("simulate", "evolve the configured system and write the trajectory"),
        ("check", "regularity sweep, reversibility report and Legendre matching"),
        ("momentum", "per-step momentum drift against the predicted values"),
    ):
        cmd = sub.add_parser(command, help=helptext)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--out", default=".", help="output directory (default: .)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="reserved; runs are deterministic and ignore it")
        cmd.add_argument("--verbose", action="store_true", help="progress notes on stderr")
    return parser


_RUNNERS = {"simulate": run_simulate, "check": run_check, "momentum": run_momentum}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        record = _RUNNERS[args.command](cfg, args.out, verbose=args.verbose)
        print(json.dumps(record, indent=2, sort_keys=True))
        return EXIT_OK
    except (ConfigError, ConstraintViolationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularError, NoConvergenceError) as exc:
        step = getattr(exc, "step_index", None)
        where = f" at step {step}" if step is not None else ""
        print(f"solver failure{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NhError as exc:
        step = getattr(exc, "step_index", None)
        where = f" at step {step}" if step is not None else ""
        print(f"run failed{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
