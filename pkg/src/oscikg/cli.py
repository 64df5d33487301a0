"""Command-line front end: ``oscikg run | converge | sweep | preset``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

import argparse
import json
import struct
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from .expr import ExpressionError
from .harness import Problem, ReferenceConfig, regime_sweep, run_convergence_study, write_csv
from .integrator import NumericalAbort, SchemeId, integrate
from .presets import PRESETS, preset_config
from .spectral import rms_norm

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
SNAPSHOT_MAGIC = b"OSCIKG1\0"

_COMPONENT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["amplitude", "omega"],
    "properties": {
        "amplitude": {"type": "string"},
        "omega": {"type": "number"},
        "form": {"enum": ["cos", "sin", "cexp"]},
    },
}

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem", "schemes", "steps"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["domain", "modes", "psi0", "horizon"],
            "properties": {
                "domain": _PAIR,
                "modes": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "dim": {"enum": [1, 2]},
                "laplacian_scale": {"type": "number", "exclusiveMinimum": 0},
                "forcing": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "alpha": {"type": "string"},
                        "components": {"type": "array", "items": _COMPONENT},
                    },
                },
                "psi0": {"type": "string"},
                "phi0": {"type": "string"},
                "horizon": _PAIR,
            },
        },
        "schemes": {
            "type": "array",
            "minItems": 1,
            "items": {"enum": [s.value for s in SchemeId]},
        },
        "steps": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "norm_s": {"type": "number", "minimum": 0},
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "substeps_per_unit": {"type": "integer", "minimum": 1},
                "rule": {"enum": ["midpoint", "magnus4"]},
                "mode": {"enum": ["auto", "dense", "matrix_free"]},
            },
        },
        "omegas": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "output": {"type": "string"},
        "seed": {"type": "integer"},
        "jobs": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(Exception):
    pass


def validate_config(config):
    """Check ``config`` against the schema and build its :class:`Problem`.

    Raises :class:`ConfigError` naming the JSON path of the first problem found.
    """
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{err.json_path}: {err.message}")
    try:
        problem = Problem.from_dict(config["problem"])
        problem.forcing()
        model = problem.model()
        state = problem.initial_state(model.grid)
    except (ValueError, ExpressionError) as exc:
        raise ConfigError(f"$.problem: {exc}") from None
    if not state.is_finite:
        raise ConfigError("$.problem: initial data is not finite on the grid")
    return problem


def _parse_list(text, kind):
    try:
        return [kind(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def load_config(args):
    """Config from ``--config`` or ``--preset`` with command-line overrides applied."""
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    if args.preset:
        try:
            config = preset_config(args.preset, omega=args.omega, epsilon=args.epsilon)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    else:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError("$: config must be a JSON object")
        if args.epsilon is not None:
            raise ConfigError("--epsilon only applies to --preset example1")
        if args.omega is not None:
            for comp in config.get("problem", {}).get("forcing", {}).get("components", []):
                comp["omega"] = args.omega
    if args.scheme:
        config["schemes"] = [args.scheme]
    if args.steps:
        config["steps"] = _parse_list(args.steps, int)
    if args.modes is not None:
        config.setdefault("problem", {})["modes"] = args.modes
    if args.jobs is not None:
        config["jobs"] = args.jobs
    if args.norm_s is not None:
        config["norm_s"] = args.norm_s
    if getattr(args, "omegas", None):
        config["omegas"] = _parse_list(args.omegas, float)
    return config


def _reference_config(config):
    ref = config.get("reference", {})
    return ReferenceConfig(
        substeps_per_unit=ref.get("substeps_per_unit", 4000),
        rule=ref.get("rule", "magnus4"),
        mode=ref.get("mode", "auto"),
    )


def write_snapshot(path, state):
    """Binary snapshot: magic, uint32 ndim, uint32 sizes, then psi and dpsi as float64 LE."""
    psi = np.ascontiguousarray(state.psi, dtype="<f8")
    dpsi = np.ascontiguousarray(state.dpsi, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack(f"<I{psi.ndim}I", psi.ndim, *psi.shape))
        fh.write(psi.tobytes())
        fh.write(dpsi.tobytes())


def read_snapshot(path):
    data = Path(path).read_bytes()
    if data[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    (ndim,) = struct.unpack_from("<I", data, 8)
    shape = struct.unpack_from(f"<{ndim}I", data, 12)
    offset = 12 + 4 * ndim
    count = int(np.prod(shape))
    fields = np.frombuffer(data, dtype="<f8", count=2 * count, offset=offset)
    return fields[:count].reshape(shape), fields[count:].reshape(shape)


def cmd_run(config, out=None):
    problem = validate_config(config)
    scheme = SchemeId(config["schemes"][0])
    n_steps = config["steps"][0]
    model = problem.model()
    state0 = problem.initial_state(model.grid)
    start = time.perf_counter()
    final = integrate(scheme, model, state0, problem.t0, problem.T, n_steps)
    runtime = time.perf_counter() - start
    snap = Path(out) if out else Path(config.get("output", "run.csv")).with_suffix(".bin")
    write_snapshot(snap, final)
    summary = {
        "scheme": scheme.value,
        "n_steps": n_steps,
        "h": (problem.T - problem.t0) / n_steps,
        "t": final.t,
        "norm_psi": rms_norm(final.psi),
        "norm_dpsi": rms_norm(final.dpsi),
        "runtime_s": runtime,
        "snapshot": str(snap),
    }
    snap.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def _print_orders(report):
    print(f"{report.scheme}:")
    print(f"  {'n_steps':>8} {'h':>12} {'error_l2':>12} {'order':>7}")
    orders = [None] + list(report.orders)
    for row, order in zip(report.rows, orders):
        o = "" if order is None else f"{order:7.3f}"
        print(f"  {row.n_steps:8d} {row.h:12.4e} {row.error_l2:12.4e} {o:>7}")


def cmd_converge(config, out=None):
    problem = validate_config(config)
    ref_cfg = _reference_config(config)
    steps = sorted(config["steps"])
    rows = []
    for scheme in config["schemes"]:
        report = run_convergence_study(
            problem, scheme, steps, norm_s=config.get("norm_s", 0.0), reference=ref_cfg, jobs=config.get("jobs", 1)
        )
        _print_orders(report)
        rows.extend(report.csv_rows())
    path = out or config.get("output", "converge.csv")
    write_csv(path, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(config, out=None):
    problem = validate_config(config)
    if not problem.components:
        raise ConfigError("$.problem.forcing.components: a sweep needs an oscillatory component")
    ref_cfg = _reference_config(config)
    omegas = config.get("omegas") or [1.0, 10.0, 100.0, 1000.0]
    rows = []
    for scheme in config["schemes"]:
        table = regime_sweep(problem, omegas, config["steps"], scheme, reference=ref_cfg, jobs=config.get("jobs", 1))
        print(f"{table.scheme}: fitted bound constant C = {table.constant:.3e}")
        rows.extend(table.csv_rows())
    path = out or config.get("output", "sweep.csv")
    write_csv(path, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_preset(name, args):
    try:
        config = preset_config(name, omega=args.omega, epsilon=args.epsilon)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if args.steps:
        config["steps"] = _parse_list(args.steps, int)
    if args.modes is not None:
        config["problem"]["modes"] = args.modes
    if args.scheme:
        config["schemes"] = [args.scheme]
    validate_config(config)
    text = json.dumps(config, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _common(parser):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="start from a built-in configuration")
    _overrides(parser)


def _overrides(parser):
    parser.add_argument("--scheme", choices=[s.value for s in SchemeId])
    parser.add_argument("--steps", help="comma-separated step counts")
    parser.add_argument("--modes", type=int, help="grid points per axis")
    parser.add_argument("--omega", type=float, help="override every component frequency")
    parser.add_argument("--epsilon", type=float, help="oscillation amplitude (example1)")
    parser.add_argument("--out", help="output path")
    parser.add_argument("--jobs", type=int, help="worker processes (default 1)")
    parser.add_argument("--norm-s", dest="norm_s", type=float, help="Sobolev index of the error norm")


def build_parser():
    parser = argparse.ArgumentParser(prog="oscikg", description="Klein-Gordon integrators for oscillatory potentials")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="single integration, writes a state snapshot"))
    _common(sub.add_parser("converge", help="convergence study, writes CSV"))
    sweep = sub.add_parser("sweep", help="frequency x step-size sweep, writes CSV")
    _common(sweep)
    sweep.add_argument("--omegas", help="comma-separated frequencies")
    preset = sub.add_parser("preset", help="print a built-in configuration as JSON")
    preset.add_argument("name")
    _overrides(preset)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            return cmd_preset(args.name, args)
        config = load_config(args)
        command = {"run": cmd_run, "converge": cmd_converge, "sweep": cmd_sweep}[args.command]
        return command(config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort at step {exc.step_index}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
