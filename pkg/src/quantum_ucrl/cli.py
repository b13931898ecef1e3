"""Command-line entry point: ``qucrl run|sweep|summarize|emit-plot-data|gen-env``.

Exit codes: 0 success, 2 configuration error, 3 run ended early or degenerate
(partial output is still written).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import envs, harness
from .envs import EnvironmentFileError
from .mdp import ConfigurationError, InvalidModelError

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3
OUTPUT_ROOT_VAR = "QUCRL_OUTPUT_ROOT"


def _default_out() -> str:
    return os.environ.get(OUTPUT_ROOT_VAR, "qucrl-output")


def _optional_float(text: str):
    return None if text.lower() == "none" else float(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = harness.ExperimentConfig.__dataclass_fields__
    p.add_argument("--algorithm", choices=harness.ALGORITHMS, default=d["algorithm"].default)
    p.add_argument("--T", type=int, default=d["T"].default, help="episode budget")
    p.add_argument("--delta", type=float, default=d["delta"].default)
    p.add_argument("--env", dest="env_path", default=None, help="environment JSON file (overrides generator flags)")
    p.add_argument("--env-kind", choices=("tabular", "linmix"), default="tabular")
    for name in ("S", "A", "H", "d"):
        p.add_argument(f"--{name}", type=int, default=d[name].default)
    p.add_argument("--gap", type=_optional_float, default=None)
    p.add_argument("--env-seed", type=int, default=0)
    p.add_argument("--c1", type=float, default=d["c1"].default)
    p.add_argument("--c-amp", type=_optional_float, default=None, help="default: consistent with c1")
    p.add_argument("--c-mean", type=float, default=d["c_mean"].default)
    p.add_argument("--c-K", dest="c_K", type=float, default=d["c_K"].default)
    p.add_argument("--lambda", dest="lam", type=float, default=d["lam"].default)
    p.add_argument("--epsilon-floor", type=float, default=d["epsilon_floor"].default)
    p.add_argument("--c-classical", type=float, default=d["c_classical"].default)
    p.add_argument("--c-beta", type=float, default=d["c_beta"].default)
    p.add_argument("--noise", choices=("zero", "uniform", "boundary"), default="uniform")
    p.add_argument("--failure-injection", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="output_dir", default=None, help=f"output directory (default ${OUTPUT_ROOT_VAR})")


def _config_from_args(args) -> harness.ExperimentConfig:
    names = {f.name for f in dataclasses.fields(harness.ExperimentConfig)}
    values = {k: v for k, v in vars(args).items() if k in names}
    values["output_dir"] = values.get("output_dir") or _default_out()
    return harness.ExperimentConfig(**values)


def _partial(record) -> bool:
    return bool(record.summary.get("degenerate") or record.summary.get("terminated_early"))


def _write(record, out: str) -> dict:
    try:
        return record.write(out)
    except OSError as exc:
        raise ConfigurationError(f"cannot write to {out}: {exc.strerror or exc}") from None


def cmd_run(args) -> int:
    config = _config_from_args(args)
    record = harness.run(config)
    paths = _write(record, config.output_dir)
    print(f"{record.algorithm} seed={record.seed} episodes={record.n_episodes} "
          f"regret={record.final_regret:.6g} -> {paths['rows']}")
    return EXIT_PARTIAL if _partial(record) else EXIT_OK


def _parse_grid(items, grid_file) -> dict:
    grid: dict = {}
    if grid_file:
        try:
            grid.update(json.loads(Path(grid_file).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read grid file {grid_file}: {exc}") from None
    fields = {f.name: f for f in dataclasses.fields(harness.ExperimentConfig)}
    for item in items or ():
        key, sep, raw = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in fields:
            raise ConfigurationError(f"malformed grid entry {item!r}; expected field=v1,v2,...")
        default = fields[key].default
        conv = type(default) if default is not None and not isinstance(default, bool) else None
        values = []
        for token in raw.split(","):
            token = token.strip()
            if not token:
                raise ConfigurationError(f"empty value in grid entry {item!r}")
            try:
                values.append(conv(token) if conv else json.loads(token))
            except (ValueError, json.JSONDecodeError):
                raise ConfigurationError(f"bad value {token!r} for {key}") from None
        grid[key] = values
    if not grid:
        raise ConfigurationError("sweep needs at least one --grid entry or a --grid-file")
    return grid


def cmd_sweep(args) -> int:
    template = _config_from_args(args)
    grid = _parse_grid(args.grid, args.grid_file)
    records = harness.sweep(template, grid, workers=args.workers)
    partial = False
    for record in records:
        paths = _write(record, template.output_dir)
        partial |= _partial(record)
        print(f"{record.algorithm} {record.config_hash[:12]} seed={record.seed} "
              f"regret={record.final_regret:.6g} -> {paths['rows']}")
    return EXIT_PARTIAL if partial else EXIT_OK


def _load_dir(directory) -> list:
    if not Path(directory).is_dir():
        raise ConfigurationError(f"{directory} is not a directory")
    records = harness.load_records(directory)
    if not records:
        raise ConfigurationError(f"no run records found in {directory}")
    return records


def cmd_summarize(args) -> int:
    fits = harness.summarize(_load_dir(args.directory))
    if args.json:
        print(json.dumps([f.as_dict() for f in fits], indent=2))
        return EXIT_OK
    print(f"{'algorithm':16} {'config':12} {'runs':>4} {'T':>8} {'regret':>12} {'R(T)/R(T/4)':>12} "
          f"{'log res':>9} {'sqrt res':>9} verdict")
    for f in fits:
        print(f"{f.algorithm:16} {f.config_hash[:12]:12} {f.n_runs:>4} {f.T:>8} {f.final_regret:>12.5g} "
              f"{f.quarter_ratio:>12.4f} {f.log_residual:>9.2e} {f.sqrt_residual:>9.2e} {f.verdict}")
    return EXIT_OK


def cmd_emit(args) -> int:
    out = args.out or str(Path(args.directory) / "plot")
    try:
        paths = harness.emit_plot_data(_load_dir(args.directory), out)
    except OSError as exc:
        raise ConfigurationError(f"cannot write to {out}: {exc.strerror or exc}") from None
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_gen_env(args) -> int:
    mdp = envs.generate(args.kind, S=args.S, A=args.A, H=args.H, d=args.d, gap=args.gap, seed=args.seed)
    text = envs.dumps(mdp)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise ConfigurationError(f"cannot write {args.out}: {exc.strerror or exc}") from None
        print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qucrl", description="Quantum-access exploration experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one seeded run")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid of runs")
    _add_config_flags(p)
    p.add_argument("--grid", action="append", metavar="FIELD=V1,V2", help="repeatable, e.g. --grid seed=0,1,2")
    p.add_argument("--grid-file", help="JSON object mapping fields to value lists")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("summarize", help="growth fits over a directory of run records")
    p.add_argument("directory")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("emit-plot-data", help="write two-column regret curves and fits")
    p.add_argument("directory")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("gen-env", help="generate an environment file")
    p.add_argument("--kind", choices=("tabular", "linmix"), default="tabular")
    for name, default in (("S", 3), ("A", 2), ("H", 3), ("d", 2)):
        p.add_argument(f"--{name}", type=int, default=default)
    p.add_argument("--gap", type=_optional_float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="file path, or - for stdout")
    p.set_defaults(func=cmd_gen_env)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, EnvironmentFileError, InvalidModelError) as exc:
        print(f"qucrl: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
