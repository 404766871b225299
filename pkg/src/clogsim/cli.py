"""Command-line entry point: ``clogsim <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cell import CellSolveError
from .macro import NumericalError, StabilityError
from .scenario import PRESETS, ConfigError, MonitorAbort, ScenarioConfig, get_table, read_snapshot, render_heatmap, run
from .table import TableError, build_table, load_table, save_table, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("clogsim")


def _cmd_build_table(args) -> int:
    table = build_table(args.r_min, args.dr, (args.ntheta, args.nrho), workers=args.workers)
    save_table(table, args.out)
    print(f"wrote {len(table)} entries to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = ScenarioConfig.loads(Path(args.config).read_text())
    if args.table:
        table = load_table(args.table, expected_meta=config.table.mesh_meta)
    else:
        table = get_table(config.table)
    result = run(config, table, out_dir=args.out_dir, scheme=args.scheme, monitor=args.monitor)
    print(
        f"done: steps={result.n_steps} dt={result.dt:.6g} clogged_fraction={result.clogged_fraction:.4f} "
        f"max_r={result.max_r:.6f} violations={result.violations} wall_time={result.wall_time:.2f}s"
    )
    return EXIT_OK


def _cmd_preset(args) -> int:
    text = PRESETS[args.name]().dumps()
    if args.dump:
        Path(args.dump).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_validate(args) -> int:
    table = load_table(args.table)
    validate(table)
    print(f"{args.table}: {len(table)} entries, mesh {table.mesh_meta}, ok")
    return EXIT_OK


def _cmd_render(args) -> int:
    meta, arr = read_snapshot(args.field_csv)
    title = " ".join(f"{k}={v}" for k, v in meta.items() if k in ("field", "t"))
    render_heatmap(arr, args.out, palette=args.palette, title=title)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clogsim", description="Two-scale colloid deposition and clogging simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-table", help="solve cell problems over a radius partition")
    p.add_argument("--r-min", type=float, default=0.02)
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--ntheta", type=int, default=64)
    p.add_argument("--nrho", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_table)

    p = sub.add_parser("run", help="run a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--table", help="table file; built from the config when omitted")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scheme", choices=("explicit", "picard"))
    p.add_argument("--monitor", choices=("warn", "abort"))
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("preset", help="print or dump a preset config")
    p.add_argument("--name", choices=sorted(PRESETS), required=True)
    p.add_argument("--dump", metavar="PATH", help="write to PATH instead of stdout")
    p.set_defaults(func=_cmd_preset)

    p = sub.add_parser("validate", help="re-check all table invariants")
    p.add_argument("--table", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("render", help="render a snapshot CSV as an SVG heatmap")
    p.add_argument("--field-csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--palette", default="viridis")
    p.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except (ConfigError, TableError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, MonitorAbort, CellSolveError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed numbers in inputs end up here
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
