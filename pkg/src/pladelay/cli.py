"""Command-line front end: ``deployment``, ``detect``, ``delay`` and ``simulate``.

Scenario files are YAML (see ``demos/scenarios``). ``--set key.path=value``
overrides single fields and ``--sweep key.path=start:stop:steps[:log]`` (or
``key.path=v1,v2,...``) repeats the computation over a grid. Rows are written
in sweep order whatever the worker pool does. Failures print a JSON error
list on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .channel import square_grid_deployment
from .config import DEFAULT_SEED, ConfigError, ScenarioFile, load_scenario, parse_number, set_path, write_deployment
from .experiments import DELAY_COLUMNS, DETECT_COLUMNS, delay_row, detect_rows, simulate_with_bound
from .sim import SIM_COLUMNS, format_number
from .specfun import DomainError


def parse_sweep(text: str):
    """``key=start:stop:steps[:log]`` or ``key=v1,v2,...`` into ``(key, values)``."""
    if "=" not in text:
        raise ConfigError([{"field": "--sweep", "line": None, "message": f"expected key=values, got {text!r}"}])
    key, spec = text.split("=", 1)
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
                raise ValueError("expected start:stop:steps[:log]")
            start, stop, steps = parse_number(parts[0]), parse_number(parts[1]), int(parts[2])
            if steps < 1:
                raise ValueError("steps must be >= 1")
            if len(parts) == 4:
                values = np.geomspace(start, stop, steps)
            else:
                values = np.linspace(start, stop, steps)
            values = [float(v) for v in values]
        else:
            values = [parse_number(v) for v in spec.split(",")]
    except (ValueError, SyntaxError) as exc:
        raise ConfigError([{"field": "--sweep", "line": None, "message": str(exc)}])
    return key.strip(), values


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value == float("inf"):
        return "unbounded"
    return format_number(float(value))


def write_rows(path, columns, rows):
    fh = open(path, "w", newline="", encoding="utf-8") if path and path != "-" else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _base_scenario(args) -> ScenarioFile:
    sc = load_scenario(args.scenario) if args.scenario else ScenarioFile()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError([{"field": "--set", "line": None, "message": f"expected key=value, got {item!r}"}])
        key, value = item.split("=", 1)
        sc = set_path(sc, key.strip(), value)
    if args.seed is not None:
        sc = set_path(sc, "sim.seed", args.seed)
    return sc


def _sweep_points(sc: ScenarioFile, sweep):
    if not sweep:
        return [(None, sc)]
    key, values = parse_sweep(sweep)
    ints = isinstance(_lookup(sc, key), int) and not isinstance(_lookup(sc, key), bool)
    points = []
    for v in values:
        val = int(round(v)) if ints else v
        points.append((val, set_path(sc, key, val)))
    return points


def _lookup(sc, key):
    obj = sc
    for part in key.split("."):
        if not hasattr(obj, part):
            raise ConfigError([{"field": key, "line": None, "message": "unknown field"}])
        obj = getattr(obj, part)
    return obj


def _delay_point(item):
    value, sc = item
    return delay_row(sc, value)


def _detect_point(item):
    value, sc = item
    return detect_rows(sc, value)


def _run_points(fn, points, threads):
    if threads > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, points))
    return [fn(p) for p in points]


def cmd_deployment(args) -> int:
    dep = square_grid_deployment(nx=args.nx, ny=args.ny, spacing=args.spacing, origin=tuple(args.origin))
    write_deployment(dep, args.out)
    return 0


def cmd_detect(args) -> int:
    sc = _base_scenario(args)
    results = _run_points(_detect_point, _sweep_points(sc, args.sweep), args.threads)
    write_rows(args.out, DETECT_COLUMNS, [r for rows in results for r in rows])
    return 0


def cmd_delay(args) -> int:
    sc = _base_scenario(args)
    rows = _run_points(_delay_point, _sweep_points(sc, args.sweep), args.threads)
    write_rows(args.out, DELAY_COLUMNS, rows)
    return 0


def cmd_simulate(args) -> int:
    sc = _base_scenario(args)
    trace, bound = simulate_with_bound(sc)
    rows = [dict(r) for r in trace.rows(bound)]
    write_rows(args.out, list(SIM_COLUMNS) + ["bound"], rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pladelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    dep = sub.add_parser("deployment", help="write the square-grid deployment file")
    dep.add_argument("--out", required=True)
    dep.add_argument("--nx", type=int, default=5)
    dep.add_argument("--ny", type=int, default=5)
    dep.add_argument("--spacing", type=float, default=5.0)
    dep.add_argument("--origin", type=float, nargs=2, default=(0.0, 0.0))
    dep.set_defaults(func=cmd_deployment)

    for name, func, helptext in (
        ("detect", cmd_detect, "authentication error rates and bounds"),
        ("delay", cmd_delay, "delay guarantees and violation bounds"),
        ("simulate", cmd_simulate, "simulated violation curve with the bound alongside"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", help="scenario YAML file (defaults apply when omitted)")
        p.add_argument("--out", default="-", help="output CSV (stdout by default)")
        p.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one scenario field")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        if name != "simulate":
            p.add_argument("--sweep", metavar="KEY=START:STOP:STEPS[:log]")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        json.dump({"errors": exc.errors}, sys.stderr)
        sys.stderr.write("\n")
    except (DomainError, OSError, ArithmeticError, ValueError) as exc:
        json.dump({"errors": [{"field": None, "line": None, "message": f"{type(exc).__name__}: {exc}"}]}, sys.stderr)
        sys.stderr.write("\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
