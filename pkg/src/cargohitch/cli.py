"""Command-line interface: generate, solve, sweep and report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .generator import GenerationError, GeneratorConfig, generate_instance, preset
from .graph import GraphError, build_graph
from .model import InstanceError, dumps_instance, load_instance
from .report import ReportError, SweepGrid, sensitivity_sweep, to_csv, utilization_report
from .solve import ALGORITHMS, Solution, SolveConfig, SolveError, solve

OUT_ENV = "CARGOHITCH_OUT"
LOG_FIELDS = ("step", "phase", "lb", "ub", "rmp", "columns", "nodes")

log = logging.getLogger("cargohitch")


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _generator_config(args) -> GeneratorConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            return GeneratorConfig.from_dict(json.load(fh))
    return preset(args.preset)


def _solve_config(args) -> SolveConfig:
    kw = {}
    for name in ("time_limit", "branch_reserve", "epsilon", "phi", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return SolveConfig(**kw)


def log_csv(solution: Solution, timings: bool = False) -> str:
    fields = LOG_FIELDS + (("time",) if timings else ())
    rows = []
    for i, e in enumerate(solution.log, start=1):
        entry = {"step": i, "phase": e.get("phase", "cg"), **{k: v for k, v in e.items() if k != "phase"}}
        rows.append(["" if entry.get(f) is None else entry[f] for f in fields])
    return to_csv(fields, rows)


def cmd_generate(args) -> int:
    inst = generate_instance(_generator_config(args), args.seed)
    text = dumps_instance(inst)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
    else:
        out = _out_dir(args) / f"{_generator_config(args).name}-{args.seed}.json"
    _write(out, text)
    print(out)
    return 0


def cmd_solve(args) -> int:
    pg = build_graph(load_instance(args.instance))
    sol = solve(pg, args.algo, _solve_config(args))
    out = _out_dir(args)
    stem = f"{Path(args.instance).stem}-{args.algo}"
    _write(out / f"{stem}.json", sol.to_json(pg, timings=args.timings))
    _write(out / f"{stem}-log.csv", log_csv(sol, timings=args.timings))
    print(f"status={sol.status} objective={sol.objective:.6f} lower_bound={sol.lower_bound:.6f} gap={sol.gap:.6g}")
    print(f"accepted={len(sol.accepted)} rejected={len(sol.rejected)} -> {out / (stem + '.json')}")
    return 0


def cmd_sweep(args) -> int:
    grid = SweepGrid()
    if args.grid_file:
        with open(args.grid_file, encoding="utf-8") as fh:
            grid = SweepGrid.from_dict(json.load(fh))
    if args.seeds:
        grid = SweepGrid(grid.truck_externality, grid.transit_cost, tuple(args.seeds), grid.economics)
    if args.instance:
        template = load_instance(args.instance)
        name = Path(args.instance).stem
    else:
        template = _generator_config(args)
        name = template.name
    cfg = _solve_config(args) if args.epsilon is not None else SolveConfig(epsilon=1e-9)
    res = sensitivity_sweep(template, grid, args.algo, cfg)
    out = _out_dir(args) / f"{name}-sweep.csv"
    _write(out, res.csv())
    for c, e, k, msg in res.failures:
        print(f"cell c_T={c:g} truck={e:g} seed#{k} failed: {msg}", file=sys.stderr)
    print(out)
    return 0


def cmd_report(args) -> int:
    pg = build_graph(load_instance(args.instance))
    if args.solution:
        with open(args.solution, encoding="utf-8") as fh:
            sol = Solution.from_dict(pg, json.load(fh))
    else:
        sol = solve(pg, args.algo, _solve_config(args))
    out = _out_dir(args)
    stem = Path(args.instance).stem
    for name, text in utilization_report(sol, pg, args.bucket).csv().items():
        _write(out / f"{stem}-{name}", text)
    print(out)
    return 0


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default="pnb")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--branch-reserve", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cargohitch", description="Freight in the spare capacity of scheduled transit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or the working directory)")

    p = sub.add_parser("generate", parents=[common], help="write a synthetic instance")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", default="tiny-oracle")
    src.add_argument("--config", help="JSON generator configuration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="instance file path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", parents=[common], help="solve an instance file")
    p.add_argument("--instance", required=True)
    _solver_flags(p)
    p.add_argument("--timings", action="store_true", help="include wall-clock times in the outputs")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", parents=[common], help="rejection share over a cost grid")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--instance")
    src.add_argument("--preset", default="sweep")
    src.add_argument("--config")
    p.add_argument("--grid-file", help="JSON grid definition")
    p.add_argument("--seeds", type=int, nargs="+")
    _solver_flags(p)
    p.set_defaults(func=cmd_sweep, algo="bnp")

    p = sub.add_parser("report", parents=[common], help="utilization CSVs of a solution")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", help="solution JSON; solved afresh when omitted")
    p.add_argument("--bucket", type=int, default=300, help="time bucket in seconds")
    _solver_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InstanceError, GenerationError, GraphError, ReportError, SolveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
