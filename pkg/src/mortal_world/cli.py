"""Command line entry point: ``mortal-world <command> ...``.

Exit codes: 0 success, 2 bad configuration or usage, 3 capacity budget
exceeded, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .config import load_config, load_grid
from .empowerment import DEFAULT_TOL, empowerment_map
from .errors import CapacityBudgetError, ConfigError, UsageError
from .mdp import load_mdp, validate

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_IO = 0, 2, 3, 4


def _model(args):
    """A bare MDP from a JSON file, or the analysis model of a TOML config."""
    path = Path(args.config)
    if path.suffix == ".json":
        return load_mdp(path)
    return load_config(path).analysis_mdp()


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        fh.write(text)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seeds is not None:
        cfg = cfg.with_value("run.num_seeds", args.seeds)
    res = harness.run_experiment(cfg, args.out)
    for kind, stats in sorted(res.summary.items()):
        print(
            f"{kind}: seeds={stats['num_seeds']} median_survival={stats['survival_median']:g} "
            f"deaths={stats['deaths']}"
        )
    print(f"wrote {res.output_dir}")
    return EXIT_OK


def cmd_empowerment_map(args) -> int:
    mdp = _model(args)
    emap = empowerment_map(mdp, args.n, tol=args.tol, threads=harness.thread_count())
    _write_text(args.out, harness.empowerment_map_csv(mdp, emap))
    return EXIT_OK


def cmd_viability(args) -> int:
    mdp = _model(args)
    _write_text(args.out, json.dumps(harness.viability_report(mdp), sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = load_grid(args.grid)
    table = harness.sweep(cfg, grid, args.out)
    out = Path(args.out if args.out is not None else cfg.output["directory"])
    print(f"{len(table)} rows written to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.config)
    if path.suffix == ".json":
        mdp = load_mdp(path)  # rejects invalid models
        print(f"ok: {mdp.num_states} states, {mdp.num_actions} actions, {len(validate(mdp))} violations")
    else:
        cfg = load_config(path)
        print(f"ok: env={cfg.env['kind']} agents={','.join(cfg.agent_kinds)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mortal-world", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run seeded rollouts and write records and summaries")
    p.add_argument("config", help="experiment TOML file")
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.add_argument("--seeds", type=int, help="override run.num_seeds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("empowerment-map", help="n-step empowerment of every state as CSV")
    p.add_argument("config", help="experiment TOML or MDP JSON file")
    p.add_argument("--n", type=int, required=True, help="action-sequence horizon")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.set_defaults(func=cmd_empowerment_map)

    p = sub.add_parser("viability", help="viability kernel and per-state integrity as JSON")
    p.add_argument("config", help="experiment TOML or MDP JSON file")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_viability)

    p = sub.add_parser("sweep", help="run a config over a parameter grid")
    p.add_argument("config")
    p.add_argument("--grid", required=True, help="TOML file of dotted paths to value lists")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a config or MDP file without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
