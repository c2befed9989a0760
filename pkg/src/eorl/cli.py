"""Command line entry point: ``eorl run|aggregate|plot-data|ablate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .agents import ALGORITHMS
from .harness import ConfigError, ExperimentConfig
from .nn import NumericalError

# flag name -> config key
_OVERRIDES = {
    "env": "env", "size": "size", "subgoals": "subgoals", "stochasticity": "stochasticity",
    "episodes": "episodes", "decay": "decay", "seeds": "seeds", "master_seed": "master_seed",
    "lr": "lr", "batch_size": "batch_size", "epochs": "epochs", "optimizer": "optimizer",
}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--env", choices=["bitflip", "grid"])
    p.add_argument("--size", help="bit count (bitflip) or grid side (grid)")
    p.add_argument("--subgoals", choices=["0", "1", "2+", "2-"])
    p.add_argument("--stochasticity")
    p.add_argument("--episodes")
    p.add_argument("--decay", help="epsilon decay per episode (default depends on --episodes)")
    p.add_argument("--seeds", help="seed count (e.g. 10) or list/range (e.g. 0,3,5-7)")
    p.add_argument("--master-seed", dest="master_seed")
    p.add_argument("--lr")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--epochs", help="minibatches per policy per episode")
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other config key (repeatable)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def _base_values(args) -> dict:
    values = harness.parse_flat(args.config.read_text()) if args.config else {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    for item in args.set:
        values.update(harness.parse_flat(item))
    return values


def _algos(spec: str | None, default: str) -> list[str]:
    spec = spec or default
    if spec == "all":
        return list(ALGORITHMS)
    algos = [a.strip() for a in spec.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad:
        raise ConfigError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)} or all")
    return algos


def cmd_run(args) -> int:
    values = _base_values(args)
    if args.n is not None:
        values["n"] = args.n
    algos = _algos(args.algo, values.pop("algo", "EORL-05-05"))
    if args.suite:
        env_keys = {"env", "size", "subgoals", "stochasticity", "episodes", "decay"}
        overrides = {k: harness.coerce_value(k, v) for k, v in values.items() if k not in env_keys}
        experiments = harness.table_suite(args.suite, **overrides)
    else:
        experiments = [ExperimentConfig.from_mapping(values)]
    configs = [exp.replace(algo=a) for exp in experiments for a in algos]
    if args.dry_run:
        for c in configs:
            print(f"{c.run_id}  seeds={len(c.seeds)}")
        print(f"{len(experiments)} experiments x {len(algos)} algorithms = {len(configs)} runs")
        return 0
    paths = harness.run(configs, args.out, args.workers)
    print(f"wrote {len(paths)} run logs to {args.out}")
    return 0


def cmd_aggregate(args) -> int:
    rows = harness.aggregate(harness.read_logs(args.logs), window=args.last)
    long_path, wide_path = harness.write_aggregate(rows, args.out or args.logs)
    for line in harness.results_table(rows):
        print(",".join(line))
    print(f"wrote {long_path} and {wide_path}", file=sys.stderr)
    return 0


def cmd_plot_data(args) -> int:
    paths = harness.emit_plot_data(harness.read_logs(args.logs), args.out, args.window)
    print(f"wrote {len(paths)} curve files to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    values = _base_values(args)
    values.setdefault("algo", "EORL-05-05")
    base = ExperimentConfig.from_mapping(values)
    n_values = [int(v) for v in args.n.split(",")]
    algos = _algos(args.algo, ",".join(harness.ABLATION_VARIANTS))
    table = harness.ablation_sweep(base, n_values, algos, args.out, args.workers)
    out = Path(args.out) / f"{base.experiment_id}__ablation.csv"
    harness.write_csv(out, [table[0]] + [[row[0], *(repr(float(v)) for v in row[1:])]
                                         for row in table[1:]])
    for row in table:
        print(",".join(str(v) for v in row))
    print(f"wrote {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eorl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train and write one CSV log per (config, seed)")
    _add_config_flags(p)
    p.add_argument("--algo", help=f"comma-separated ids or 'all' ({', '.join(ALGORITHMS)})")
    p.add_argument("--n", type=int, help="population size for EORL and CEM-RL")
    p.add_argument("--suite", choices=["1d", "2d"], help="run every row of a results table")
    p.add_argument("--dry-run", action="store_true", help="list the runs without training")
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="saturation-reward table from run logs")
    p.add_argument("logs", type=Path, help="directory of run logs")
    p.add_argument("--out", type=Path, help="output directory (default: the log directory)")
    p.add_argument("--last", type=int, default=harness.SATURATION_WINDOW,
                   help="episodes averaged at the end of training")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("plot-data", help="per-episode mean/std curves across seeds")
    p.add_argument("logs", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--window", type=int, default=20, help="trailing smoothing window")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("ablate", help="saturation reward versus population size")
    _add_config_flags(p)
    p.add_argument("--n", default="2,4,8,12", help="comma-separated population sizes")
    p.add_argument("--algo", help="algorithms to sweep (default: the four evolutionary variants)")
    p.add_argument("--out", type=Path, default=Path("ablation"))
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"eorl: config error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"eorl: numerical error: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"eorl: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
