"""Train every row of a results table and print the aggregated table.

    python3 scripts/reproduce_table.py --suite 1d --seeds 10 --workers 4 --out runs/1d
    python3 scripts/reproduce_table.py --suite 2d --sizes 8,12 --subgoals 0 --algos VAN,EORL-FIX

The full 2D suite (56 rows up to 80x80, 10 algorithms, 10 seeds) is far
beyond a laptop; use ``--sizes``/``--subgoals``/``--stochasticity`` to pick
rows.  Logs already present in ``--out`` are reused, so an interrupted
sweep can be resumed.
"""
import argparse
import logging
from pathlib import Path

from eorl import harness
from eorl.agents import ALGORITHMS


def _csv(text, cast=str):
    return None if text is None else [cast(v) for v in text.split(",")]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    p.add_argument("--suite", choices=["1d", "2d"], default="1d")
    p.add_argument("--algos", default=",".join(ALGORITHMS))
    p.add_argument("--seeds", default="10")
    p.add_argument("--sizes", help="keep only these sizes, e.g. 8,12")
    p.add_argument("--subgoals", help="keep only these subgoal modes, e.g. 0,2+")
    p.add_argument("--stochasticity", help="keep only these p values, e.g. 0,0.1")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("runs"))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    rows = harness.table_suite(args.suite, seeds=args.seeds)
    sizes, subs, ps = _csv(args.sizes, int), _csv(args.subgoals), _csv(args.stochasticity, float)
    rows = [r for r in rows if (sizes is None or r.size in sizes)
            and (subs is None or r.subgoals in subs)
            and (ps is None or r.stochasticity in ps)]
    configs = [r.replace(algo=a) for r in rows for a in _csv(args.algos)]
    todo = [c for c in configs
            if not all(harness.log_path(args.out, c, s).exists() for s in c.seeds)]
    print(f"{len(rows)} experiments, {len(configs)} runs, {len(todo)} still to train")
    harness.run(todo, args.out, args.workers)

    agg = harness.aggregate(harness.read_logs(args.out))
    harness.write_aggregate(agg, args.out)
    for line in harness.results_table(agg):
        print(",".join(line))


if __name__ == "__main__":
    main()
