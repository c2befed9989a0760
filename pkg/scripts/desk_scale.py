"""Desk-scale reproduction: bit flipping m=6/7 and 8x8 / 12x12 grids, 10 seeds.

Writes run logs, the aggregated table and smoothed learning curves:

    python3 scripts/desk_scale.py --out runs/desk --workers 4

This is the setting the acceptance tests check (roughly 45 CPU-minutes
for the algorithms they need; all ten algorithms take about twice that).
"""
import argparse
import logging
from pathlib import Path

from eorl import harness
from eorl.agents import ALGORITHMS
from eorl.harness import ExperimentConfig

EXPERIMENTS = [dict(env="bitflip", size=6, episodes=400), dict(env="bitflip", size=7, episodes=400),
               dict(env="grid", size=8, episodes=1000), dict(env="grid", size=12, episodes=1000)]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    p.add_argument("--algos", default=",".join(ALGORITHMS))
    p.add_argument("--seeds", default="10")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("runs/desk"))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    configs = [ExperimentConfig(**exp, algo=a, seeds=args.seeds, master_seed=args.master_seed)
               for exp in EXPERIMENTS for a in args.algos.split(",")]
    harness.run(configs, args.out, args.workers)
    logs = harness.read_logs(args.out)
    agg = harness.aggregate(logs)
    harness.write_aggregate(agg, args.out)
    harness.emit_plot_data(logs, args.out / "curves")
    for line in harness.results_table(agg):
        print(",".join(line))


if __name__ == "__main__":
    main()
