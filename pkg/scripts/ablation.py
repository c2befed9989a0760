"""Saturation reward against population size n for the evolutionary variants.

    python3 scripts/ablation.py --env bitflip --size 6 --n 2,4,8,12 --seeds 10

Prints one row per n with a column per variant and their mean, and writes
the table next to the run logs.
"""
import argparse
import logging
from pathlib import Path

from eorl import harness
from eorl.harness import ExperimentConfig


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    p.add_argument("--env", default="bitflip")
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--subgoals", default="0")
    p.add_argument("--episodes", type=int, default=400)
    p.add_argument("--decay", type=float, help="needed when --episodes has no default decay")
    p.add_argument("--n", default="2,4,8,12")
    p.add_argument("--seeds", default="10")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = ExperimentConfig(env=args.env, size=args.size, subgoals=args.subgoals,
                            episodes=args.episodes, decay=args.decay, seeds=args.seeds)
    n_values = [int(v) for v in args.n.split(",")]
    table = harness.ablation_sweep(base, n_values, out_dir=args.out, workers=args.workers)
    out = args.out / f"{base.experiment_id}__ablation.csv"
    harness.write_csv(out, table)
    for row in table:
        print(",".join(f"{v:.3f}" if isinstance(v, float) else str(v) for v in row))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
