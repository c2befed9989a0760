"""Plot the curve files written by ``eorl plot-data`` (needs matplotlib).

    python3 scripts/plot_curves.py runs/desk/curves --out figures
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_curve(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return ([int(r["episode"]) for r in rows], [float(r["mean_return"]) for r in rows],
            [float(r["std_return"]) for r in rows])


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("curves", type=Path)
    p.add_argument("--out", type=Path, default=Path("figures"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    by_exp = defaultdict(list)
    for path in sorted(args.curves.glob("*__curve.csv")):
        exp, algo, _ = path.name.split("__")
        by_exp[exp].append((algo, path))
    for exp, items in by_exp.items():
        fig, ax = plt.subplots(figsize=(7, 4))
        for algo, path in items:
            ep, mean, std = read_curve(path)
            ax.plot(ep, mean, label=algo, lw=1)
            ax.fill_between(ep, [m - s for m, s in zip(mean, std)],
                            [m + s for m, s in zip(mean, std)], alpha=0.15)
        ax.set(title=exp, xlabel="episode", ylabel="return (smoothed)")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(args.out / f"{exp}.png", dpi=120)
        plt.close(fig)
        print(f"wrote {args.out / (exp + '.png')}")


if __name__ == "__main__":
    main()
