"""Experiment configs, seeded run fan-out, CSV logs and result aggregation."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agents import ALGORITHMS, EORL_VARIANTS, TABLE_COLUMNS, LogRow, TrainConfig, train
from .envs import make_env

log = logging.getLogger(__name__)

# decay used with each episode budget unless overridden
DECAY_BY_EPISODES = {400: 0.99, 1000: 0.995, 2500: 0.998, 4000: 0.999}
LOG_COLUMNS = ("seed", "episode", "policy_index", "episode_return", "epsilon", "evo_event_kind")
SATURATION_WINDOW = 100
ABLATION_VARIANTS = ("EORL-05-00", "EORL-05-05", "EORL-10-05", "EORL-ACTV")


class ConfigError(ValueError):
    pass


def _parse_seeds(value) -> tuple[int, ...]:
    if isinstance(value, int):
        return tuple(range(value))
    if isinstance(value, str):
        value = value.strip()
        if value.isdigit():  # a bare number is a seed count
            return tuple(range(int(value)))
        out = []
        for part in value.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
        return tuple(out)
    return tuple(int(s) for s in value)


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "bitflip"
    size: int = 6
    subgoals: str = "0"
    stochasticity: float = 0.0
    algo: str = "EORL-05-05"
    seeds: tuple[int, ...] = tuple(range(10))
    master_seed: int = 0
    episodes: int = 400
    decay: float | None = None
    n: int = 8
    batch_size: int = 4096
    epochs: int = 2
    lr: float = 0.01
    buffer_factor: int = 100
    optimizer: str = "adam"
    dtype: str = "float32"
    timeout_path: str = "direct"

    def __post_init__(self):
        object.__setattr__(self, "seeds", _parse_seeds(self.seeds))
        object.__setattr__(self, "subgoals", str(self.subgoals))
        if self.decay is None:
            if self.episodes not in DECAY_BY_EPISODES:
                raise ConfigError(f"no default decay for {self.episodes} episodes; set decay")
            object.__setattr__(self, "decay", DECAY_BY_EPISODES[self.episodes])
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; choose from {', '.join(ALGORITHMS)}")
        if self.env not in ("bitflip", "grid"):
            raise ConfigError(f"env must be bitflip or grid, not {self.env!r}")
        if self.subgoals not in ("0", "1", "2+", "2-"):
            raise ConfigError(f"subgoals must be one of 0, 1, 2+, 2-, not {self.subgoals!r}")
        if self.episodes < 1 or not self.seeds or self.n < 1:
            raise ConfigError("episodes, seeds and n must be positive")
        try:
            self.make_env()
        except ValueError as err:
            raise ConfigError(str(err)) from err

    @property
    def experiment_id(self) -> str:
        sub = self.subgoals.replace("+", "p").replace("-", "m")
        return (f"{self.env}-m{self.size}-sub{sub}-p{self.stochasticity:.2f}"
                f"-E{self.episodes}-d{self.decay:g}")

    @property
    def run_id(self) -> str:
        return f"{self.experiment_id}__{self.algo}"

    def make_env(self):
        return make_env(self.env, self.size, self.subgoals, self.stochasticity, self.timeout_path)

    def train_config(self) -> TrainConfig:
        return TrainConfig(episodes=self.episodes, decay=self.decay, batch_size=self.batch_size,
                           batches_per_episode=self.epochs, learning_rate=self.lr,
                           optimizer=self.optimizer, buffer_factor=self.buffer_factor,
                           dtype=self.dtype)

    def seed_sequence(self, seed: int) -> np.random.SeedSequence:
        """Independent stream for one seed, derived from the master seed."""
        return np.random.SeedSequence(self.master_seed, spawn_key=(seed,))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # flat key=value text form -------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "seeds":
                v = ",".join(map(str, v))
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = coerce_value(key, raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_mapping(parse_flat(text))


_INT_KEYS = {"size", "master_seed", "episodes", "n", "batch_size", "epochs", "buffer_factor"}
_FLOAT_KEYS = {"stochasticity", "lr"}


def coerce_value(key: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "decay":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {raw!r}") from err
    return raw


def parse_flat(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# runs


def log_path(out_dir: Path, config: ExperimentConfig, seed: int) -> Path:
    return Path(out_dir) / f"{config.run_id}__seed{seed}.csv"


def format_log(seed: int, rows: Sequence[LogRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([seed, r.episode, r.policy_index, repr(float(r.episode_return)),
                    repr(float(r.epsilon)), r.evo_event])
    return buf.getvalue()


def run_seed(config: ExperimentConfig, seed: int) -> list[LogRow]:
    return train(config.algo, config.make_env(), config.train_config(),
                 config.seed_sequence(seed), n=config.n)


def _run_and_write(args) -> str:
    config, seed, out_dir = args
    rows = run_seed(config, seed)
    path = log_path(out_dir, config, seed)
    path.write_text(format_log(seed, rows), encoding="utf-8")
    log.info("wrote %s (last-100 mean %.3f)", path.name,
             np.mean([r.episode_return for r in rows[-SATURATION_WINDOW:]]))
    return str(path)


def run(configs: ExperimentConfig | Iterable[ExperimentConfig], out_dir, workers: int = 1) -> list[Path]:
    """Train every (config, seed) pair and write one CSV log per pair.

    Runs are independent, so they are spread over ``workers`` processes;
    each run itself is single-threaded and deterministic.
    """
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for cfg in configs:
        (out_dir / f"{cfg.run_id}.cfg").write_text(cfg.to_text(), encoding="utf-8")
        jobs.extend((cfg, seed, out_dir) for seed in cfg.seeds)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_run_and_write, jobs))
    else:
        paths = [_run_and_write(j) for j in jobs]
    return [Path(p) for p in paths]


def table_suite(kind: str, **overrides) -> list[ExperimentConfig]:
    """The experiment grid of the results tables, one config per row (algo left default).

    ``1d``: bit flipping, m = 6..10 with 0 and 1 subgoals (10 rows).
    ``2d``: grid navigation, the 56 size/subgoal/stochasticity rows.
    """
    rows: list[dict] = []
    if kind == "1d":
        for sub in ("0", "1"):
            for m in range(6, 11):
                rows.append(dict(env="bitflip", size=m, subgoals=sub, episodes=400))
    elif kind == "2d":
        sizes = (8, 12, 16, 20, 40, 60, 80)
        for sub in ("0", "1"):
            for p in (0.0, 0.1, 0.2):
                rows += [dict(env="grid", size=m, subgoals=sub, stochasticity=p, episodes=1000)
                         for m in sizes]
        rows += [dict(env="grid", size=m, subgoals="2+", episodes=2500) for m in (8, 12, 16, 20)]
        rows += [dict(env="grid", size=m, subgoals="2+", episodes=4000) for m in (40, 60)]
        rows += [dict(env="grid", size=m, subgoals="2+", stochasticity=0.1, episodes=2500)
                 for m in (8, 12, 16, 20)]
        rows += [dict(env="grid", size=m, subgoals="2-", episodes=2500) for m in (8, 12, 16, 20)]
    else:
        raise ConfigError(f"unknown suite {kind!r}; expected 1d or 2d")
    return [ExperimentConfig(**{**r, **overrides}) for r in rows]


# ---------------------------------------------------------------------------
# reading logs and aggregating

_LOG_NAME = re.compile(r"^(?P<exp>.+)__(?P<algo>[A-Z0-9-]+)__seed(?P<seed>\d+)\.csv$")


@dataclass
class RunLog:
    experiment: str
    algo: str
    seed: int
    returns: np.ndarray
    rows: list = field(default_factory=list, repr=False)


def read_log(path) -> RunLog:
    path = Path(path)
    m = _LOG_NAME.match(path.name)
    if not m:
        raise ConfigError(f"not a run log file name: {path.name}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    returns = np.array([float(r["episode_return"]) for r in rows])
    return RunLog(m["exp"], m["algo"], int(m["seed"]), returns, rows)


def read_logs(source) -> list[RunLog]:
    if isinstance(source, (str, Path)) and Path(source).is_dir():
        paths = sorted(p for p in Path(source).glob("*.csv") if _LOG_NAME.match(p.name))
    else:
        paths = [Path(source)] if isinstance(source, (str, Path)) else list(source)
    if not paths:
        raise ConfigError(f"no run logs found in {source}")
    return [read_log(p) for p in paths]


def saturation_reward(returns, window: int = SATURATION_WINDOW) -> float:
    """Mean return over the final ``window`` episodes."""
    returns = np.asarray(returns, dtype=float)
    return float(returns[-window:].mean())


@dataclass
class AggregateRow:
    experiment: str
    algo: str
    mean: float
    std: float
    n_seeds: int
    best_count: float = 0.0


def best_counts(means: dict[str, float], decimals: int | None = 2) -> dict[str, float]:
    """Share of the 'best' credit for one experiment; k-way ties get 1/k each.

    Means are compared after rounding to ``decimals`` places, as the
    two-decimal results tables do; NaN entries never win.
    """
    vals = {a: (round(v, decimals) if decimals is not None else v)
            for a, v in means.items() if not math.isnan(v)}
    if not vals:
        return {a: 0.0 for a in means}
    top = max(vals.values())
    winners = [a for a, v in vals.items() if v == top]
    return {a: (1.0 / len(winners) if a in winners else 0.0) for a in means}


def aggregate(logs: Iterable[RunLog], window: int = SATURATION_WINDOW,
              decimals: int | None = 2) -> list[AggregateRow]:
    """Per (experiment, algorithm): mean and std over seeds of the per-seed saturation reward."""
    groups: dict[tuple[str, str], list[float]] = {}
    for lg in logs:
        groups.setdefault((lg.experiment, lg.algo), []).append(saturation_reward(lg.returns, window))
    rows = [AggregateRow(exp, algo, float(np.mean(v)), float(np.std(v)), len(v))
            for (exp, algo), v in sorted(groups.items())]
    for exp in sorted({r.experiment for r in rows}):
        mine = [r for r in rows if r.experiment == exp]
        credit = best_counts({r.algo: r.mean for r in mine}, decimals)
        for r in mine:
            r.best_count = credit[r.algo]
    return rows


def _column_order(algos: Iterable[str]) -> list[str]:
    algos = set(algos)
    return [c for c in TABLE_COLUMNS] + sorted(algos - set(TABLE_COLUMNS))


def results_table(rows: Sequence[AggregateRow]) -> list[list[str]]:
    """Wide table: one row per experiment, one column per algorithm, then
    ``Average`` and ``Best results`` rows.  CER is an always-empty column."""
    columns = _column_order(r.algo for r in rows)
    experiments = sorted({r.experiment for r in rows}, key=_experiment_sort_key)
    cell = {(r.experiment, r.algo): r for r in rows}
    out = [["experiment", *columns]]
    for exp in experiments:
        out.append([exp] + [f"{cell[exp, a].mean:.2f}" if (exp, a) in cell else ""
                            for a in columns])
    avg, best = ["Average"], ["Best results"]
    for a in columns:
        vals = [cell[e, a] for e in experiments if (e, a) in cell]
        avg.append(f"{np.mean([v.mean for v in vals]):.2f}" if vals else "")
        best.append(f"{sum(v.best_count for v in vals):g}" if vals else "")
    out += [avg, best]
    return out


def _experiment_sort_key(exp: str):
    m = re.match(r"(\w+)-m(\d+)-sub(\w+)-p([\d.]+)-E(\d+)", exp)
    if not m:
        return (exp,)
    env, size, sub, p, episodes = m.groups()
    return (env, sub, float(p), int(size), int(episodes), exp)


def write_csv(path, table: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table)


def write_aggregate(rows: Sequence[AggregateRow], out_dir) -> tuple[Path, Path]:
    """Write ``aggregate.csv`` (long form, with std) and ``table.csv`` (wide form)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    long_path, wide_path = out_dir / "aggregate.csv", out_dir / "table.csv"
    write_csv(long_path, [["experiment", "algorithm", "mean", "std", "n_seeds", "best_count"]] +
              [[r.experiment, r.algo, repr(r.mean), repr(r.std), r.n_seeds, repr(r.best_count)]
               for r in rows])
    write_csv(wide_path, results_table(rows))
    return long_path, wide_path


# ---------------------------------------------------------------------------
# training-curve data


def trailing_mean(values, window: int) -> np.ndarray:
    """out[t] = mean(values[max(0, t-window+1) : t+1])."""
    if window < 1:
        raise ValueError("window must be >= 1")
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    t = np.arange(1, len(v) + 1)
    lo = np.maximum(0, t - window)
    return (c[t] - c[lo]) / (t - lo)


def curve(logs: Sequence[RunLog], window: int = 20) -> np.ndarray:
    """(episodes, 3) array of episode, mean and std across seeds of smoothed returns."""
    lengths = {len(lg.returns) for lg in logs}
    if len(lengths) != 1:
        raise ConfigError("all seeds of one run must have the same episode count")
    smoothed = np.array([trailing_mean(lg.returns, window) for lg in logs])
    episodes = np.arange(1, smoothed.shape[1] + 1)
    return np.column_stack([episodes, smoothed.mean(axis=0), smoothed.std(axis=0)])


def emit_plot_data(logs: Sequence[RunLog], out_dir, window: int = 20) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[str, str], list[RunLog]] = {}
    for lg in logs:
        groups.setdefault((lg.experiment, lg.algo), []).append(lg)
    paths = []
    for (exp, algo), group in sorted(groups.items()):
        data = curve(sorted(group, key=lambda g: g.seed), window)
        path = out_dir / f"{exp}__{algo}__curve.csv"
        write_csv(path, [["episode", "mean_return", "std_return"]] +
                  [[int(e), repr(float(m)), repr(float(s))] for e, m, s in data])
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# population-size ablation


def ablation_sweep(base: ExperimentConfig, n_values: Sequence[int] = (2, 4, 8, 12),
                   algos: Sequence[str] = ABLATION_VARIANTS, out_dir=None,
                   workers: int = 1) -> list[list]:
    """Saturation reward vs population size.

    One row per n with a column per algorithm and ``EORL-mean``, the
    average over whichever of the four evolutionary variants were run.
    Logs land in ``out_dir/n{n}/`` when an output directory is given.
    """
    import tempfile

    header = ["n", *algos]
    variants = [a for a in algos if a in ABLATION_VARIANTS]
    if variants:
        header.append("EORL-mean")
    table = [header]
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(out_dir) if out_dir is not None else Path(tmp)
        for n in n_values:
            configs = [base.replace(algo=a, n=n) for a in algos]
            paths = run(configs, root / f"n{n}", workers)
            rows = aggregate(read_logs(paths))
            by_algo = {r.algo: r.mean for r in rows}
            row = [n, *(by_algo[a] for a in algos)]
            if variants:
                row.append(float(np.mean([by_algo[a] for a in variants])))
            table.append(row)
    return table

