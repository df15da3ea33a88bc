"""Seeded experiments: learn under a novelty, evaluate, aggregate, compare."""
from __future__ import annotations

import bisect
import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from rapidlearn import learner
from rapidlearn.bridge import Executor, StretchIPT, rapid_learn
from rapidlearn.discovery import LOG_COLUMNS, DiscoveryConfig, write_log
from rapidlearn.novelty import get_novelty

log = logging.getLogger(__name__)

RESULTS_HEADER = "# rapidlearn-results v1"
RESULTS_FILE = "results.csv"
OUT_ENV = "RAPIDLEARN_OUT"
NO_NOVELTY = "none"
EVAL_BUDGET = 300


class EmptyGroup(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "rapidlearn-out"))


@dataclass
class RunRecord:
    scenario: str
    strategy: str
    seed: int
    time_to_adapt: int
    converged: bool
    post_novelty_success: float
    wall_clock: float = 0.0
    discoveries: str = ""  # ';'-joined failed-operator ids
    error: str = ""

    def __post_init__(self):
        if not 0.0 <= self.post_novelty_success <= 1.0:
            raise ValueError("success must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    strategies: tuple = learner.STRATEGIES
    seeds: tuple = tuple(range(10))  # one independent trial per seed
    eval_episodes: int = 100
    discovery: dict = field(default_factory=dict)  # DiscoveryConfig overrides
    out_dir: str | None = None
    learning_episodes: int = 3
    workers: int = 1

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        if self.eval_episodes < 1 or self.learning_episodes < 1:
            raise ValueError("episode counts must be positive")
        if self.scenario != NO_NOVELTY:
            get_novelty(self.scenario)
        object.__setattr__(self, "strategies", tuple(learner.normalize_strategy(s) for s in self.strategies))
        known = {f.name for f in fields(DiscoveryConfig)}
        bad = set(self.discovery) - known
        if bad:
            raise ValueError(f"unknown discovery settings {sorted(bad)}")

    @property
    def trials(self) -> int:
        return len(self.seeds)

    def discovery_config(self) -> DiscoveryConfig:
        return DiscoveryConfig(**self.discovery)


def eval_seed(seed: int, episode: int) -> int:
    return 1_000_003 * (seed + 1) + episode


def evaluate(ipt: StretchIPT, strategy: str, seed: int, episodes: int) -> float:
    """Fraction of fresh episodes finished within the step budget, learning disabled."""
    wins = 0
    for i in range(episodes):
        world = ipt.make_world(horizon=EVAL_BUDGET)
        wins += rapid_learn(ipt, strategy, eval_seed(seed, i), allow_discovery=False, world=world).success
    return wins / episodes


def learn(ipt: StretchIPT, strategy: str, seed: int, cfg: DiscoveryConfig, episodes: int = 3):
    """Run learning episodes until one finishes the task; return the outcomes."""
    outcomes = []
    for k in range(episodes):
        out = rapid_learn(ipt, strategy, seed + 7_777_777 * k, discovery_cfg=cfg)
        outcomes.append(out)
        if out.success:
            break
    return outcomes


def _scenario_ipt(scenario: str) -> StretchIPT:
    return StretchIPT.build(None if scenario == NO_NOVELTY else scenario)


def run_one(cfg: ExperimentConfig, strategy: str, seed: int, out_dir: Path | None = None) -> RunRecord:
    t0 = time.perf_counter()
    ipt = _scenario_ipt(cfg.scenario)
    outcomes = learn(ipt, strategy, seed, cfg.discovery_config(), cfg.learning_episodes)
    executors = list(ipt.registry)
    tta = sum(o.time_to_adapt for o in outcomes)
    rec = RunRecord(
        cfg.scenario, strategy, seed, tta,
        converged=all(e.converged for e in executors),
        post_novelty_success=evaluate(ipt, strategy, seed, cfg.eval_episodes),
        discoveries=";".join(e.id for e in executors),
    )
    if out_dir is not None:
        save_executors(ipt, executors, out_dir / "executors" / f"{cfg.scenario}_{strategy}_{seed}")
        for k, ex in enumerate(executors):
            write_log(ex.training_log, _ensure(out_dir / "logs") / f"{cfg.scenario}_{strategy}_{seed}_{k}.csv")
    rec.wall_clock = time.perf_counter() - t0
    return rec


def _ensure(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_executors(ipt: StretchIPT, executors, directory: Path) -> list:
    """One file per executor; the numeric prefix keeps load order = training order."""
    paths = []
    for k, ex in enumerate(executors):
        p = _ensure(directory) / f"{k:02d}_{ex.operator.name}.exec"
        p.write_bytes(ex.to_bytes(ipt.world_entities))
        paths.append(p)
    return paths


def load_executors(ipt: StretchIPT, paths) -> list:
    loaded = []
    for p in sorted(Path(x) for x in paths):
        ex = Executor.from_bytes(Path(p).read_bytes(), ipt)
        ipt.registry.add(ex)
        loaded.append(ex)
    return loaded


def _safe_run(cfg: ExperimentConfig, strategy: str, seed: int, out_dir: Path | None) -> RunRecord:
    t0 = time.perf_counter()
    try:
        return run_one(cfg, strategy, seed, out_dir)
    except Exception as exc:  # one bad seed must not sink the rest
        log.exception("run %s/%s/%s failed", cfg.scenario, strategy, seed)
        return RunRecord(cfg.scenario, strategy, seed, 0, False, 0.0, time.perf_counter() - t0,
                         error=f"{type(exc).__name__}: {exc}")


def run_scenario(cfg: ExperimentConfig, runner=_safe_run) -> list:
    """Learn and evaluate every (strategy, seed) pair; write ``results.csv`` if an out dir is set."""
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    jobs = [(s, seed) for s in cfg.strategies for seed in cfg.seeds]
    if cfg.workers > 1 and runner is _safe_run:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_safe_run, *zip(*[(cfg, s, seed, out_dir) for s, seed in jobs])))
    else:
        records = [runner(cfg, s, seed, out_dir) for s, seed in jobs]
    if out_dir is not None:
        write_records(records, _ensure(out_dir) / RESULTS_FILE)
    return records


RECORD_COLUMNS = tuple(f.name for f in fields(RunRecord))


def write_records(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(RESULTS_HEADER + "\n")
        w = csv.DictWriter(fh, RECORD_COLUMNS)
        w.writeheader()
        for r in records:
            row = asdict(r)
            row["converged"] = int(r.converged)
            row["wall_clock"] = f"{r.wall_clock:.3f}"
            w.writerow(row)


def read_records(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != RESULTS_HEADER:
            raise ValueError(f"{path}: expected '{RESULTS_HEADER}' header")
        return [
            RunRecord(r["scenario"], r["strategy"], int(r["seed"]), int(r["time_to_adapt"]),
                      bool(int(r["converged"])), float(r["post_novelty_success"]), float(r["wall_clock"]),
                      r["discoveries"], r["error"])
            for r in csv.DictReader(fh)
        ]


@dataclass
class GroupSummary:
    scenario: str
    strategy: str
    n: int
    tta_mean: float
    tta_sd: float
    did_not_converge: int
    success_mean: float
    success_sd: float
    single: bool = False  # SD undefined for one sample; reported as 0


def _mean_sd(xs) -> tuple:
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        return math.nan, math.nan
    if len(xs) == 1:
        return float(xs[0]), 0.0
    return float(xs.mean()), float(xs.std(ddof=1))


def aggregate(records) -> list:
    """Mean and sample SD per (scenario, strategy); unconverged runs are counted, not averaged."""
    records = list(records)
    if not records:
        raise EmptyGroup("no records to aggregate")
    order = {s: i for i, s in enumerate(learner.STRATEGIES)}
    groups: dict = {}
    for r in records:
        groups.setdefault((r.scenario, r.strategy), []).append(r)
    out = []
    for (scen, strat) in sorted(groups, key=lambda k: (k[0], order.get(k[1], len(order)), k[1])):
        rs = sorted(groups[(scen, strat)], key=lambda r: r.seed)
        ok = [r.time_to_adapt for r in rs if r.converged and not r.error]
        tta_mean, tta_sd = _mean_sd(ok)
        succ_mean, succ_sd = _mean_sd([r.post_novelty_success for r in rs])
        out.append(GroupSummary(scen, strat, len(rs), tta_mean, tta_sd, len(rs) - len(ok),
                                succ_mean, succ_sd, single=len(rs) == 1))
    return out


def welch_ttest(a, b) -> tuple:
    """Two-sided unequal-variance t-test: (t, Welch-Satterthwaite df, p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateVariance("each sample needs at least two values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    if va + vb == 0:
        raise DegenerateVariance("both samples are constant")
    res = stats.ttest_ind(a, b, equal_var=False)
    df = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return float(res.statistic), float(df), float(res.pvalue)


def format_table(summaries) -> str:
    lines = [f"{'scenario':<14}{'strategy':<10}{'n':>3}  {'time to adapt':>24}  {'dnc':>3}  {'success':>14}"]
    for g in summaries:
        tta = "n/a" if math.isnan(g.tta_mean) else f"{g.tta_mean:.3g} +/- {g.tta_sd:.3g}"
        flag = " (single)" if g.single else ""
        lines.append(f"{g.scenario:<14}{g.strategy:<10}{g.n:>3}  {tta:>24}  {g.did_not_converge:>3}  "
                     f"{g.success_mean:.3f} +/- {g.success_sd:.3f}{flag}")
    return "\n".join(lines)


def read_training_log(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != LOG_COLUMNS:
        raise ValueError(f"{path}: not a training log")
    return [(int(r[0]), int(r[1]), float(r[2]), int(r[3])) + tuple(r[4:]) for r in rows[1:]]


def learning_curve(rows, window: int = 100) -> list:
    """(cumulative timestep, rolling success rate) after each episode."""
    out, total, recent = [], 0, []
    for row in rows:
        total += int(row[1])
        recent.append(int(row[3]))
        if len(recent) > window:
            recent.pop(0)
        out.append((total, sum(recent) / len(recent)))
    return out


def _value_at(curve, t):
    """Step-function lookup: the latest value at or before ``t``, else None."""
    i = bisect.bisect_right(curve, (t, math.inf))
    return curve[i - 1][1] if i else None


def emit_learning_curve(logs: dict, path, plot_path=None, window: int = 100) -> Path:
    """Write rolling success per series on a shared timestep axis.

    ``logs`` maps a series name to one training log (a list of rows) or to
    several runs (a list of such lists), which are averaged. A series is
    blank before its first episode.
    """
    curves = {}
    for name, rows in logs.items():
        runs = rows if rows and isinstance(rows[0], list) else [rows]
        curves[name] = [learning_curve(r, window) for r in runs]
    axis = sorted({t for runs in curves.values() for c in runs for t, _ in c})
    merged: dict = {name: [] for name in curves}
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestep", *curves])
        for t in axis:
            row = [t]
            for name, runs in curves.items():
                vals = [v for v in (_value_at(c, t) for c in runs) if v is not None]
                if vals:
                    m = sum(vals) / len(vals)
                    merged[name].append((t, m))
                    row.append(f"{m:.4f}")
                else:
                    row.append("")
            w.writerow(row)
    if plot_path is not None:
        _plot(merged, plot_path)
    return path


def _plot(curves: dict, plot_path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib unavailable; skipping %s", plot_path)
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, c in curves.items():
        if c:
            ax.plot(*zip(*c), label=name)
    ax.set_xlabel("timesteps")
    ax.set_ylabel("rolling success")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(plot_path)
    plt.close(fig)


def collect_logs(in_dir) -> dict:
    """Training logs under ``in_dir/logs`` as strategy -> runs (one per seed, operators in order)."""
    runs: dict = {}
    for p in sorted(Path(in_dir, "logs").glob("*.csv")):
        scenario, strategy, seed, k = p.stem.rsplit("_", 3)
        runs.setdefault(strategy, {}).setdefault(int(seed), []).append((int(k), read_training_log(p)))
    out = {}
    for strategy, seeds in runs.items():
        out[strategy] = [[row for _, rows in sorted(parts) for row in rows] for _, parts in sorted(seeds.items())]
    return out
