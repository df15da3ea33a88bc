"""Command-line entry point: ``rapidlearn <verb> ...``."""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from rapidlearn import harness, learner
from rapidlearn.bridge import StretchIPT
from rapidlearn.novelty import list_novelties
from rapidlearn.planner import PlannerTimeout, SearchConfig
from rapidlearn.planner import plan as plan_task
from rapidlearn.symbolic import load_domain, parse_domain, parse_problem


def _cmd_plan(args) -> int:
    search = SearchConfig(budget=args.budget)
    try:
        if args.problem:
            domain = parse_domain(Path(args.domain).read_text()) if args.domain else load_domain()
            p = plan_task(parse_problem(Path(args.problem).read_text(), domain), search)
        else:
            ipt = StretchIPT.build(None if args.novelty == harness.NO_NOVELTY else args.novelty, search=search)
            world = ipt.make_world()
            world.reset(args.seed)
            p = ipt.plan(ipt.detector(world.state))
    except PlannerTimeout as exc:
        print(f"planner timeout: {exc}")
        return 2
    if p is None:
        print("no plan")
        return 1
    for o in p:
        print(o.id)
    return 0


def _cmd_novelties(args) -> int:
    for nid, desc in list_novelties():
        print(f"{nid:<14}{desc}")
    return 0


def _strategies(values) -> tuple:
    names = [s for v in values for s in v.split(",") if s]
    return tuple(learner.normalize_strategy(s) for s in names) or learner.STRATEGIES


def _cmd_run(args) -> int:
    overrides = {"max_episodes": args.max_episodes} if args.max_episodes else {}
    cfg = harness.ExperimentConfig(
        args.scenario, _strategies(args.strategy),
        tuple(range(args.seed, args.seed + args.seeds)), args.eval_episodes, overrides,
        str(args.out or harness.default_out_dir()), workers=args.workers,
    )
    records = harness.run_scenario(cfg)
    print(harness.format_table(harness.aggregate(records)))
    print(f"results written to {Path(cfg.out_dir) / harness.RESULTS_FILE}")
    return 1 if any(r.error for r in records) else 0


def _cmd_eval(args) -> int:
    ipt = StretchIPT.build(None if args.scenario == harness.NO_NOVELTY else args.scenario)
    loaded = harness.load_executors(ipt, args.executor)
    rate = harness.evaluate(ipt, learner.normalize_strategy(args.strategy), args.seed, args.episodes)
    print(f"{len(loaded)} executor(s) for {args.scenario}: success {rate:.3f} over {args.episodes} episodes")
    return 0


def _cmd_stats(args) -> int:
    records = harness.read_records(Path(args.input) / harness.RESULTS_FILE)
    summaries = harness.aggregate(records)
    print(harness.format_table(summaries))
    by_group: dict = {}
    for r in records:
        by_group.setdefault((r.scenario, r.strategy), []).append(r)
    for (sa, a), (sb, b) in itertools.combinations(sorted(by_group), 2):
        if sa != sb:
            continue
        for metric in ("time_to_adapt", "post_novelty_success"):
            xa = [getattr(r, metric) for r in by_group[(sa, a)] if r.converged or metric != "time_to_adapt"]
            xb = [getattr(r, metric) for r in by_group[(sb, b)] if r.converged or metric != "time_to_adapt"]
            try:
                t, df, p = harness.welch_ttest(xa, xb)
                print(f"{sa} {metric}: {a} vs {b}  t={t:.3f} df={df:.1f} p={p:.4g}")
            except harness.DegenerateVariance as exc:
                print(f"{sa} {metric}: {a} vs {b}  not testable ({exc})")
    return 0


def _cmd_curve(args) -> int:
    logs = harness.collect_logs(args.input)
    path = harness.emit_learning_curve(logs, args.out, args.plot)
    print(f"curve written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rapidlearn")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("plan", help="print a plan for the crafting task or a PDDL problem")
    p.add_argument("--novelty", default=harness.NO_NOVELTY)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--domain", help="PDDL domain file (default: built-in)")
    p.add_argument("--problem", help="PDDL problem file")
    p.add_argument("--budget", type=int, default=SearchConfig().budget, help="node expansion budget")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("novelties", help="novelty catalogue")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=_cmd_novelties)

    p = sub.add_parser("run", help="learn and evaluate one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--strategy", action="append", default=[], help="kge-ucb, kge-uab or eg; repeatable")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--max-episodes", type=int, help="cap on discovery episodes")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./rapidlearn-out)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="evaluate stored executors")
    p.add_argument("--executor", nargs="+", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--strategy", default="KGE-UCB")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="aggregate results and compare strategies")
    p.add_argument("--in", dest="input", default=str(harness.default_out_dir()))
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("curve", help="learning curves from training logs")
    p.add_argument("--in", dest="input", default=str(harness.default_out_dir()))
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="optional image path")
    p.set_defaults(func=_cmd_curve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
