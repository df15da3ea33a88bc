"""Learning a new executor for an operator that hit an impasse."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from rapidlearn import learner
from rapidlearn.bridge import (
    Executor,
    PrefixExecutionFailed,
    StretchIPT,
    effect_clause,
    realize,
    run_plan,
    supporting_tail,
)
from rapidlearn.planner import Planner
from rapidlearn.symbolic import GroundOperator, SymbolicState
from rapidlearn.world import EpisodeOver, NoPath, NoTarget, World

log = logging.getLogger(__name__)

LOG_COLUMNS = ("episode", "steps", "return", "done", "epsilon", "rho", "converged")


class OperatorNotInPlan(ValueError):
    pass


class NoNovelEntity(LookupError):
    pass


@dataclass(frozen=True)
class DiscoveryConfig:
    success_reward: float = 1000.0
    dead_end_reward: float = -350.0
    step_reward: float = -1.0
    rho_max: float = 0.3
    rho_min: float = 0.05
    eps_max: float = 0.3
    eps_min: float = 0.05
    decay: float = math.log(0.01) / 2000
    c: float = 0.0005
    mu: float = 2.0
    max_episodes: int = 100_000
    horizon: int = 300
    update_rate: int = 10
    reward_threshold: float = 900.0
    window: int = 100
    min_successes: int = 96
    plateau: int = 100
    alpha: float = 1e-3
    gamma: float = 0.98
    optimizer: str = "sgd"
    world_horizon: int = 6000  # primitive steps available to one training episode
    prefix_retries: int = 50
    sample_actions: bool = True
    baseline: str = "time"  # return baseline for the policy update, see learner.update_network

    def __post_init__(self):
        if not self.success_reward > 0 > self.dead_end_reward:
            raise ValueError("need success reward > 0 > dead-end reward")
        for name in ("max_episodes", "horizon", "update_rate", "window", "min_successes", "plateau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PlannableStateSet:
    operator: GroundOperator
    tail: tuple
    clauses: tuple  # each a tuple of conditions; satisfied if any clause holds

    def matches(self, s: SymbolicState) -> bool:
        return any(s.satisfies(c) for c in self.clauses)


def _index_of(plan, o_i) -> int:
    steps = tuple(plan)
    if isinstance(o_i, int):
        if not 0 <= o_i < len(steps):
            raise OperatorNotInPlan(f"index {o_i} outside plan of length {len(steps)}")
        return o_i
    for i, o in enumerate(steps):
        if o.id == o_i.id:
            return i
    raise OperatorNotInPlan(o_i.id)


def plannable_states(plan, o_i, s0: SymbolicState | None = None) -> PlannableStateSet:
    """Effects of the failed operator, or of any later operator that relies on them.

    ``o_i`` is a plan index or an operator (first occurrence). Clauses are
    relative to ``s0``; without it they are absolute and omit decreases.
    """
    idx = _index_of(plan, o_i)
    op = tuple(plan)[idx]
    tail = supporting_tail(plan, idx)
    base = s0 if s0 is not None else SymbolicState()
    clauses = [effect_clause(op, base, with_decreases=s0 is not None)]
    for t in tail:
        c = effect_clause(t, base, with_decreases=False)
        if c not in clauses:
            clauses.append(c)
    return PlannableStateSet(op, tail, tuple(clauses))


def reward(sr: PlannableStateSet, s_next: SymbolicState, planner: Planner, steps: int,
           cfg: DiscoveryConfig) -> tuple[float, bool]:
    """Sparse reward: big bonus for a plannable effect state, penalty for a dead end."""
    if sr.matches(s_next):
        ok = planner.exists_plan(s_next)
        if ok is None:
            log.info("plannability unknown during reward evaluation; counted as no plan")
        return (cfg.success_reward, True) if ok else (cfg.dead_end_reward, True)
    return cfg.step_reward, steps >= cfg.horizon


def converged(successes, rewards, cfg: DiscoveryConfig) -> bool:
    """Recent success count, recent mean reward and a flat success rate."""
    n = len(successes)
    long = cfg.min_successes + cfg.plateau
    if n < max(cfg.window, long) or len(rewards) != n:
        return False  # the plateau needs its full history
    recent = successes[-cfg.window:]
    if sum(recent) < cfg.min_successes:
        return False
    if float(np.mean(rewards[-cfg.window:])) < cfg.reward_threshold:
        return False
    # Rates over windows of different length are compared at the resolution
    # of the shorter one; exact rational equality would demand a perfect run.
    s_long = sum(successes[-long:])
    s_short = sum(successes[-cfg.min_successes:])
    return round(s_long * cfg.min_successes / long) == s_short


def reach_failed_operator(ipt: StretchIPT, world: World, o_i: GroundOperator, seed, *,
                          occurrence: int | None = None) -> None:
    """Reset ``world`` and run the plan up to the failing occurrence of ``o_i``.

    With ``occurrence`` set, stop before that (1-based) attempt instead.
    """
    world.reset(seed)
    out = run_plan(ipt, world, stop_before=o_i.id, occurrence=occurrence, rng=np.random.default_rng(seed))
    if out.reason != "stopped":
        raise PrefixExecutionFailed(f"did not reach {o_i.id}: {out.reason}")


def novel_entities_present(world: World, candidates) -> list:
    st = world.state
    return [e for e in candidates if st.count(e) > 0]


def curriculum_reset(world: World, novel, rng: np.random.Generator) -> list:
    """Walk to a randomly chosen novel entity; return the primitive transitions."""
    present = novel_entities_present(world, novel)
    if not present:
        raise NoNovelEntity("no novel entity in the arena")
    target = present[int(rng.integers(len(present)))]
    transitions = []
    for action in world.plan_path(target):
        before = world.observe().vector()
        _, events = world.step(action)
        transitions.append((before, action, events))
    return transitions


def write_log(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        w.writerows(rows)


def discover_executor(o_i: GroundOperator, plan, ipt: StretchIPT, strategy: str = "KGE-UCB",
                      cfg: DiscoveryConfig | None = None, seed: int = 0, index: int | None = None) -> Executor:
    """Train a policy whose rollouts reach plannable effect states of ``o_i``."""
    cfg = cfg or DiscoveryConfig()
    strategy = learner.normalize_strategy(strategy)
    rng = np.random.default_rng(seed)
    steps_plan = tuple(plan)
    idx = _index_of(steps_plan, o_i if index is None else index)
    tail = supporting_tail(steps_plan, idx)
    actions = ipt.base_actions() + ipt.registry.action_names()
    biased = set(ipt.novel_actions()) | {realize(o_i)}
    delta = tuple(i for i, a in enumerate(actions) if a in biased)
    world = ipt.make_world(horizon=cfg.world_horizon)
    novel = ipt.novelty.curriculum if ipt.novelty else ()

    obs_dim = 10 * len(world.entities) + 1
    params = learner.PolicyParams.init(obs_dim, len(actions), rng, alpha=cfg.alpha, gamma=cfg.gamma,
                                       optimizer=cfg.optimizer)
    expl = learner.ExplorationState(strategy, delta, len(actions), cfg.eps_max, cfg.c, cfg.mu)
    buffer = learner.EpisodeBuffer()
    successes: list = []
    returns: list = []
    rows: list = []
    timesteps = 0
    best = (-1.0, params.copy())
    done_training = False
    ep = 0
    for ep in range(cfg.max_episodes):
        eps = learner.decayed(ep, cfg.eps_max, cfg.eps_min, cfg.decay)
        rho = learner.decayed(ep, cfg.rho_max, cfg.rho_min, cfg.decay)
        expl.epsilon = eps
        for _ in range(cfg.prefix_retries):
            try:
                reach_failed_operator(ipt, world, o_i, int(rng.integers(2**31)))
                break
            except PrefixExecutionFailed as exc:
                last = exc
        else:
            raise last
        world.state.step_count = 0
        s0 = ipt.detector(world.state)
        sr = plannable_states(steps_plan, idx, s0)

        steps, ret, success = 0, 0.0, False
        if strategy != "EG" and novel and rng.random() < rho:
            try:
                for before, action, _ in curriculum_reset(world, novel, rng):
                    buffer.append(before, actions.index(action), cfg.step_reward, False)
                    steps += 1
                    ret += cfg.step_reward
            except (NoNovelEntity, NoPath, NoTarget):
                pass
        done = steps >= cfg.horizon
        while not done:
            x = world.observe().vector()
            a = learner.select_action(learner.policy_probs(params, x), expl, rng, sample=cfg.sample_actions)
            steps += 1
            try:
                ipt.act(world, actions[a], 0, rng)
            except EpisodeOver:
                buffer.append(x, a, cfg.step_reward, True)
                ret += cfg.step_reward
                break
            r, done = reward(sr, ipt.detector(world.state), ipt.planner, steps, cfg)
            buffer.append(x, a, r, done)
            ret += r
            success = r == cfg.success_reward
        buffer.end_episode()
        timesteps += steps
        successes.append(int(success))
        returns.append(ret)
        if (ep + 1) % cfg.update_rate == 0:
            params = learner.update_network(params, buffer, baseline=cfg.baseline)
            rate = float(np.mean(successes[-cfg.window:]))
            if rate >= best[0]:
                best = (rate, params.copy())
        done_training = converged(successes, returns, cfg)
        rows.append((ep, steps, ret, int(success), round(eps, 6), round(rho, 6), int(done_training)))
        if done_training:
            break
    policy = params if done_training else best[1]
    return Executor(o_i, actions, tail, policy, converged=done_training, timesteps=timesteps, episodes=ep + 1,
                    meta={"strategy": strategy, "seed": int(seed)}, training_log=rows)
