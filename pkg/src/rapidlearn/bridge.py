"""Glue between the symbolic and simulated levels.

Holds the detector, operator execution with impasse detection, learned
executors with their termination test, and the plan-execute-learn loop.
"""
from __future__ import annotations

from collections import Counter
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import chain
from typing import Callable

import numpy as np

from rapidlearn import learner
from rapidlearn.novelty import NoveltySpec, apply_novelty, get_novelty
from rapidlearn.planner import Plan, Planner, PlannerTimeout, SearchConfig
from rapidlearn.symbolic import (
    Comparison,
    Domain,
    GroundOperator,
    Literal,
    PlanningTask,
    SymbolicState,
    applicable,
    effects_hold,
    load_domain,
)
from rapidlearn.world import AIR, WALL, EpisodeOver, World, WorldConfig, WorldState

log = logging.getLogger(__name__)

GOAL = (Comparison("inventory", ("pogo_stick",), ">=", 1),)
ABSTRACT_TYPES = frozenset({"object", "physical", "physobj", "actor", "entity", "var"})
# Rubber trees look like trees to the pre-novelty vocabulary.
PERCEIVED_AS = {"rubber_tree": "tree_log"}
EXEC_PREFIX = "exec:"

_REALIZATION = {
    "break": "break",
    "craftplank": "craft-planks",
    "craftstick": "craft-stick",
    "crafttree_tap": "craft-tree-tap",
    "craftpogo_stick": "craft-pogostick",
    "extractrubber": "extract-rubber",
    "spray": "spray",
    "place_tree_tap": "place-tree-tap",
    "scrape_plank": "scrape-plank",
}


class PreconditionUnmet(RuntimeError):
    pass


class DiscoveryBudgetExhausted(RuntimeError):
    pass


class PrefixExecutionFailed(RuntimeError):
    pass


def realize(o: GroundOperator) -> str:
    """Primitive (or hierarchical) action implementing ``o``."""
    if o.name == "approach":
        return f"approach-{o.args[-1]}"
    if o.name == "select":
        return f"select-{o.args[0]}"
    return _REALIZATION[o.name]


def domain_objects(domain: Domain) -> tuple:
    """One object per concrete physical type, named after the type."""
    return tuple(sorted(
        (t, t) for t, _ in domain.types if t not in ABSTRACT_TYPES and domain.is_subtype(t, "physobj")
    ))


@dataclass(frozen=True)
class Detector:
    objects: tuple  # object names

    def __call__(self, st: WorldState) -> SymbolicState:
        return detect(st, self.objects)


def detect(st: WorldState, objects) -> SymbolicState:
    counts = Counter(chain.from_iterable(st.grid))
    ahead = st.cell(st.front())
    if ahead == AIR:
        facing = "air"
    elif ahead == WALL:
        facing = "wall"
    else:
        facing = PERCEIVED_AS.get(ahead, ahead)
    holding = st.selected or "air"
    fluents = {}
    for name in objects:
        if name == "air":
            n = counts.get(AIR, 0)
        elif name == "fire":
            n = len(st.fire)
        else:
            n = counts.get(name, 0)
        if n:
            fluents[("world", name)] = n
        k = st.inventory.get(name, 0)
        if k:
            fluents[("inventory", name)] = k
    return SymbolicState.make({("facing", facing), ("holding", holding)}, fluents)


@dataclass
class ExecResult:
    success: bool
    transitions: list = field(default_factory=list)
    steps: int = 0  # decision steps (hierarchical actions count once)


def execute_operator(o: GroundOperator, world: World, detector: Detector) -> ExecResult:
    """Run the realization of ``o``; success iff its declared effects now hold."""
    before = detector(world.state)
    if not applicable(before, o):
        raise PreconditionUnmet(f"{o.id} not applicable in {sorted(before.facts)}")
    action = realize(o)
    _, events, _ = world.act(action)
    after = detector(world.state)
    return ExecResult(effects_hold(after, o, before), [(action, events)], 1)


# -- effect clauses --------------------------------------------------------


def effect_clause(o: GroundOperator, s0: SymbolicState, *, with_decreases: bool = True) -> tuple:
    """Conditions expressing that ``o``'s effects have happened since ``s0``."""
    out = []
    for e in o.effect:
        if isinstance(e, Literal):
            out.append(e)
        elif e.op == "increase":
            out.append(Comparison(e.fluent, e.args, ">=", s0.value(e.key) + e.amount))
        elif with_decreases:
            out.append(Comparison(e.fluent, e.args, "<=", s0.value(e.key) - e.amount))
    return tuple(out)


def lower_bounded(conds) -> frozenset:
    return frozenset(c.key for c in conds if isinstance(c, Comparison) and c.op in (">=", "="))


def supporting_tail(plan, index: int) -> tuple:
    """Operators after ``plan[index]`` whose preconditions consume what it produces.

    Only resources the plan actually relies on count as produced, so that
    incidental effects (e.g. freed floor space) do not create spurious links.
    """
    steps = tuple(plan)
    o = steps[index]
    needed = set()
    for p in steps:
        needed |= lower_bounded(p.precondition)
    produced = frozenset(e.key for e in o.numeric_effects if e.op == "increase") & needed
    if not produced:
        return ()
    return tuple(p for p in steps[index + 1:] if produced <= lower_bounded(p.precondition))


def executor_beta(s0: SymbolicState, s: SymbolicState, o: GroundOperator, tail, planner: Planner) -> int:
    """Termination test: effects reached (own or every tail operator's) and goal still plannable."""
    reached = s.satisfies(effect_clause(o, s0))
    if not reached and tail:
        reached = all(s.satisfies(effect_clause(t, s0, with_decreases=False)) for t in tail)
    if not reached:
        return 0
    ok = planner.exists_plan(s)
    if ok is None:
        log.info("plannability unknown for %s; treating as not plannable", o.id)
    return 1 if ok else 0


# -- executors -------------------------------------------------------------


@dataclass
class Executor:
    operator: GroundOperator
    actions: tuple  # action-space snapshot
    tail: tuple = ()
    policy: learner.PolicyParams | None = None
    script: tuple | None = None
    converged: bool = False
    timesteps: int = 0
    episodes: int = 0
    meta: dict = field(default_factory=dict)
    training_log: list = field(default_factory=list, repr=False)

    @property
    def id(self) -> str:
        return self.operator.id

    def initiation(self, s: SymbolicState) -> bool:
        return applicable(s, self.operator)

    def choose(self, obs_vec: np.ndarray, t: int, rng: np.random.Generator | None = None) -> str:
        """Scripted step, a draw from the policy, or its argmax when no rng is given."""
        if self.script is not None:
            return self.script[min(t, len(self.script) - 1)]
        p = learner.policy_probs(self.policy, obs_vec)
        if rng is None:
            return self.actions[int(np.argmax(p))]
        return self.actions[int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))]

    def run(self, ipt: "StretchIPT", world: World, max_steps: int = 300, depth: int = 0,
            rng: np.random.Generator | None = None) -> ExecResult:
        """Roll the policy until the termination test fires."""
        detector = ipt.detector
        s0 = detector(world.state)
        transitions = []
        for t in range(max_steps + 1):
            s = detector(world.state)
            if executor_beta(s0, s, self.operator, self.tail, ipt.planner):
                return ExecResult(True, transitions, t)
            if t == max_steps:
                break
            action = self.choose(world.observe().vector(), t, rng)
            try:
                events = ipt.act(world, action, depth, rng)
            except EpisodeOver:
                return ExecResult(False, transitions, t)
            transitions.append((action, events))
        return ExecResult(False, transitions, max_steps)

    def to_bytes(self, entities) -> bytes:
        meta = {
            "operator": self.operator.id,
            "tail": [o.id for o in self.tail],
            "converged": self.converged,
            "timesteps": self.timesteps,
            "episodes": self.episodes,
            **self.meta,
        }
        if self.script is not None:
            meta["script"] = list(self.script)
            meta["actions"] = list(self.actions)
            return b"SCRIPT " + json.dumps(meta).encode()
        return json.dumps(meta).encode() + b"\n" + learner.dump_params(self.policy, self.actions, entities)

    @classmethod
    def from_bytes(cls, blob: bytes, ipt: "StretchIPT") -> "Executor":
        ops = {o.id: o for o in ipt.planner.ops}
        if blob.startswith(b"SCRIPT "):
            meta = json.loads(blob[7:])
            return cls(ops[meta["operator"]], tuple(meta["actions"]), tuple(ops[i] for i in meta["tail"]),
                       script=tuple(meta["script"]), converged=meta["converged"])
        head, _, rest = blob.partition(b"\n")
        meta = json.loads(head)
        params, header = learner.load_params(rest, entities=ipt.world_entities)
        ex = cls(ops[meta["operator"]], tuple(header["actions"]), tuple(ops[i] for i in meta["tail"]), params,
                 converged=meta["converged"], timesteps=meta["timesteps"], episodes=meta["episodes"])
        unknown = [a for a in ex.actions if not ipt.knows_action(a)]
        if unknown:
            raise learner.ActionSpaceMismatch(f"executor uses unavailable actions {unknown}")
        return ex


class ExecutorRegistry:
    """Failed-operator id to learned executor; one executor per operator."""

    def __init__(self):
        self._by_op: dict = {}

    def __contains__(self, op_id: str) -> bool:
        return op_id in self._by_op

    def __len__(self):
        return len(self._by_op)

    def __iter__(self):
        return iter(self._by_op.values())

    def get(self, op_id: str) -> Executor | None:
        return self._by_op.get(op_id)

    def add(self, ex: Executor) -> None:
        if ex.id in self._by_op:
            raise ValueError(f"executor for {ex.id} already registered")
        self._by_op[ex.id] = ex

    def action_names(self) -> tuple:
        return tuple(EXEC_PREFIX + k for k in self._by_op)


# -- integrated task -------------------------------------------------------


@dataclass
class StretchIPT:
    domain: Domain
    novelty: NoveltySpec | None
    world_config: WorldConfig
    objects: tuple
    detector: Detector
    planner: Planner
    registry: ExecutorRegistry = field(default_factory=ExecutorRegistry)
    trace: object = None
    nested_steps: int = 50

    @classmethod
    def build(cls, novelty: str | NoveltySpec | None = None, config: WorldConfig | None = None,
              search: SearchConfig | None = None, trace=None) -> "StretchIPT":
        domain = load_domain()
        spec = get_novelty(novelty) if isinstance(novelty, str) else novelty
        config = config or WorldConfig()
        if spec is not None:
            _, domain, _ = apply_novelty(World(config), domain, spec)
        objects = domain_objects(domain)
        names = tuple(n for n, _ in objects)
        task = PlanningTask(domain, objects, SymbolicState.make({("facing", "air"), ("holding", "air")}), GOAL)
        return cls(domain, spec, config, objects, Detector(names), Planner(task, search), trace=trace)

    def make_world(self, horizon: int | None = None) -> World:
        cfg = self.world_config
        if horizon is not None:
            cfg = WorldConfig(cfg.size, cfg.counts, horizon)
        w = World(cfg, trace=self.trace)
        if self.novelty is not None:
            apply_novelty(w, self.domain, self.novelty)
        return w

    @cached_property
    def world_entities(self) -> tuple:
        return self.make_world().entities

    @cached_property
    def _base_actions(self) -> tuple:
        return self.make_world().action_space.names

    def base_actions(self) -> tuple:
        return self._base_actions

    def novel_actions(self) -> tuple:
        return self.novelty.new_actions if self.novelty else ()

    def knows_action(self, a: str) -> bool:
        if a.startswith(EXEC_PREFIX):
            return a[len(EXEC_PREFIX):] in self.registry
        return a in self.base_actions()

    def task(self, init: SymbolicState) -> PlanningTask:
        return self.planner.task.with_init(init)

    def plan(self, s: SymbolicState) -> Plan | None:
        return self.planner.plan_from(s)

    def act(self, world: World, action: str, depth: int = 0, rng: np.random.Generator | None = None) -> list:
        """Execute a learner-level action; learned executors run nested."""
        if action.startswith(EXEC_PREFIX):
            ex = self.registry.get(action[len(EXEC_PREFIX):])
            if ex is None or depth > 0:
                return ["action-failed"]
            res = ex.run(self, world, self.nested_steps, depth + 1, rng)
            return ["executor-succeeded" if res.success else "executor-failed"]
        _, events, _ = world.act(action)
        return events


@dataclass
class EpisodeOutcome:
    success: bool
    steps: int  # primitive steps in the evaluation world
    discoveries: list = field(default_factory=list)
    executors_used: list = field(default_factory=list)
    replans: int = 0
    time_to_adapt: int = 0
    reason: str = ""


@dataclass
class _Cursor:
    plan: tuple
    index: int = 0


def run_plan(ipt: StretchIPT, world: World, *, on_impasse: Callable | None = None, stop_before: str | None = None,
             occurrence: int | None = None, max_replans: int = 20, executor_steps: int = 300,
             rng: np.random.Generator | None = None) -> EpisodeOutcome:
    """Execute the plan for the world's current state, handling impasses.

    ``on_impasse(op, plan, index)`` must return an executor (or ``None`` to
    give up) when no registered executor exists. With ``stop_before`` set,
    execution halts right before the first failing operator with that id and
    the world is rolled back to the state preceding it; ``occurrence`` instead
    halts before the k-th (1-based) attempt of that id, failing or not.
    """
    detector = ipt.detector
    out = EpisodeOutcome(False, 0)
    try:
        p = ipt.plan(detector(world.state))
    except PlannerTimeout:
        out.reason = "planner-timeout"
        return out
    if p is None:
        out.reason = "no-plan"
        return out
    cur = _Cursor(tuple(p))
    executor_ran = False
    attempts = 0
    try:
        while cur.index < len(cur.plan):
            o = cur.plan[cur.index]
            s = detector(world.state)
            if not applicable(s, o):
                if not executor_ran:
                    raise PreconditionUnmet(f"{o.id} not applicable at plan step {cur.index}")
                if out.replans >= max_replans:
                    out.reason = "replan-limit"
                    return out
                p = ipt.plan(s)
                if p is None:
                    out.reason = "no-plan"
                    return out
                out.replans += 1
                cur = _Cursor(tuple(p))
                continue
            if stop_before == o.id:
                attempts += 1
                if attempts == occurrence:
                    out.success = True
                    out.reason = "stopped"
                    return out
            snapshot = world.snapshot() if stop_before == o.id and occurrence is None else None
            res = execute_operator(o, world, detector)
            if res.success:
                cur.index += 1
                continue
            if snapshot is not None:
                world.restore(snapshot)
                out.success = True
                out.reason = "stopped"
                return out
            ex = ipt.registry.get(o.id)
            if ex is None:
                ex = on_impasse(o, cur.plan, cur.index) if on_impasse else None
                if ex is None:
                    out.reason = f"impasse:{o.id}"
                    return out
                out.discoveries.append(o.id)
                out.time_to_adapt += ex.timesteps
            run = ex.run(ipt, world, executor_steps, rng=rng)
            out.executors_used.append(o.id)
            if not run.success:
                out.reason = f"executor-failed:{o.id}"
                return out
            cur.index += 1
            executor_ran = True
        s = detector(world.state)
        out.success = s.satisfies(GOAL) and stop_before is None
        if not out.success:
            out.reason = "goal-unreached" if stop_before is None else "target-not-reached"
        return out
    except EpisodeOver:
        out.reason = "budget"
        return out
    finally:
        out.steps = world.state.step_count


def rapid_learn(ipt: StretchIPT, strategy: str = "KGE-UCB", seed: int = 0, *, discovery_cfg=None,
                allow_discovery: bool = True, world: World | None = None) -> EpisodeOutcome:
    """Plan, execute, and learn executors for operators that hit an impasse."""
    from rapidlearn import discovery

    world = world or ipt.make_world()
    world.reset(seed)
    rng = np.random.default_rng([seed, 7919])

    def on_impasse(o, plan, index):
        if not allow_discovery:
            return None
        ex = discovery.discover_executor(o, plan, ipt, strategy, discovery_cfg, int(rng.integers(2**31)), index=index)
        ipt.registry.add(ex)
        if not ex.converged:
            log.warning("executor for %s did not converge", o.id)
        return ex

    return run_plan(ipt, world, on_impasse=on_impasse, rng=np.random.default_rng([seed, 104729]))
