"""Weighted best-first forward search for numeric STRIPS tasks."""
from __future__ import annotations

import heapq
import itertools
from collections import OrderedDict
from dataclasses import dataclass

from rapidlearn.symbolic import (
    Comparison,
    GroundOperator,
    Literal,
    PlanningTask,
    SymbolicState,
    apply,
    applicable,
    ground,
)

DEFAULT_BUDGET = 200_000


class PlannerTimeout(RuntimeError):
    """Node budget exhausted before the search space was."""


@dataclass(frozen=True)
class SearchConfig:
    weight: float = 2.0
    heuristic: str = "goal-count"
    budget: int = DEFAULT_BUDGET
    tie_break: str = "fifo"

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("node budget must be positive")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"unknown heuristic {self.heuristic!r}")
        if self.tie_break not in ("fifo", "lifo"):
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")


@dataclass(frozen=True)
class Plan:
    steps: tuple = ()

    @property
    def cost(self) -> int:
        return len(self.steps)

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]


@dataclass(frozen=True)
class _CompiledOp:
    op: GroundOperator
    pos: frozenset
    neg: frozenset
    num_pre: tuple  # (index, op, value)
    add: frozenset
    dele: frozenset
    num_eff: tuple  # (index, delta)


def _goal_count(facts, values, goal_lits, goal_nums) -> float:
    h = 0.0
    for atom, positive in goal_lits:
        if (atom in facts) != positive:
            h += 1.0
    for idx, op, k in goal_nums:
        v = values[idx]
        if op == ">=" and v < k:
            h += min(1.0, (k - v) / k) if k > 0 else 1.0
        elif op == "<=" and v > k:
            h += min(1.0, (v - k) / max(v, 1))
        elif op == "=" and v != k:
            h += 1.0
    return h


def _blind(facts, values, goal_lits, goal_nums) -> float:
    return 0.0 if _goal_count(facts, values, goal_lits, goal_nums) == 0 else 1.0


HEURISTICS = {"goal-count": _goal_count, "blind": _blind}


def _cmp(v: int, op: str, k: int) -> bool:
    if op == ">=":
        return v >= k
    if op == "<=":
        return v <= k
    return v == k


class Planner:
    """Search engine compiled once per (domain, objects, goal).

    ``plan_from`` results are memoised on the start state, which keeps the
    per-step plannability checks made during learning cheap.
    """

    def __init__(self, task: PlanningTask, cfg: SearchConfig | None = None, cache_size: int = 50_000):
        self.task = task
        self.cfg = cfg or SearchConfig()
        self.ops = ground(task.domain, task.objects)
        keys = set(k for k, _ in task.init.fluent_items)
        for o in self.ops:
            for c in (*o.precondition, *o.effect):
                if not isinstance(c, Literal):
                    keys.add(c.key)
        for c in task.goal:
            if isinstance(c, Comparison):
                keys.add(c.key)
        self.keys = tuple(sorted(keys))
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.compiled = [self._compile(o) for o in self.ops]
        self.goal_lits = tuple((c.atom, c.positive) for c in task.goal if isinstance(c, Literal))
        self.goal_nums = tuple((self.index[c.key], c.op, c.value) for c in task.goal if isinstance(c, Comparison))
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self.timeouts = 0

    def _compile(self, o: GroundOperator) -> _CompiledOp:
        pos = frozenset(c.atom for c in o.precondition if isinstance(c, Literal) and c.positive)
        neg = frozenset(c.atom for c in o.precondition if isinstance(c, Literal) and not c.positive)
        num_pre = tuple((self.index[c.key], c.op, c.value) for c in o.precondition if isinstance(c, Comparison))
        add = frozenset(e.atom for e in o.add_effects)
        dele = frozenset(e.atom for e in o.delete_effects)
        num_eff = tuple((self.index[e.key], e.delta) for e in o.numeric_effects)
        return _CompiledOp(o, pos, neg, num_pre, add, dele, num_eff)

    def encode(self, s: SymbolicState) -> tuple:
        fl = s.fluents
        return (s.facts, tuple(fl.get(k, 0) for k in self.keys))

    def is_goal(self, facts, values) -> bool:
        for atom, positive in self.goal_lits:
            if (atom in facts) != positive:
                return False
        return all(_cmp(values[i], op, k) for i, op, k in self.goal_nums)

    def successors(self, facts, values):
        for c in self.compiled:
            if not c.pos <= facts or c.neg & facts:
                continue
            if not all(_cmp(values[i], op, k) for i, op, k in c.num_pre):
                continue
            vals = list(values)
            ok = True
            for i, d in c.num_eff:
                vals[i] += d
                if vals[i] < 0:
                    ok = False
            if not ok:
                continue
            yield c.op, ((facts - c.dele) | c.add), tuple(vals)

    def plan_from(self, state: SymbolicState) -> Plan | None:
        """Plan from ``state``; ``None`` means proven unsolvable.

        Raises :class:`PlannerTimeout` when the node budget runs out.
        """
        key = self.encode(state)
        if key in self._cache:
            self._cache.move_to_end(key)
            result = self._cache[key]
            if isinstance(result, PlannerTimeout):
                raise result
            return result
        try:
            result = self._search(*key)
        except PlannerTimeout as exc:
            self.timeouts += 1
            result = exc
        self._cache[key] = result
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        if isinstance(result, PlannerTimeout):
            raise result
        return result

    def _search(self, facts, values) -> Plan | None:
        h = HEURISTICS[self.cfg.heuristic]
        w = self.cfg.weight
        counter = itertools.count()
        sign = 1 if self.cfg.tie_break == "fifo" else -1
        start = (facts, values)
        parents: dict = {start: None}
        g_of = {start: 0}
        frontier = [(w * h(facts, values, self.goal_lits, self.goal_nums), sign * next(counter), start)]
        expansions = 0
        while frontier:
            _, _, node = heapq.heappop(frontier)
            nf, nv = node
            if self.is_goal(nf, nv):
                return Plan(self._extract(parents, node))
            expansions += 1
            if expansions > self.cfg.budget:
                raise PlannerTimeout(f"node budget {self.cfg.budget} exhausted")
            g = g_of[node] + 1
            for op, sf, sv in self.successors(nf, nv):
                child = (sf, sv)
                if child in g_of:
                    continue
                g_of[child] = g
                parents[child] = (node, op)
                f = g + w * h(sf, sv, self.goal_lits, self.goal_nums)
                heapq.heappush(frontier, (f, sign * next(counter), child))
        return None

    @staticmethod
    def _extract(parents, node) -> tuple:
        steps = []
        while parents[node] is not None:
            node, op = parents[node]
            steps.append(op)
        return tuple(reversed(steps))

    def exists_plan(self, state: SymbolicState) -> bool | None:
        if self.is_goal(*self.encode(state)):
            return True
        try:
            return self.plan_from(state) is not None
        except PlannerTimeout:
            return None


def plan(task: PlanningTask, cfg: SearchConfig | None = None) -> Plan | None:
    """Return a plan for ``task``, or ``None`` when none exists."""
    return Planner(task, cfg).plan_from(task.init)


def validate(p: Plan | tuple, task: PlanningTask) -> tuple[bool, int | None]:
    """Check sequential applicability and the goal.

    Returns ``(ok, index)`` where ``index`` is the first failing step, or
    ``len(plan)`` when all steps apply but the goal does not hold.
    """
    steps = tuple(p)
    s = task.init
    for i, o in enumerate(steps):
        if not applicable(s, o):
            return False, i
        try:
            s = apply(s, o, check=False)
        except Exception:
            return False, i
    if not s.satisfies(task.goal):
        return False, len(steps)
    return True, None


def exists_plan(s: SymbolicState, task: PlanningTask, cfg: SearchConfig | None = None) -> bool | None:
    """True/False when decided, ``None`` when the search timed out."""
    return Planner(task.with_init(s), cfg).exists_plan(s)
