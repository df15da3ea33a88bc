"""NovelGridworlds-style crafting arena.

A walled square grid holding trees and a crafting table. The agent has a
position, a heading, an inventory and a selected item. Novelties extend the
entity set, add actions and switch on extra transition rules (``rules``).
"""
from __future__ import annotations

import configparser
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

HEADINGS = ("N", "E", "S", "W")
_STEP = ((0, -1), (1, 0), (0, 1), (-1, 0))
# Compass rays starting at north, clockwise in 45 degree increments.
_RAYS = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))

AIR = ""
WALL = "wall"

BASE_ENTITIES = ("crafting_table", "plank", "pogo_stick", "rubber", "stick", "tree_log", "tree_tap")
BASE_ITEMS = ("plank", "pogo_stick", "rubber", "stick", "tree_log", "tree_tap")
BASE_TARGETS = ("crafting_table", "tree_log")
NAVIGATION = ("turn-left", "turn-right", "move-forward")
INTERACTION = ("break", "extract-rubber")
CRAFTING = ("craft-planks", "craft-stick", "craft-tree-tap", "craft-pogostick")
COLLECTIBLE = frozenset({"axe", "water"})


class PlacementOverflow(ValueError):
    pass


class EpisodeOver(RuntimeError):
    pass


class NoPath(RuntimeError):
    pass


class NoTarget(RuntimeError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    size: int = 12
    counts: tuple = (("tree_log", 6), ("crafting_table", 1))
    horizon: int = 300

    @classmethod
    def from_file(cls, path: str) -> "WorldConfig":
        """Read ``[world]`` (size, horizon) and ``[counts]`` sections."""
        cp = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        base = cls()
        size = cp.getint("world", "size", fallback=base.size)
        horizon = cp.getint("world", "horizon", fallback=base.horizon)
        counts = tuple((k, int(v)) for k, v in cp.items("counts")) if cp.has_section("counts") else base.counts
        return cls(size, counts, horizon)


@dataclass
class WorldState:
    grid: list  # grid[y][x]: entity id, AIR or WALL
    pos: tuple
    heading: int
    inventory: dict
    selected: str | None = None
    fire: set = field(default_factory=set)
    tapped: set = field(default_factory=set)
    step_count: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            [row[:] for row in self.grid], self.pos, self.heading, dict(self.inventory),
            self.selected, set(self.fire), set(self.tapped), self.step_count,
        )

    def key(self) -> tuple:
        inv = tuple(sorted((k, v) for k, v in self.inventory.items() if v))
        return (
            tuple(tuple(r) for r in self.grid), self.pos, self.heading, inv, self.selected,
            tuple(sorted(self.fire)), tuple(sorted(self.tapped)), self.step_count,
        )

    @property
    def size(self) -> int:
        return len(self.grid)

    def front(self) -> tuple:
        dx, dy = _STEP[self.heading]
        return (self.pos[0] + dx, self.pos[1] + dy)

    def cell(self, xy) -> str:
        x, y = xy
        return self.grid[y][x]

    def count(self, entity: str) -> int:
        if entity == "fire":
            return len(self.fire)
        if entity == "tree_tap":
            return len(self.tapped)
        target = AIR if entity == "air" else entity
        return sum(row.count(target) for row in self.grid)


@dataclass(frozen=True)
class Observation:
    lidar: np.ndarray
    inventory: np.ndarray
    selected: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.lidar, self.inventory, self.selected])


@dataclass(frozen=True)
class ActionSpace:
    names: tuple

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def extended(self, extra: Iterable[str]) -> "ActionSpace":
        names = list(self.names)
        for a in extra:
            if a not in names:
                names.append(a)
        return ActionSpace(tuple(names))


def base_action_space() -> ActionSpace:
    return ActionSpace(
        NAVIGATION + INTERACTION + CRAFTING
        + tuple(f"select-{i}" for i in BASE_ITEMS)
        + tuple(f"approach-{e}" for e in BASE_TARGETS)
    )


def _ray_distance(k: int, diagonal: bool) -> float:
    return k * (math.sqrt(2.0) if diagonal else 1.0)


def observe(state: WorldState, entities: tuple) -> Observation:
    """LiDAR-like beams, inventory counts and the selected-item one-hot.

    Eight beams per entity type at 45 degree increments from the heading.
    Each reports the Euclidean distance to the first cell holding that type,
    divided by the arena diagonal; 1.0 when a wall comes first.
    """
    n = state.size
    diag = math.sqrt(2.0 * n * n)
    index = {e: i for i, e in enumerate(entities)}
    lidar = np.ones((len(entities), 8))
    x0, y0 = state.pos
    for beam in range(8):
        dx, dy = _RAYS[(2 * state.heading + beam) % 8]
        diagonal = dx != 0 and dy != 0
        x, y, k = x0, y0, 0
        seen = set()
        while True:
            x += dx
            y += dy
            k += 1
            if not (0 <= x < n and 0 <= y < n):
                break
            content = state.grid[y][x]
            if content == WALL:
                break
            hits = []
            if content:
                hits.append(content)
            if (x, y) in state.fire:
                hits.append("fire")
            if (x, y) in state.tapped:
                hits.append("tree_tap")
            for h in hits:
                i = index.get(h)
                if i is not None and h not in seen:
                    seen.add(h)
                    lidar[i, beam] = _ray_distance(k, diagonal) / diag
    inv = np.array([float(state.inventory.get(e, 0)) for e in entities])
    sel = np.zeros(len(entities) + 1)
    sel[index[state.selected] if state.selected in index else len(entities)] = 1.0
    return Observation(lidar.reshape(-1), inv, sel)


class World:
    """Mutable simulator for one episode at a time.

    ``rules`` names the transition overrides currently active (installed by
    novelty injection); ``spawn_inventory`` / ``spawn_world`` are re-applied
    on every :meth:`reset`.
    """

    def __init__(self, config: WorldConfig | None = None, *, trace: IO | None = None):
        self.config = config or WorldConfig()
        self.entities: tuple = BASE_ENTITIES
        self.rules: frozenset = frozenset()
        self.spawn_inventory: dict = {}
        self.spawn_world: dict = {}
        self.extra_actions: tuple = ()
        self.trace = trace
        self.state: WorldState | None = None
        self.rng: np.random.Generator | None = None
        self._version = 0
        self._obs: tuple = (-1, None)

    # -- configuration ----------------------------------------------------

    def add_entities(self, names: Iterable[str]) -> None:
        ents = list(self.entities)
        for e in names:
            if e not in ents:
                ents.append(e)
        self.entities = tuple(ents)
        self._version += 1

    @property
    def action_space(self) -> ActionSpace:
        return base_action_space().extended(self.extra_actions)

    def inject_into_episode(self, inventory: Mapping[str, int], placements: Mapping[str, int]) -> None:
        """Apply spawns and rule side-effects to the running episode."""
        st = self.state
        for e, k in inventory.items():
            st.inventory[e] = st.inventory.get(e, 0) + k
        free = [(x, y) for y, row in enumerate(st.grid) for x, c in enumerate(row) if c == AIR and (x, y) != st.pos]
        needed = sum(placements.values())
        if needed > len(free):
            raise PlacementOverflow(f"{needed} placements for {len(free)} free cells")
        order = self.rng.permutation(len(free))
        cursor = 0
        for e, k in sorted(placements.items()):
            for _ in range(k):
                x, y = free[order[cursor]]
                st.grid[y][x] = e
                cursor += 1
        if "fire-table" in self.rules:
            st.fire |= {(x, y) for y, row in enumerate(st.grid) for x, c in enumerate(row) if c == "crafting_table"}
        self._version += 1

    # -- episode ----------------------------------------------------------

    def reset(self, seed) -> Observation:
        self.rng = np.random.default_rng(seed)
        n = self.config.size
        grid = [[WALL if x in (0, n - 1) or y in (0, n - 1) else AIR for x in range(n)] for y in range(n)]
        free = [(x, y) for y in range(1, n - 1) for x in range(1, n - 1)]
        placements = [(e, c) for e, c in self.config.counts] + sorted(self.spawn_world.items())
        needed = sum(c for _, c in placements) + 1
        if needed > len(free):
            raise PlacementOverflow(f"{needed} placements for {len(free)} free cells")
        order = self.rng.permutation(len(free))
        cursor = 0
        for entity, count in placements:
            for _ in range(count):
                x, y = free[order[cursor]]
                grid[y][x] = entity
                cursor += 1
        pos = free[order[cursor]]
        heading = int(self.rng.integers(4))
        self.state = WorldState(grid, pos, heading, dict(self.spawn_inventory))
        if "fire-table" in self.rules:
            self.state.fire = {(x, y) for y in range(n) for x in range(n) if grid[y][x] == "crafting_table"}
        self._version += 1
        return self.observe()

    def observe(self) -> Observation:
        # Cached until the next transition; callers that edit ``state`` by
        # hand should go through restore().
        version, obs = self._obs
        if version != self._version:
            obs = observe(self.state, self.entities)
            self._obs = (self._version, obs)
        return obs

    def snapshot(self) -> WorldState:
        return self.state.copy()

    def restore(self, state: WorldState) -> None:
        self.state = state.copy()
        self._version += 1

    @property
    def done(self) -> bool:
        return self.state.step_count >= self.config.horizon

    # -- transitions ------------------------------------------------------

    def _inv(self, item: str) -> int:
        return self.state.inventory.get(item, 0)

    def _add(self, item: str, k: int) -> None:
        st = self.state
        st.inventory[item] = st.inventory.get(item, 0) + k
        if st.inventory[item] <= 0:
            del st.inventory[item]
            if st.selected == item:
                st.selected = None

    def step(self, action: str) -> tuple:
        """Apply one primitive action; return ``(observation, events)``."""
        return self.observe(), self._primitive(action)

    def _primitive(self, action: str) -> list:
        st = self.state
        if st.step_count >= self.config.horizon:
            raise EpisodeOver(f"horizon {self.config.horizon} reached")
        events = self._transition(action)
        st.step_count += 1
        if self.trace is not None:
            self.trace.write(json.dumps({
                "step": st.step_count, "action": action, "event": events,
                "pos": list(st.pos), "heading": HEADINGS[st.heading],
            }) + "\n")
        self._version += 1
        return events

    def _transition(self, action: str) -> list:
        st = self.state
        front = st.front()
        ahead = st.cell(front)
        rules = self.rules
        if action == "turn-left":
            st.heading = (st.heading - 1) % 4
            return ["turned"]
        if action == "turn-right":
            st.heading = (st.heading + 1) % 4
            return ["turned"]
        if action == "move-forward":
            if ahead != AIR:
                return ["blocked"]
            st.pos = front
            return ["moved"]
        if action == "break":
            if ahead == "tree_log":
                if "scrape-plank" in rules:
                    return ["action-failed"]
                if "break-needs-axe" in rules and st.selected != "axe":
                    return ["action-failed"]
                st.grid[front[1]][front[0]] = AIR
                self._add("tree_log", 1)
                return ["broke:tree_log"]
            if ahead in COLLECTIBLE:
                st.grid[front[1]][front[0]] = AIR
                self._add(ahead, 1)
                return [f"collected:{ahead}"]
            return ["action-failed"]
        if action == "extract-rubber":
            return self._extract(ahead, front)
        if action == "craft-planks":
            if self._inv("tree_log") < 1:
                return ["action-failed"]
            self._add("tree_log", -1)
            self._add("plank", 4)
            return ["crafted:plank"]
        if action == "craft-stick":
            if self._inv("plank") < 2:
                return ["action-failed"]
            self._add("plank", -2)
            self._add("stick", 4)
            return ["crafted:stick"]
        if action == "craft-tree-tap":
            if not self._at_table(ahead, front) or self._inv("plank") < 5 or self._inv("stick") < 1:
                return ["action-failed"]
            self._add("plank", -5)
            self._add("stick", -1)
            self._add("tree_tap", 1)
            return ["crafted:tree_tap"]
        if action == "craft-pogostick":
            if (not self._at_table(ahead, front) or self._inv("plank") < 2 or self._inv("stick") < 4
                    or self._inv("rubber") < 1):
                return ["action-failed"]
            self._add("plank", -2)
            self._add("stick", -4)
            self._add("rubber", -1)
            self._add("pogo_stick", 1)
            return ["crafted:pogo_stick"]
        if action.startswith("select-"):
            item = action[len("select-"):]
            if self._inv(item) < 1:
                return ["action-failed"]
            st.selected = item
            return [f"selected:{item}"]
        if action == "spray" and "fire-table" in rules:
            if st.selected != "water" or self._inv("water") < 1 or front not in st.fire:
                return ["action-failed"]
            st.fire.discard(front)
            self._add("water", -1)
            return ["extinguished"]
        if action == "place-tree-tap" and "rubber-tree-tap" in rules:
            if ahead != "rubber_tree" or front in st.tapped or self._inv("tree_tap") < 1:
                return ["action-failed"]
            st.tapped.add(front)
            self._add("tree_tap", -1)
            return ["placed:tree_tap"]
        if action == "scrape-plank" and "scrape-plank" in rules:
            if ahead != "tree_log":
                return ["action-failed"]
            self._add("plank", 4)
            return ["scraped:plank"]
        raise ValueError(f"unknown action {action!r}")

    def _at_table(self, ahead: str, front: tuple) -> bool:
        return ahead == "crafting_table" and front not in self.state.fire

    def _extract(self, ahead: str, front: tuple) -> list:
        st = self.state
        rules = self.rules
        holding_tap = st.selected == "tree_tap" and self._inv("tree_tap") >= 1
        if "rubber-tree-tap" in rules:
            ok = ahead == "rubber_tree" and front in st.tapped
        elif "rubber-tree-only" in rules:
            ok = ahead == "rubber_tree" and holding_tap
        else:
            ok = ahead == "tree_log" and holding_tap
        if not ok:
            return ["action-failed"]
        self._add("rubber", 1)
        return ["extracted:rubber"]

    # -- hierarchical navigation ------------------------------------------

    def _is_target(self, xy, target: str) -> bool:
        st = self.state
        if target == "fire":
            return xy in st.fire
        if target == "tree_tap":
            return xy in st.tapped
        content = st.cell(xy)
        return content == (AIR if target == "air" else target)

    def plan_path(self, target: str) -> list:
        """Shortest turn/move sequence ending with the agent facing ``target``.

        A* over (x, y, heading); every primitive costs 1. The heuristic is the
        Manhattan distance to the nearest cell adjacent to a target instance.
        """
        st = self.state
        n = st.size
        targets = [(x, y) for y in range(n) for x in range(n) if self._is_target((x, y), target)]
        if target == "air":
            targets = [t for t in targets if t != st.pos]
        if not targets:
            raise NoTarget(target)

        def h(x, y):
            return min(max(abs(x - tx) + abs(y - ty) - 1, 0) for tx, ty in targets)

        start = (st.pos[0], st.pos[1], st.heading)
        target_set = set(targets)
        frontier = [(h(start[0], start[1]), 0, 0, start)]
        parent = {start: None}
        g_cost = {start: 0}
        tick = 0
        while frontier:
            _, g, _, node = heapq.heappop(frontier)
            if g > g_cost[node]:
                continue
            x, y, hd = node
            dx, dy = _STEP[hd]
            if (x + dx, y + dy) in target_set:
                path = []
                while parent[node] is not None:
                    node, act = parent[node]
                    path.append(act)
                return path[::-1]
            succ = [((x, y, (hd - 1) % 4), "turn-left"), ((x, y, (hd + 1) % 4), "turn-right")]
            if st.grid[y + dy][x + dx] == AIR:
                succ.append(((x + dx, y + dy, hd), "move-forward"))
            for nxt, act in succ:
                ng = g + 1
                if ng < g_cost.get(nxt, 1 << 30):
                    g_cost[nxt] = ng
                    parent[nxt] = (node, act)
                    tick += 1
                    heapq.heappush(frontier, (ng + h(nxt[0], nxt[1]), ng, tick, nxt))
        raise NoPath(target)

    def approach(self, target: str) -> list:
        """Navigate to face the nearest ``target``; return the transitions."""
        path = self.plan_path(target)
        transitions = []
        for act in path:
            transitions.append((act, self._primitive(act)))
        return transitions

    def act(self, action: str) -> tuple:
        """Run a primitive or ``approach-<entity>`` action.

        Returns ``(observation, events, primitive_steps)``. A failed approach
        costs one no-op step.
        """
        if action.startswith("approach-"):
            target = action[len("approach-"):]
            try:
                transitions = self.approach(target)
            except (NoPath, NoTarget):
                if self.state.step_count >= self.config.horizon:
                    raise EpisodeOver("horizon reached") from None
                self.state.step_count += 1
                return self.observe(), ["action-failed"], 1
            return self.observe(), [f"approached:{target}"], len(transitions)
        obs, events = self.step(action)
        return obs, events, 1

    def render(self) -> str:
        st = self.state
        glyph = {
            AIR: ".", WALL: "#", "tree_log": "T", "crafting_table": "C", "axe": "a",
            "water": "w", "rubber_tree": "R",
        }
        rows = []
        for y, row in enumerate(st.grid):
            line = []
            for x, c in enumerate(row):
                if (x, y) == st.pos:
                    line.append("^>v<"[st.heading])
                elif (x, y) in st.fire:
                    line.append("F")
                elif (x, y) in st.tapped:
                    line.append("P")
                else:
                    line.append(glyph.get(c, "?"))
            rows.append("".join(line))
        return "\n".join(rows)
