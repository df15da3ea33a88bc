"""Novelty catalogue and injection.

Each novelty pairs a simulator patch (transition rules, spawned entities,
extra primitive actions) with a symbolic patch (new object types and
operators whose effects the agent does not yet know).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from rapidlearn.symbolic import Domain, OperatorSchema
from rapidlearn.world import ActionSpace, World


class UnknownNovelty(KeyError):
    pass


@dataclass(frozen=True)
class NoveltySpec:
    id: str
    description: str
    new_entities: tuple = ()
    new_actions: tuple = ()
    new_operators: tuple = ()
    rules: frozenset = frozenset()
    inventory: tuple = ()  # ((entity, count), ...) granted at reset
    world: tuple = ()  # ((entity, count), ...) placed at reset
    curriculum: tuple = ()  # novel entities the curriculum may navigate to

    def __add__(self, other: "NoveltySpec") -> "NoveltySpec":
        def merge(a, b):
            return a + tuple(x for x in b if x not in a)

        return NoveltySpec(
            f"{self.id}+{other.id}",
            f"{self.description}; {other.description}",
            merge(self.new_entities, other.new_entities),
            merge(self.new_actions, other.new_actions),
            merge(self.new_operators, other.new_operators),
            self.rules | other.rules,
            merge(self.inventory, other.inventory),
            merge(self.world, other.world),
            merge(self.curriculum, other.curriculum),
        )


_ATB_EASY = NoveltySpec(
    "ATB-easy", "trees break only while an axe is selected; axe starts in the inventory",
    new_entities=("axe",), new_actions=("select-axe",),
    rules=frozenset({"break-needs-axe"}), inventory=(("axe", 1),),
)
_ATB_HARD = NoveltySpec(
    "ATB-hard", "trees break only while an axe is selected; axe lies somewhere in the arena",
    new_entities=("axe",), new_actions=("select-axe", "approach-axe"),
    rules=frozenset({"break-needs-axe"}), world=(("axe", 1),), curriculum=("axe",),
)
_FCT_EASY = NoveltySpec(
    "FCT-easy", "crafting table is on fire; spray water to extinguish; water starts in the inventory",
    new_entities=("fire", "water"), new_actions=("select-water", "spray"), new_operators=("spray",),
    rules=frozenset({"fire-table"}), inventory=(("water", 1),), curriculum=("fire",),
)
_FCT_HARD = NoveltySpec(
    "FCT-hard", "crafting table is on fire; water must be collected from the arena first",
    new_entities=("fire", "water"), new_actions=("select-water", "spray", "approach-water"),
    new_operators=("spray",), rules=frozenset({"fire-table"}), world=(("water", 1),),
    curriculum=("fire", "water"),
)
_RT_EASY = NoveltySpec(
    "RT-easy", "rubber comes only from rubber trees, which cannot be broken",
    new_entities=("rubber_tree",), new_actions=("approach-rubber_tree",),
    rules=frozenset({"rubber-tree-only", "rubber-tree-unbreakable"}), world=(("rubber_tree", 2),),
    curriculum=("rubber_tree",),
)
_RT_HARD = NoveltySpec(
    "RT-hard", "rubber comes only from rubber trees fitted with a placed tree tap",
    new_entities=("rubber_tree",), new_actions=("place-tree-tap", "approach-rubber_tree"),
    new_operators=("place_tree_tap",),
    rules=frozenset({"rubber-tree-tap", "rubber-tree-unbreakable"}), world=(("rubber_tree", 2),),
    curriculum=("rubber_tree",),
)
_SP = NoveltySpec(
    "SP", "breaking trees does nothing; scraping a tree yields 4 planks",
    new_actions=("scrape-plank",), new_operators=("scrape_plank",), rules=frozenset({"scrape-plank"}),
)

_CATALOGUE = {
    s.id: s
    for s in (_ATB_EASY, _ATB_HARD, _FCT_EASY, _FCT_HARD, _RT_EASY, _RT_HARD, _SP,
              replace(_ATB_EASY + _FCT_EASY, id="ATB+FCT-easy"))
}


def list_novelties() -> list[tuple[str, str]]:
    return [(s.id, s.description) for s in _CATALOGUE.values()]


def get_novelty(novelty_id: str) -> NoveltySpec:
    try:
        return _CATALOGUE[novelty_id]
    except KeyError:
        raise UnknownNovelty(novelty_id) from None


def patch_domain(domain: Domain, spec: NoveltySpec) -> Domain:
    """Declare the novel entity types and add effect-free novel operators."""
    types = list(domain.types)
    known = {t for t, _ in types}
    for e in spec.new_entities:
        if e not in known:
            types.append((e, "physobj"))
    ops = list(domain.operators)
    names = {o.name for o in ops}
    for name in spec.new_operators:
        if name not in names:
            ops.append(OperatorSchema(name, (), (), ()))
    return replace(domain, types=tuple(types), operators=tuple(ops))


def apply_novelty(world: World, domain: Domain, spec: NoveltySpec | str) -> tuple[World, Domain, ActionSpace]:
    """Install ``spec`` into ``world`` (in place) and return the patched triple.

    If the world already has an active episode, the novelty is injected into
    it immediately; subsequent resets re-apply it.
    """
    if isinstance(spec, str):
        spec = get_novelty(spec)
    world.rules = world.rules | spec.rules
    world.add_entities(spec.new_entities)
    for e, k in spec.inventory:
        world.spawn_inventory[e] = world.spawn_inventory.get(e, 0) + k
    for e, k in spec.world:
        world.spawn_world[e] = world.spawn_world.get(e, 0) + k
    world.extra_actions = tuple(ActionSpace(world.extra_actions).extended(spec.new_actions).names)
    if world.state is not None:
        world.inject_into_episode(dict(spec.inventory), dict(spec.world))
    return world, patch_domain(domain, spec), world.action_space


def scripted_solution(spec: NoveltySpec | None) -> list[str]:
    """A hand-written action sequence that finishes the task under ``spec``.

    Used by tests as evidence that every novelty stays solvable.
    """
    rules = spec.rules if spec else frozenset()
    placed = dict(spec.world) if spec else {}
    acts: list[str] = []
    if "break-needs-axe" in rules:
        if "axe" in placed:
            acts += ["approach-axe", "break"]
        acts += ["select-axe"]
    if "scrape-plank" in rules:
        acts += ["approach-tree_log", "scrape-plank"] * 3
    else:
        acts += ["approach-tree_log", "break"] * 3 + ["craft-planks"] * 3
    acts += ["craft-stick"] * 2
    if "fire-table" in rules:
        if "water" in placed:
            acts += ["approach-water", "break"]
        acts += ["select-water", "approach-fire", "spray"]
    acts += ["approach-crafting_table", "craft-tree-tap"]
    if "rubber-tree-tap" in rules:
        acts += ["approach-rubber_tree", "place-tree-tap", "extract-rubber"]
    elif "rubber-tree-only" in rules:
        acts += ["select-tree_tap", "approach-rubber_tree", "extract-rubber"]
    else:
        acts += ["select-tree_tap", "approach-tree_log", "extract-rubber"]
    acts += ["approach-crafting_table", "craft-pogostick"]
    return acts
