import pytest

from rapidlearn.bridge import GOAL, domain_objects
from rapidlearn.symbolic import PlanningTask, SymbolicState, load_domain


def pre_novelty_task(trees: int = 6, **inventory) -> PlanningTask:
    d = load_domain()
    fluents = {("world", "tree_log"): trees, ("world", "crafting_table"): 1, ("world", "air"): 100}
    fluents.update({("inventory", k): v for k, v in inventory.items()})
    init = SymbolicState.make({("facing", "air"), ("holding", "air")}, fluents)
    return PlanningTask(d, domain_objects(d), init, GOAL)


def hand_plan():
    """Eighteen operators: gather three logs, craft, tap a tree, craft the pogo stick."""
    d = load_domain()
    g = lambda name, *args: d.operator(name).ground(args)
    steps = []
    for _ in range(3):
        steps += [g("approach", "air", "tree_log"), g("break")]
    steps += [g("craftplank")] * 3 + [g("craftstick")] * 2
    steps += [
        g("approach", "air", "crafting_table"), g("crafttree_tap"), g("select", "tree_tap"),
        g("approach", "crafting_table", "tree_log"), g("extractrubber"),
        g("approach", "tree_log", "crafting_table"), g("craftpogo_stick"),
    ]
    return steps


@pytest.fixture
def task():
    return pre_novelty_task()


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
