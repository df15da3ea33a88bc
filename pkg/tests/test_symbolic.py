import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapidlearn.bridge import domain_objects
from rapidlearn.novelty import list_novelties, patch_domain, get_novelty
from rapidlearn.symbolic import (
    Comparison,
    InapplicableOperator,
    Literal,
    NegativeFluent,
    PDDLSyntaxError,
    PlanningTask,
    SymbolicState,
    UndeclaredError,
    UnsupportedConstruct,
    PDDLError,
    applicable,
    apply,
    effects_hold,
    ground,
    load_domain,
    load_domain_text,
    parse_domain,
    parse_problem,
    serialize_domain,
    serialize_problem,
)

NINE = dict(domain_objects(load_domain()))


def op(name, *args):
    d = load_domain()
    return d.operator(name).ground(args)


def corpus():
    base = load_domain()
    return [base] + [patch_domain(base, get_novelty(nid)) for nid, _ in list_novelties()]


def test_domain_shape():
    d = load_domain()
    assert {o.name for o in d.operators} == {
        "approach", "crafttree_tap", "craftplank", "break", "craftstick", "extractrubber", "craftpogo_stick", "select",
    }
    assert [p.name for p in d.predicates] == ["holding", "floating", "facing"]
    assert [f.name for f in d.functions] == ["world", "inventory"]


def test_plank_bound_is_tightened(caplog):
    d = parse_domain(load_domain_text())
    pre = d.operator("crafttree_tap").precondition
    assert Comparison("inventory", ("plank",), ">=", 5) in pre
    assert "tightening" in caplog.text


def test_empty_domain():
    d = parse_domain("(define (domain tiny) (:requirements :strips) (:predicates (p)))")
    assert d.operators == () and [p.name for p in d.predicates] == ["p"]


def test_misspelled_effect_reports_location():
    text = load_domain_text().replace(":effect", ":efect", 1)
    with pytest.raises(PDDLError) as info:
        parse_domain(text)
    assert ":efect" in str(info.value)
    assert "line" in str(info.value)


def test_syntax_error_position():
    with pytest.raises(PDDLSyntaxError) as info:
        parse_domain("(define (domain x)\n  (:predicates (p)")
    assert info.value.line >= 1


def test_unsupported_construct():
    text = "(define (domain x) (:predicates (p)) (:action a :parameters () :precondition (or (p) (p)) :effect (p)))"
    with pytest.raises(UnsupportedConstruct):
        parse_domain(text)


def test_undeclared_predicate():
    text = "(define (domain x) (:predicates (p)) (:action a :parameters () :precondition (q) :effect (p)))"
    with pytest.raises(UndeclaredError):
        parse_domain(text)


PROBLEM = """
(define (problem pogo)
  (:domain pogostick)
  (:objects air crafting_table tree_log pogo_stick - physobj)
  (:init (facing air) (= (world tree_log) 5) (= (inventory pogo_stick) 0))
  (:goal (>= (inventory pogo_stick) 1)))
"""


def test_parse_problem():
    task = parse_problem(PROBLEM, load_domain())
    assert task.goal == (Comparison("inventory", ("pogo_stick",), ">=", 1),)
    assert task.init.value(("world", "tree_log")) == 5
    assert ("facing", "air") in task.init.facts


def test_problem_unknown_type():
    with pytest.raises(UndeclaredError, match="unknown type"):
        parse_problem(PROBLEM.replace("- physobj", "- dragon"), load_domain())


def test_problem_round_trip():
    d = load_domain()
    task = parse_problem(PROBLEM, d)
    again = parse_problem(serialize_problem(task), d)
    assert again.init == task.init and again.goal == task.goal and again.objects == task.objects


@pytest.mark.parametrize("domain", corpus(), ids=["base"] + [nid for nid, _ in list_novelties()])
def test_domain_round_trip(domain):
    assert parse_domain(serialize_domain(domain)) == domain


def test_grounding_counts():
    d = load_domain()
    raw = ground(d, NINE, prune_identical=False)
    pruned = ground(d, NINE)
    count = lambda ops, n: sum(o.name == n for o in ops)
    assert count(raw, "approach") == 81
    assert count(pruned, "approach") == 72
    assert count(pruned, "select") == 9
    for name in ("crafttree_tap", "craftplank", "break", "craftstick", "extractrubber", "craftpogo_stick"):
        assert count(pruned, name) == 1


def test_grounding_without_physobj():
    ops = ground(load_domain(), {})
    assert {o.name for o in ops} == {"crafttree_tap", "craftplank", "break", "craftstick", "extractrubber", "craftpogo_stick"}


def test_applicable_examples():
    s = SymbolicState.make({("facing", "air")})
    assert not applicable(s, op("break"))
    assert applicable(SymbolicState.make(fluents={("inventory", "tree_log"): 1}), op("craftplank"))
    floating = SymbolicState.make({("facing", "tree_log"), ("floating", "tree_log")}, {("world", "tree_log"): 1})
    assert not applicable(floating, op("break"))


def test_apply_break():
    s = SymbolicState.make({("facing", "tree_log")}, {("world", "tree_log"): 5})
    out = apply(s, op("break"))
    assert out == SymbolicState.make(
        {("facing", "air")}, {("inventory", "tree_log"): 1, ("world", "air"): 1, ("world", "tree_log"): 4}
    )


def test_apply_craftstick():
    out = apply(SymbolicState.make(fluents={("inventory", "plank"): 2}), op("craftstick"))
    assert out.value(("inventory", "plank")) == 0
    assert out.value(("inventory", "stick")) == 4


def test_apply_inapplicable():
    with pytest.raises(InapplicableOperator):
        apply(SymbolicState(), op("craftstick"))


def test_negative_fluent_rejected():
    with pytest.raises(NegativeFluent):
        SymbolicState.make(fluents={("inventory", "plank"): -1})


# -- properties ---------------------------------------------------------------

FLUENT_KEYS = [(f, o) for f in ("world", "inventory") for o in NINE]
states = st.builds(
    lambda facing, holding, vals: SymbolicState.make(
        {("facing", facing), ("holding", holding)}, dict(zip(FLUENT_KEYS, vals))
    ),
    st.sampled_from(sorted(NINE)),
    st.sampled_from(sorted(NINE)),
    st.lists(st.integers(0, 8), min_size=len(FLUENT_KEYS), max_size=len(FLUENT_KEYS)),
)
OPS = ground(load_domain(), NINE)


@settings(max_examples=300, deadline=None)
@given(states, st.sampled_from(OPS))
def test_apply_keeps_invariants(s, o):
    if not applicable(s, o):
        return
    out = apply(s, o)
    assert all(v >= 0 for v in out.fluents.values())
    assert sum(1 for a in out.facts if a[0] == "facing") <= 1
    assert effects_hold(out, o, s)


@settings(max_examples=200, deadline=None)
@given(states, st.sampled_from(OPS), st.sampled_from(sorted(NINE)))
def test_applicable_monotone_in_unrelated_facts(s, o, obj):
    if any(isinstance(c, Literal) and not c.positive for c in o.precondition):
        return
    more = SymbolicState(s.facts | {("floating", obj)}, s.fluent_items)
    if applicable(s, o):
        assert applicable(more, o)


def test_every_corpus_operator_achieves_its_effects():
    for d in corpus():
        objs = dict(domain_objects(d))
        for o in ground(d, objs):
            s = SymbolicState.make({a.atom for a in o.precondition if isinstance(a, Literal) and a.positive},
                                   {c.key: c.value for c in o.precondition if isinstance(c, Comparison)})
            if applicable(s, o):
                assert effects_hold(apply(s, o), o, s)


def test_task_with_init():
    task = PlanningTask(load_domain(), tuple(NINE.items()), SymbolicState(), ())
    s = SymbolicState.make({("facing", "air")})
    assert task.with_init(s).init == s
