"""Typed PDDL subset: parsing, serialization, grounding and state transitions.

The accepted grammar is deliberately narrow: typing, STRIPS literals with
negation, ``>=`` comparisons over integer fluents, and ``increase`` /
``decrease`` effects. Problem files may additionally initialise fluents with
``=``. Anything else raises :class:`UnsupportedConstruct`.
"""
from __future__ import annotations

import itertools
import functools
import logging
from dataclasses import dataclass, replace
from functools import cached_property
from importlib import resources
from typing import Iterable, Mapping, Sequence, Union

logger = logging.getLogger(__name__)

Atom = tuple  # ("facing", "tree_log")
FluentKey = tuple  # ("inventory", "plank")

ROOT_TYPE = "object"


class PDDLError(ValueError):
    """Base class for every parse or validation failure."""


class PDDLSyntaxError(PDDLError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class UndeclaredError(PDDLError):
    pass


class UnsupportedConstruct(PDDLError):
    pass


class InapplicableOperator(RuntimeError):
    pass


class NegativeFluent(RuntimeError):
    pass


# --------------------------------------------------------------------------
# s-expression reader


class _Tok(str):
    line: int
    col: int

    def __new__(cls, text: str, line: int, col: int):
        obj = super().__new__(cls, text)
        obj.line = line
        obj.col = col
        return obj


class _List(list):
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    tokens: list[_Tok] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            tokens.append(_Tok(ch, line, col))
            i += 1
            col += 1
            continue
        start, start_col = i, col
        while i < n and not text[i].isspace() and text[i] not in "();":
            i += 1
            col += 1
        tokens.append(_Tok(text[start:i].lower(), line, start_col))
    return tokens


def read_sexpr(text: str) -> _List:
    """Read exactly one s-expression tree from ``text``."""
    tokens = _tokenize(text)
    if not tokens:
        raise PDDLSyntaxError("empty input", 1, 1)
    stack: list[_List] = []
    root: _List | None = None
    for tok in tokens:
        if root is not None:
            raise PDDLSyntaxError(f"unexpected token {tok!r} after end of expression", tok.line, tok.col)
        if tok == "(":
            node = _List()
            node.line, node.col = tok.line, tok.col
            if stack:
                stack[-1].append(node)
            stack.append(node)
        elif tok == ")":
            if not stack:
                raise PDDLSyntaxError("unbalanced ')'", tok.line, tok.col)
            node = stack.pop()
            if not stack:
                root = node
        else:
            if not stack:
                raise PDDLSyntaxError(f"token {tok!r} outside any expression", tok.line, tok.col)
            stack[-1].append(tok)
    if stack:
        open_node = stack[-1]
        raise PDDLSyntaxError("unclosed '('", open_node.line, open_node.col)
    assert root is not None
    return root


def _pos(node) -> tuple[int, int]:
    return getattr(node, "line", 0), getattr(node, "col", 0)


def _fail(cls, message: str, node):
    line, col = _pos(node)
    if cls is PDDLSyntaxError:
        return PDDLSyntaxError(message, line, col)
    return cls(f"{message} (line {line}, column {col})")


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple
    positive: bool = True

    @property
    def atom(self) -> Atom:
        return (self.predicate, *self.args)

    def substitute(self, binding: Mapping[str, str]) -> "Literal":
        return Literal(self.predicate, tuple(binding.get(a, a) for a in self.args), self.positive)

    def __str__(self):
        body = "(" + " ".join((self.predicate, *self.args)) + ")"
        return body if self.positive else f"(not {body})"


@dataclass(frozen=True)
class Comparison:
    """Numeric condition ``fluent(args) <op> value``.

    Only ``>=`` is accepted by the parser; ``<=`` appears in internally
    derived conditions (plannable-state clauses).
    """

    fluent: str
    args: tuple
    op: str
    value: int

    @property
    def key(self) -> FluentKey:
        return (self.fluent, *self.args)

    def substitute(self, binding: Mapping[str, str]) -> "Comparison":
        return Comparison(self.fluent, tuple(binding.get(a, a) for a in self.args), self.op, self.value)

    def holds(self, v: int) -> bool:
        if self.op == ">=":
            return v >= self.value
        if self.op == "<=":
            return v <= self.value
        if self.op == "=":
            return v == self.value
        raise ValueError(self.op)

    def __str__(self):
        return f"({self.op} ({' '.join((self.fluent, *self.args))}) {self.value})"


@dataclass(frozen=True)
class NumericEffect:
    op: str  # "increase" | "decrease"
    fluent: str
    args: tuple
    amount: int

    @property
    def key(self) -> FluentKey:
        return (self.fluent, *self.args)

    @property
    def delta(self) -> int:
        return self.amount if self.op == "increase" else -self.amount

    def substitute(self, binding: Mapping[str, str]) -> "NumericEffect":
        return NumericEffect(self.op, self.fluent, tuple(binding.get(a, a) for a in self.args), self.amount)

    def __str__(self):
        return f"({self.op} ({' '.join((self.fluent, *self.args))}) {self.amount})"


Condition = Union[Literal, Comparison]
Effect = Union[Literal, NumericEffect]


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    parameters: tuple  # ((var, type), ...)


@dataclass(frozen=True)
class FluentSchema:
    name: str
    parameters: tuple


@dataclass(frozen=True)
class OperatorSchema:
    name: str
    parameters: tuple  # ((var, type), ...)
    precondition: tuple  # Condition
    effect: tuple  # Effect

    def ground(self, args: Sequence[str]) -> "GroundOperator":
        binding = {var: obj for (var, _), obj in zip(self.parameters, args)}
        return GroundOperator(
            self.name,
            tuple(args),
            tuple(c.substitute(binding) for c in self.precondition),
            tuple(e.substitute(binding) for e in self.effect),
        )


@dataclass(frozen=True)
class GroundOperator:
    name: str
    args: tuple
    precondition: tuple
    effect: tuple

    @property
    def id(self) -> str:
        return f"{self.name}({','.join(self.args)})" if self.args else self.name

    @property
    def add_effects(self) -> tuple:
        return tuple(e for e in self.effect if isinstance(e, Literal) and e.positive)

    @property
    def delete_effects(self) -> tuple:
        return tuple(e for e in self.effect if isinstance(e, Literal) and not e.positive)

    @property
    def numeric_effects(self) -> tuple:
        return tuple(e for e in self.effect if isinstance(e, NumericEffect))

    def __str__(self):
        return "(" + " ".join((self.name, *self.args)) + ")"


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple
    types: tuple  # ((name, parent), ...) in declaration order
    predicates: tuple
    functions: tuple
    operators: tuple

    @cached_property
    def type_parent(self) -> dict:
        return dict(self.types)

    def is_subtype(self, t: str, ancestor: str) -> bool:
        seen = set()
        while t not in seen:
            if t == ancestor:
                return True
            seen.add(t)
            if t == ROOT_TYPE:
                return False
            t = self.type_parent.get(t, ROOT_TYPE)
        return False

    def operator(self, name: str) -> OperatorSchema:
        for op in self.operators:
            if op.name == name:
                return op
        raise KeyError(name)

    @cached_property
    def predicate_arity(self) -> dict:
        return {p.name: len(p.parameters) for p in self.predicates}

    @cached_property
    def function_arity(self) -> dict:
        return {f.name: len(f.parameters) for f in self.functions}

    @cached_property
    def constants(self) -> frozenset:
        """Object names referenced literally inside operator bodies."""
        out = set()
        for op in self.operators:
            params = {v for v, _ in op.parameters}
            for item in (*op.precondition, *op.effect):
                out.update(a for a in item.args if a not in params)
        return frozenset(out)


@dataclass(frozen=True)
class SymbolicState:
    """Ground facts plus non-negative integer fluent values.

    Fluents are stored as a sorted tuple of ``(key, value)`` pairs so that
    states hash canonically; zero-valued fluents are dropped and read as 0.
    """

    facts: frozenset = frozenset()
    fluent_items: tuple = ()

    @classmethod
    def make(cls, facts: Iterable[Atom] = (), fluents: Mapping[FluentKey, int] | None = None) -> "SymbolicState":
        fluents = dict(fluents or {})
        for k, v in fluents.items():
            if v < 0:
                raise NegativeFluent(f"{k} = {v}")
        items = ((tuple(k), int(v)) for k, v in fluents.items() if v)
        return cls(frozenset(tuple(a) for a in facts), tuple(sorted(items)))

    @cached_property
    def fluents(self) -> dict:
        return dict(self.fluent_items)

    def value(self, key: FluentKey) -> int:
        return self.fluents.get(tuple(key), 0)

    def holds(self, cond: Condition) -> bool:
        if isinstance(cond, Literal):
            return (cond.atom in self.facts) == cond.positive
        return cond.holds(self.value(cond.key))

    def satisfies(self, conditions: Iterable[Condition]) -> bool:
        return all(self.holds(c) for c in conditions)

    def facing(self) -> str | None:
        for a in self.facts:
            if a[0] == "facing":
                return a[1]
        return None


def satisfies(state: SymbolicState, conditions: Iterable[Condition]) -> bool:
    return state.satisfies(conditions)


@dataclass(frozen=True)
class PlanningTask:
    domain: Domain
    objects: tuple  # ((name, type), ...)
    init: SymbolicState
    goal: tuple  # Condition
    name: str = "task"

    @cached_property
    def object_types(self) -> dict:
        return dict(self.objects)

    def with_init(self, state: SymbolicState) -> "PlanningTask":
        return replace(self, init=state)


# --------------------------------------------------------------------------
# parsing


def _expect_list(node, what: str) -> _List:
    if not isinstance(node, list):
        raise _fail(PDDLSyntaxError, f"expected {what}, got {node!r}", node)
    return node


def _parse_typed_list(items: Sequence, ctx) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        tok = items[i]
        if isinstance(tok, list):
            raise _fail(UnsupportedConstruct, "nested list in typed list", tok)
        if tok == "-":
            if i + 1 >= len(items) or isinstance(items[i + 1], list):
                raise _fail(PDDLSyntaxError, "'-' must be followed by a type name", tok)
            if not pending:
                raise _fail(PDDLSyntaxError, "'-' without preceding names", tok)
            typ = str(items[i + 1])
            out.extend((str(p), typ) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(tok)
        i += 1
    out.extend((str(p), ROOT_TYPE) for p in pending)
    return out


def _parse_atom_args(node: _List, params: dict | None, kind: str) -> tuple[str, tuple]:
    if not node or isinstance(node[0], list):
        raise _fail(PDDLSyntaxError, f"malformed {kind}", node)
    name = str(node[0])
    args = []
    for a in node[1:]:
        if isinstance(a, list):
            raise _fail(UnsupportedConstruct, f"nested term in {kind} {name!r}", a)
        if a.startswith("?") and params is not None and a not in params:
            raise _fail(UndeclaredError, f"undeclared variable {a!r}", a)
        args.append(str(a))
    return name, tuple(args)


def _parse_int(tok, ctx: str) -> int:
    if isinstance(tok, list):
        raise _fail(UnsupportedConstruct, f"only integer constants are supported in {ctx}", tok)
    try:
        return int(tok)
    except ValueError:
        raise _fail(UnsupportedConstruct, f"non-integer value {tok!r} in {ctx}", tok) from None


def _parse_condition(node, params: dict | None) -> list[Condition]:
    node = _expect_list(node, "condition")
    if not node:
        raise _fail(PDDLSyntaxError, "empty condition", node)
    head = node[0]
    if head == "and":
        out: list[Condition] = []
        for child in node[1:]:
            child = _expect_list(child, "condition")
            if child and child[0] == "and":
                raise _fail(UnsupportedConstruct, "nested 'and'", child)
            out.extend(_parse_condition(child, params))
        return out
    if head == "not":
        if len(node) != 2:
            raise _fail(PDDLSyntaxError, "'not' takes exactly one argument", node)
        inner = _expect_list(node[1], "atom")
        if inner and inner[0] in ("and", "not", "or", ">=", "<=", ">", "<", "="):
            raise _fail(UnsupportedConstruct, f"negation of {inner[0]!r}", inner)
        name, args = _parse_atom_args(inner, params, "predicate")
        return [Literal(name, args, False)]
    if head == ">=":
        if len(node) != 3:
            raise _fail(PDDLSyntaxError, "'>=' takes two arguments", node)
        fl = _expect_list(node[1], "fluent term")
        name, args = _parse_atom_args(fl, params, "fluent")
        return [Comparison(name, args, ">=", _parse_int(node[2], "comparison"))]
    if isinstance(head, list):
        raise _fail(PDDLSyntaxError, "condition head must be a symbol", head)
    if head in ("or", "imply", "forall", "exists", "when", "<=", ">", "<", "=") or head.startswith(":"):
        raise _fail(UnsupportedConstruct, f"unsupported construct {str(head)!r}", head)
    name, args = _parse_atom_args(node, params, "predicate")
    return [Literal(name, args, True)]


def _parse_effect(node, params: dict) -> list[Effect]:
    node = _expect_list(node, "effect")
    if not node:
        raise _fail(PDDLSyntaxError, "empty effect", node)
    head = node[0]
    if head == "and":
        out: list[Effect] = []
        for child in node[1:]:
            child = _expect_list(child, "effect")
            if child and child[0] == "and":
                raise _fail(UnsupportedConstruct, "nested 'and'", child)
            out.extend(_parse_effect(child, params))
        return out
    if head == "not":
        if len(node) != 2:
            raise _fail(PDDLSyntaxError, "'not' takes exactly one argument", node)
        name, args = _parse_atom_args(_expect_list(node[1], "atom"), params, "predicate")
        return [Literal(name, args, False)]
    if head in ("increase", "decrease"):
        if len(node) != 3:
            raise _fail(PDDLSyntaxError, f"{head!r} takes two arguments", node)
        name, args = _parse_atom_args(_expect_list(node[1], "fluent term"), params, "fluent")
        amount = _parse_int(node[2], head)
        if amount < 0:
            raise _fail(UnsupportedConstruct, "negative increment", node[2])
        return [NumericEffect(str(head), name, args, amount)]
    if isinstance(head, list):
        raise _fail(PDDLSyntaxError, "effect head must be a symbol", head)
    if head in ("forall", "when", "assign", "scale-up", "scale-down", "or") or head.startswith(":"):
        raise _fail(UnsupportedConstruct, f"unsupported construct {str(head)!r}", head)
    name, args = _parse_atom_args(node, params, "predicate")
    return [Literal(name, args, True)]


_ACTION_KEYS = (":parameters", ":precondition", ":effect")


def _parse_action(node: _List) -> OperatorSchema:
    if len(node) < 2 or isinstance(node[1], list):
        raise _fail(PDDLSyntaxError, ":action needs a name", node)
    name = str(node[1])
    fields: dict[str, object] = {}
    rest = node[2:]
    if len(rest) % 2:
        raise _fail(PDDLSyntaxError, f"action {name!r} has a dangling key", node)
    for key, value in zip(rest[0::2], rest[1::2]):
        if isinstance(key, list) or key not in _ACTION_KEYS:
            raise _fail(PDDLSyntaxError, f"unknown action key {str(key) if not isinstance(key, list) else '(...)'!r} in action {name!r}", key)
        if key in fields:
            raise _fail(PDDLSyntaxError, f"duplicate {key} in action {name!r}", key)
        fields[key] = value
    params_node = fields.get(":parameters", _List())
    params_node = _expect_list(params_node, "parameter list")
    parameters = tuple(_parse_typed_list(params_node, node))
    pmap = dict(parameters)
    if len(pmap) != len(parameters):
        raise _fail(PDDLError, f"duplicate parameter in action {name!r}", params_node)
    pre_node = fields.get(":precondition")
    eff_node = fields.get(":effect")
    pre = tuple(_parse_condition(pre_node, pmap)) if pre_node is not None else ()
    eff = tuple(_parse_effect(eff_node, pmap)) if eff_node is not None else ()
    return OperatorSchema(name, parameters, pre, eff)


def parse_domain(text: str, *, tighten: bool = True) -> Domain:
    """Parse domain source into a validated :class:`Domain`.

    With ``tighten`` (the default) operators whose decrease effects could
    drive a fluent negative under their own precondition get their
    precondition raised to the consumed amount; a warning is logged.
    """
    root = read_sexpr(text)
    if len(root) < 2 or root[0] != "define":
        raise _fail(PDDLSyntaxError, "expected (define (domain ...) ...)", root)
    header = _expect_list(root[1], "(domain NAME)")
    if len(header) != 2 or header[0] != "domain":
        raise _fail(PDDLSyntaxError, "expected (domain NAME)", header)
    name = str(header[1])
    requirements: tuple = ()
    types: list[tuple[str, str]] = []
    predicates: list[PredicateSchema] = []
    functions: list[FluentSchema] = []
    operators: list[OperatorSchema] = []
    for section in root[2:]:
        section = _expect_list(section, "domain section")
        if not section or isinstance(section[0], list):
            raise _fail(PDDLSyntaxError, "empty domain section", section)
        key = section[0]
        if key == ":requirements":
            requirements = tuple(str(r) for r in section[1:])
            for r in requirements:
                if r not in (":typing", ":strips", ":fluents", ":negative-preconditions", ":numeric-fluents"):
                    raise _fail(UnsupportedConstruct, f"unsupported requirement {r!r}", section)
        elif key == ":types":
            types.extend(_parse_typed_list(section[1:], section))
        elif key == ":predicates":
            for p in section[1:]:
                p = _expect_list(p, "predicate declaration")
                predicates.append(PredicateSchema(str(p[0]), tuple(_parse_typed_list(p[1:], p))))
        elif key == ":functions":
            for f in section[1:]:
                if not isinstance(f, list):
                    raise _fail(UnsupportedConstruct, "typed function declarations ('- number') are not supported", f)
                functions.append(FluentSchema(str(f[0]), tuple(_parse_typed_list(f[1:], f))))
        elif key == ":action":
            operators.append(_parse_action(section))
        else:
            raise _fail(UnsupportedConstruct, f"unsupported domain section {str(key)!r}", key)
    domain = Domain(name, requirements, tuple(types), tuple(predicates), tuple(functions), tuple(operators))
    validate_domain(domain)
    if tighten:
        domain = tighten_domain(domain)
    return domain


def _declared_types(domain: Domain) -> set:
    declared = {ROOT_TYPE}
    for t, parent in domain.types:
        declared.add(t)
        declared.add(parent)
    return declared


def validate_domain(domain: Domain) -> None:
    names = [t for t, _ in domain.types]
    dupes = {t for t in names if names.count(t) > 1}
    if dupes:
        raise PDDLError(f"duplicate type names: {sorted(dupes)}")
    declared = _declared_types(domain)
    for schema in (*domain.predicates, *domain.functions):
        for _, t in schema.parameters:
            if t not in declared:
                raise UndeclaredError(f"undeclared type {t!r} in {schema.name!r}")
    op_names = [o.name for o in domain.operators]
    if len(set(op_names)) != len(op_names):
        raise PDDLError("duplicate operator names")
    for op in domain.operators:
        for _, t in op.parameters:
            if t not in declared:
                raise UndeclaredError(f"undeclared type {t!r} in action {op.name!r}")
        for item in (*op.precondition, *op.effect):
            if isinstance(item, Literal):
                arity = domain.predicate_arity.get(item.predicate)
                what = "predicate"
                nm = item.predicate
            else:
                arity = domain.function_arity.get(item.fluent)
                what = "function"
                nm = item.fluent
            if arity is None:
                raise UndeclaredError(f"undeclared {what} {nm!r} in action {op.name!r}")
            if arity != len(item.args):
                raise PDDLError(f"{what} {nm!r} expects {arity} arguments in action {op.name!r}")


def tighten_domain(domain: Domain) -> Domain:
    ops = []
    for op in domain.operators:
        pre = list(op.precondition)
        changed = False
        for eff in (e for e in op.effect if isinstance(e, NumericEffect)):
            if eff.op != "decrease":
                continue
            idx = next((i for i, c in enumerate(pre) if isinstance(c, Comparison) and c.op == ">=" and c.key == eff.key), None)
            if idx is None:
                added = Comparison(eff.fluent, eff.args, ">=", eff.amount)
                logger.warning("operator %s: adding %s to keep fluents non-negative", op.name, added)
                pre.append(added)
                changed = True
            elif pre[idx].value < eff.amount:
                logger.warning(
                    "operator %s: precondition %s consumes %d; tightening to %d",
                    op.name, pre[idx], eff.amount, eff.amount,
                )
                pre[idx] = replace(pre[idx], value=eff.amount)
                changed = True
        ops.append(replace(op, precondition=tuple(pre)) if changed else op)
    return replace(domain, operators=tuple(ops))


def parse_problem(text: str, domain: Domain) -> PlanningTask:
    root = read_sexpr(text)
    if len(root) < 2 or root[0] != "define":
        raise _fail(PDDLSyntaxError, "expected (define (problem ...) ...)", root)
    header = _expect_list(root[1], "(problem NAME)")
    if len(header) != 2 or header[0] != "problem":
        raise _fail(PDDLSyntaxError, "expected (problem NAME)", header)
    name = str(header[1])
    objects: list[tuple[str, str]] = []
    facts: list[Atom] = []
    fluents: dict[FluentKey, int] = {}
    goal: list[Condition] = []
    declared = _declared_types(domain)
    for section in root[2:]:
        section = _expect_list(section, "problem section")
        key = section[0] if section else None
        if key == ":domain":
            if len(section) != 2 or str(section[1]) != domain.name:
                raise _fail(PDDLError, f"problem is for a different domain than {domain.name!r}", section)
        elif key == ":objects":
            for obj, t in _parse_typed_list(section[1:], section):
                if t not in declared:
                    raise _fail(UndeclaredError, f"unknown type {t!r} for object {obj!r}", section)
                objects.append((obj, t))
        elif key == ":init":
            for item in section[1:]:
                item = _expect_list(item, "init entry")
                if item and item[0] == "=":
                    if len(item) != 3:
                        raise _fail(PDDLSyntaxError, "'=' takes two arguments", item)
                    fname, args = _parse_atom_args(_expect_list(item[1], "fluent term"), None, "fluent")
                    if fname not in domain.function_arity:
                        raise _fail(UndeclaredError, f"undeclared function {fname!r}", item)
                    value = _parse_int(item[2], "init")
                    if value < 0:
                        raise _fail(PDDLError, "fluents must be non-negative", item[2])
                    fluents[(fname, *args)] = value
                elif item and item[0] == "not":
                    raise _fail(UnsupportedConstruct, "negative literals in :init", item)
                else:
                    pname, args = _parse_atom_args(item, None, "predicate")
                    if pname not in domain.predicate_arity:
                        raise _fail(UndeclaredError, f"undeclared predicate {pname!r}", item)
                    facts.append((pname, *args))
        elif key == ":goal":
            if len(section) != 2:
                raise _fail(PDDLSyntaxError, ":goal takes one formula", section)
            goal = _parse_condition(section[1], None)
        else:
            raise _fail(UnsupportedConstruct, f"unsupported problem section {str(key)!r}", section)
    for cond in goal:
        if isinstance(cond, Comparison) and cond.fluent not in domain.function_arity:
            raise UndeclaredError(f"goal references undeclared fluent {cond.fluent!r}")
        if isinstance(cond, Literal) and cond.predicate not in domain.predicate_arity:
            raise UndeclaredError(f"goal references undeclared predicate {cond.predicate!r}")
    task = PlanningTask(domain, tuple(objects), SymbolicState.make(facts, fluents), tuple(goal), name)
    validate_task(task)
    return task


def validate_task(task: PlanningTask) -> None:
    names = task.object_types
    for atom in task.init.facts:
        for a in atom[1:]:
            if a not in names:
                raise UndeclaredError(f"unknown object {a!r} in init")
    for key, _ in task.init.fluent_items:
        for a in key[1:]:
            if a not in names:
                raise UndeclaredError(f"unknown object {a!r} in init fluent")
    for cond in task.goal:
        for a in cond.args:
            if a not in names:
                raise UndeclaredError(f"unknown object {a!r} in goal")


def load_domain_text() -> str:
    return resources.files("rapidlearn.data").joinpath("pogostick_domain.pddl").read_text(encoding="utf-8")


@functools.lru_cache(maxsize=1)
def load_domain() -> Domain:
    return parse_domain(load_domain_text())


# --------------------------------------------------------------------------
# serialization


def _typed(items: Iterable[tuple[str, str]]) -> str:
    return " ".join(f"{n} - {t}" for n, t in items)


def _conj(items: Sequence, indent: str) -> str:
    if not items:
        return "(and)"
    inner = f"\n{indent}    ".join(str(i) for i in items)
    return f"(and\n{indent}    {inner})"


def serialize_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append("  (:types")
        lines.extend(f"    {t} - {p}" for t, p in domain.types)
        lines.append("  )")
    if domain.predicates:
        lines.append("  (:predicates")
        lines.extend(f"    ({p.name} {_typed(p.parameters)})".replace(" )", ")") for p in domain.predicates)
        lines.append("  )")
    if domain.functions:
        lines.append("  (:functions")
        lines.extend(f"    ({f.name} {_typed(f.parameters)})".replace(" )", ")") for f in domain.functions)
        lines.append("  )")
    for op in domain.operators:
        lines.append(f"  (:action {op.name}")
        lines.append(f"    :parameters ({_typed(op.parameters)})")
        lines.append(f"    :precondition {_conj(op.precondition, '    ')}")
        lines.append(f"    :effect {_conj(op.effect, '    ')}")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def serialize_problem(task: PlanningTask) -> str:
    lines = [f"(define (problem {task.name})", f"  (:domain {task.domain.name})"]
    lines.append(f"  (:objects {_typed(task.objects)})")
    lines.append("  (:init")
    lines.extend("    (" + " ".join(a) + ")" for a in sorted(task.init.facts))
    lines.extend(f"    (= ({' '.join(k)}) {v})" for k, v in task.init.fluent_items)
    lines.append("  )")
    lines.append(f"  (:goal {_conj(task.goal, '  ')})")
    lines.append(")")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# grounding and transitions


def ground(domain: Domain, objects: Mapping[str, str] | Iterable[tuple[str, str]], *, prune_identical: bool = True) -> tuple:
    """Instantiate every operator over type-consistent bindings.

    Multi-parameter operators skip bindings that repeat an object when
    ``prune_identical`` is set (self-approach is a no-op).
    """
    objs = dict(objects)
    names = sorted(objs)
    out = []
    for op in domain.operators:
        choices = [[o for o in names if domain.is_subtype(objs[o], t)] for _, t in op.parameters]
        for combo in itertools.product(*choices):
            if prune_identical and len(set(combo)) < len(combo):
                continue
            out.append(op.ground(combo))
    return tuple(out)


def applicable(s: SymbolicState, o: GroundOperator) -> bool:
    return s.satisfies(o.precondition)


def apply(s: SymbolicState, o: GroundOperator, *, check: bool = True) -> SymbolicState:
    if check and not applicable(s, o):
        raise InapplicableOperator(f"{o.id} is not applicable")
    facts = set(s.facts)
    for e in o.delete_effects:
        facts.discard(e.atom)
    for e in o.add_effects:
        facts.add(e.atom)
    fluents = dict(s.fluents)
    for e in o.numeric_effects:
        v = fluents.get(e.key, 0) + e.delta
        if v < 0:
            raise NegativeFluent(f"{o.id} drives {e.key} to {v}")
        fluents[e.key] = v
    return SymbolicState(frozenset(facts), tuple(sorted((k, v) for k, v in fluents.items() if v)))


def effects_hold(s: SymbolicState, o: GroundOperator, before: SymbolicState) -> bool:
    """True iff the declared effects of ``o`` show up in ``s`` relative to ``before``."""
    added = {e.atom for e in o.add_effects}
    for e in o.effect:
        if isinstance(e, Literal):
            if not e.positive and e.atom in added:
                continue  # add wins over delete, as in apply()
            if (e.atom in s.facts) != e.positive:
                return False
        else:
            want = before.value(e.key) + e.delta
            have = s.value(e.key)
            if e.op == "increase" and have < want:
                return False
            if e.op == "decrease" and have > want:
                return False
    return True
