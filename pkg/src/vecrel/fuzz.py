"""Randomized equivalence checking of the vector path against direct evaluation.

Each iteration draws a small schema, a valid instance and either a query
term or a statement sequence from its own RNG stream, so iteration ``i`` of
a seed is reproducible on its own.  Failures are shrunk greedily.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .algebra import (
    AlgebraError,
    And,
    Cmp,
    ColRef,
    EmptyRel,
    Evaluator,
    InSet,
    IsNotNull,
    IsNull,
    Lit,
    Minus,
    NaturalJoin,
    Not,
    NotInSet,
    Or,
    Product,
    Project,
    Rel,
    Rename,
    Select,
    TermType,
    Typer,
    Union,
    children,
    evaluate,
)
from .bridge import matter_all, parse_instance
from .core import (
    Column,
    ConstraintViolation,
    DatabaseInstance,
    DatabaseSchema,
    RelationSchema,
    VecrelError,
    check_relation,
)
from .engine import Store, apply_mutation, schema_to_json
from .rewriter import RewriteOptions, answer
from .sexpr import Delete, Insert, Update, format_expr, format_literal, format_term

MODES = ("query", "mutation", "both")

POOLS = {
    "int": (None, 0, 1, 2, 3, 7),
    "real": (None, 0.5, 1.0, 2.0, 2.5, -1.0),
    "text": (None, "a", "b", "c", "ab", ""),
}
COLUMN_NAMES = ("a", "b", "c", "d", "e")


@dataclass(frozen=True)
class FuzzConfig:
    seed: int = 0
    max_relations: int = 4
    max_arity: int = 5
    max_tuples: int = 8
    max_depth: int = 4  # operator levels above the relation leaves
    null_probability: float = 0.2
    allow_minus: bool = False
    mode: str = "query"
    max_statements: int = 10
    options: RewriteOptions = field(default_factory=RewriteOptions)

    def __post_init__(self):
        for name in ("max_relations", "max_arity", "max_tuples", "max_depth", "max_statements"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0.0 <= self.null_probability <= 1.0:
            raise ValueError("null_probability must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not -(2**63) <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class FuzzFailure:
    iteration: int
    kind: str
    detail: str
    counterexample: str

    def as_dict(self) -> dict:
        return {"iteration": self.iteration, "kind": self.kind, "detail": self.detail,
                "counterexample": self.counterexample}


@dataclass(frozen=True)
class FuzzReport:
    seed: int
    iterations: int
    passed: int
    failures: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {"seed": self.seed, "iterations": self.iterations, "passed": self.passed,
                "failures": [f.as_dict() for f in self.failures]}

    def summary(self) -> str:
        return f"{self.passed}/{self.iterations} pass"


def iteration_rng(seed: int, i: int) -> random.Random:
    return random.Random(f"vecrel-fuzz:{seed}:{i}")


# --------------------------------------------------------------------------
# schemas and instances


def random_schema(rng: random.Random, cfg: FuzzConfig, constraints: bool = False) -> DatabaseSchema:
    """Relations R0.. over shared column names; kind signatures are often reused
    so that value-identical tuples show up in different relations."""
    rels = []
    signatures = []
    for r in range(rng.randint(1, cfg.max_relations)):
        if signatures and rng.random() < 0.5:
            kinds = rng.choice(signatures)
        else:
            arity = rng.randint(1, cfg.max_arity)
            kinds = tuple(rng.choice(("int", "int", "text", "text", "real")) for _ in range(arity))
            signatures.append(kinds)
        cols = tuple(Column(COLUMN_NAMES[i], k) for i, k in enumerate(kinds))
        key, not_null = None, frozenset()
        if constraints and rng.random() < 0.4:
            key = frozenset(rng.sample(range(1, len(cols) + 1), rng.randint(1, len(cols))))
        if constraints and rng.random() < 0.3:
            not_null = frozenset({rng.randint(1, len(cols))})
        rels.append(RelationSchema(f"R{r}", cols, key, not_null))
    return DatabaseSchema(rels)


def random_value(rng: random.Random, kind: str, null_p: float, allow_null: bool = True):
    if allow_null and rng.random() < null_p:
        return None
    return rng.choice(POOLS[kind][1:])


def random_tuple(rng, rel: RelationSchema, null_p: float) -> tuple:
    while True:
        t = tuple(random_value(rng, c.kind, null_p) for c in rel.columns)
        if any(v is not None for v in t):
            return t


def random_instance(rng: random.Random, schema: DatabaseSchema, cfg: FuzzConfig) -> DatabaseInstance:
    rels = {}
    pool = []
    for name, rel in schema.relations.items():
        rows = set()
        for _ in range(rng.randint(0, cfg.max_tuples)):
            kinds = tuple(c.kind for c in rel.columns)
            same = [t for k, t in pool if k == kinds]
            t = rng.choice(same) if same and rng.random() < 0.3 else random_tuple(rng, rel, cfg.null_probability)
            if not check_relation(rel, rows | {t}):
                rows.add(t)
        pool += [(tuple(c.kind for c in rel.columns), t) for t in rows]
        rels[name] = frozenset(rows)
    return DatabaseInstance(schema, rels)


# --------------------------------------------------------------------------
# terms


class TermGen:
    def __init__(self, rng: random.Random, schema: DatabaseSchema, cfg: FuzzConfig, allow_minus: bool):
        self.rng = rng
        self.schema = schema
        self.cfg = cfg
        self.allow_minus = allow_minus
        self.typer = Typer(schema)
        self._fresh = 0

    def ref(self, col):
        # Qualified or bare; names are unique within a type, so both resolve.
        if col.rel and self.rng.random() < 0.5:
            return ColRef(col.name, col.rel)
        return ColRef(col.name)

    def literal(self, kind):
        return Lit(self.rng.choice(POOLS[kind][1:]))

    def term(self, depth: int):
        """A random term with at most ``depth`` operator levels above its leaves."""
        rng = self.rng
        if depth <= 0 or rng.random() < 0.1:
            return Rel(rng.choice(list(self.schema.relations)))
        ops = ["select", "select", "project", "project", "join", "join", "product", "rename"]
        if depth >= 2:
            ops += ["union", "union"] + (["minus", "minus", "minus"] if self.allow_minus else [])
        op = rng.choice(ops)
        if op == "select":
            t = self.term(depth - 1)
            return Select(t, self.condition(self.typer(t), depth - 1))
        if op == "project":
            t = self.term(depth - 1)
            ty = self.typer(t)
            if not ty:
                return t
            cols = rng.sample(list(ty), rng.randint(1, len(ty)))
            return Project(t, tuple(self.ref(c) for c in cols))
        if op == "rename":
            t = self.term(depth - 1)
            ty = self.typer(t)
            if not ty:
                return t
            self._fresh += 1
            return Rename(t, self.ref(rng.choice(list(ty))), f"x{self._fresh}")
        if op in ("join", "product"):
            left, right = self.term(depth - 1), self.term(depth - 1)
            if rng.random() < 0.1:
                right = EmptyRel()
            if op == "product":
                return Product(left, right)
            lty, rty = self.typer(left), self.typer(right)
            pairs = []
            for _ in range(rng.randint(1, 2)):
                options = [(a, b) for a in lty for b in rty if _joinable(a.attribute, b.attribute)]
                if not options:
                    break
                a, b = rng.choice(options)
                pairs.append((self.ref(a), self.ref(b)))
            if not pairs:
                return Product(left, right)
            return NaturalJoin(left, right, tuple(pairs))
        # The operands get one extra level for the aligning projection.
        left, right = self.compatible(self.term(depth - 2), self.term(depth - 2))
        if right is None:
            return left
        return Union(left, right) if op == "union" else Minus(left, right)

    def compatible(self, left, right):
        """Project both operands onto matching attribute lists."""
        lty, rty = self.typer(left), self.typer(right)
        if not lty:
            return left, None
        if rty and self.rng.random() < 0.8:
            avail = list(rty)
            lcols, rcols = [], []
            for lc in self.rng.sample(list(lty), len(lty)):
                match = [rc for rc in avail if rc.attribute == lc.attribute]
                if match:
                    rc = self.rng.choice(match)
                    avail.remove(rc)
                    lcols.append(lc)
                    rcols.append(rc)
                if len(lcols) >= 3:
                    break
            if lcols:
                return (Project(left, tuple(self.ref(c) for c in lcols)),
                        Project(right, tuple(self.ref(c) for c in rcols)))
        # Fall back to a filtered copy of the left operand.
        return left, Select(left, self.condition(lty, 1))

    def atom(self, ty: TermType, depth: int):
        rng = self.rng
        c = rng.choice(list(ty))
        kind = c.attribute
        roll = rng.random()
        if roll < 0.35:
            return Cmp("=", self.ref(c), self.literal(kind))
        if roll < 0.5:
            same = [d for d in ty if _joinable(d.attribute, kind)]
            return Cmp(rng.choice(("=", "=", "<", ">")), self.ref(c), self.ref(rng.choice(same)))
        if roll < 0.65:
            lit = self.literal(kind)
            op = rng.choice(("<", ">"))
            return Cmp(op, lit, self.ref(c)) if rng.random() < 0.3 else Cmp(op, self.ref(c), lit)
        if roll < 0.8:
            return (IsNull if rng.random() < 0.5 else IsNotNull)(self.ref(c))
        if roll < 0.9 and depth > 1:
            sub = self.term(depth - 1)
            sty = self.typer(sub)
            same = [d for d in sty if _joinable(d.attribute, kind)]
            if same:
                sub = Project(sub, (self.ref(rng.choice(same)),))
                return (InSet if rng.random() < 0.6 else NotInSet)(self.ref(c), sub)
        return Cmp("=", Lit(1), Lit(rng.choice((1, 2))))

    def condition(self, ty: TermType, depth: int, budget: int = 2):
        rng = self.rng
        if not ty:
            return Cmp("=", Lit(1), Lit(1))
        roll = rng.random()
        if budget > 0 and roll < 0.15:
            return And(self.condition(ty, depth, budget - 1), self.condition(ty, depth, budget - 1))
        if budget > 0 and roll < 0.3:
            return Or(self.condition(ty, depth, budget - 1), self.condition(ty, depth, budget - 1))
        if budget > 0 and roll < 0.4:
            return Not(self.condition(ty, depth, budget - 1))
        return self.atom(ty, depth)


def _joinable(a, b):
    return a == b or {a, b} <= {"int", "real"}


# --------------------------------------------------------------------------
# comparing the two paths


def _outcome(fn):
    try:
        return "ok", fn()
    except VecrelError as exc:
        return "error", type(exc).__name__


def query_mismatch(term, schema, inst, options) -> Optional[str]:
    """None when both paths agree on ``term`` over ``inst``, else a description."""
    vector = parse_instance(schema, inst)
    expected = _outcome(lambda: evaluate(term, inst).rows)
    got = _outcome(lambda: answer(term, schema, vector, options).rows)
    if expected == got:
        return None
    return f"expected {_show(expected)}, got {_show(got)}"


def _show(outcome):
    status, value = outcome
    if status == "error":
        return f"error {value}"
    return "{" + ", ".join(repr(r) for r in sorted(value, key=repr)) + "}"


# --------------------------------------------------------------------------
# statements and the materialized oracle


def random_statement(rng: random.Random, gen: TermGen, schema: DatabaseSchema, cfg: FuzzConfig, inst):
    name = rng.choice(list(schema.relations))
    rel = schema[name]
    ty = gen.typer(Rel(name))
    existing = sorted(inst.rows(name), key=repr)
    roll = rng.random()
    if roll < 0.45:
        if existing and rng.random() < 0.3:
            # Re-insert (part of) an existing tuple, possibly clashing on a key.
            base = rng.choice(existing)
        else:
            base = random_tuple(rng, rel, cfg.null_probability)
        cols = [c.name for c, v in zip(rel.columns, base) if v is not None]
        cols = sorted(rng.sample(cols, rng.randint(1, len(cols))), key=rel.column_names.index)
        return Insert(name, tuple(cols), tuple(base[rel.position(c)] for c in cols))
    cond = _statement_condition(rng, gen, rel, ty, existing)
    if roll < 0.75:
        return Delete(name, cond)
    assigns = []
    for col in rng.sample(list(rel.columns), rng.randint(1, min(2, rel.arity))):
        r = rng.random()
        if r < 0.6:
            expr = gen.literal(col.kind)
        elif r < 0.75:
            expr = Lit(None)
        else:
            expr = ColRef(rng.choice([c for c in rel.columns if _joinable(c.kind, col.kind)]).name)
        assigns.append((col.name, expr))
    return Update(name, tuple(assigns), cond)


def _statement_condition(rng, gen: TermGen, rel, ty, existing):
    if existing and rng.random() < 0.5:
        # Pin a value of an existing tuple so statements hit something.
        t = rng.choice(existing)
        idx = [i for i, v in enumerate(t) if v is not None]
        i = rng.choice(idx)
        return Cmp("=", ColRef(rel.columns[i].name), Lit(t[i]))
    if rng.random() < 0.1:
        return Cmp("=", Lit(1), Lit(1))
    return gen.condition(ty, 2, budget=1)


def oracle_apply(schema: DatabaseSchema, inst: DatabaseInstance, stmt) -> DatabaseInstance:
    """Apply a statement directly to a materialized instance."""
    rel = schema[stmt.relation]
    rows = set(inst.rows(rel.name))
    if isinstance(stmt, Insert):
        t = [None] * rel.arity
        for c, v in zip(stmt.columns, stmt.values):
            if v is None:
                raise ConstraintViolation([f"{rel.name}: inserted value for {c} is Null"])
            t[rel.position(c)] = v
        rows.add(tuple(t))
    else:
        ev = Evaluator(inst)
        hit = ev(Select(Rel(rel.name), stmt.cond)).rows
        rows -= hit
        if isinstance(stmt, Update):
            ty = ev.typer(Rel(rel.name))
            fns = {name: ev.compile_expr(e, ty) for name, e in stmt.assignments}
            for t in hit:
                rows.add(tuple(fns[c.name](t) if c.name in fns else v for c, v in zip(rel.columns, t)))
    problems = check_relation(rel, rows)
    if problems:
        raise ConstraintViolation(problems)
    return DatabaseInstance(schema, {**inst.relations, rel.name: frozenset(rows)})


def mutation_mismatch(schema, inst, statements, options) -> Optional[str]:
    store = Store(schema, parse_instance(schema, inst), options=options)
    oracle = inst
    for n, stmt in enumerate(statements, start=1):
        want = _outcome(lambda: oracle_apply(schema, oracle, stmt))
        got = _outcome(lambda: apply_mutation(store, stmt))
        if want[0] != got[0] or (want[0] == "error" and want[1] != got[1]):
            return f"statement {n}: oracle {_status(want)}, vector path {_status(got)}"
        if want[0] == "ok":
            oracle = want[1]
        actual = matter_all(schema, store.vector)
        for name in schema.relations:
            if actual.rows(name) != oracle.rows(name):
                exp = sorted(oracle.rows(name), key=repr)
                act = sorted(actual.rows(name), key=repr)
                return f"statement {n}: {name} should be {exp}, is {act}"
    return None


def _status(outcome):
    return outcome[1] if outcome[0] == "error" else "ok"


# --------------------------------------------------------------------------
# shrinking


def _smaller_instances(inst: DatabaseInstance):
    for name in sorted(inst.relations):
        rows = sorted(inst.rows(name), key=repr)
        for i in range(len(rows)):
            yield DatabaseInstance(inst.schema, {**inst.relations, name: frozenset(rows[:i] + rows[i + 1:])})


def _smaller_terms(term, typer: Typer):
    """Subterms with the same type, then the same node with one child simplified."""
    for child in children(term):
        yield child
    if isinstance(term, Select):
        yield from (Select(term.term, c) for c in _smaller_conditions(term.cond))
    fields = _child_fields(term)
    for fname in fields:
        for smaller in _smaller_terms(getattr(term, fname), typer):
            yield replace(term, **{fname: smaller})


def _smaller_conditions(cond):
    if isinstance(cond, (And, Or)):
        yield cond.left
        yield cond.right
    if isinstance(cond, Not):
        yield cond.cond


def _child_fields(term):
    if isinstance(term, (Product, Union, Minus, NaturalJoin)):
        return ("left", "right")
    if isinstance(term, (Select, Project, Rename)):
        return ("term",)
    return ()


def shrink_query(term, schema, inst, options, budget: int = 400):
    typer = Typer(schema)
    changed = True
    while changed and budget > 0:
        changed = False
        for candidate in _smaller_terms(term, typer):
            budget -= 1
            if budget <= 0:
                break
            try:
                typer(candidate)
            except AlgebraError:
                continue
            if query_mismatch(candidate, schema, inst, options):
                term, changed = candidate, True
                break
        if changed:
            continue
        for candidate in _smaller_instances(inst):
            budget -= 1
            if budget <= 0:
                break
            if query_mismatch(term, schema, candidate, options):
                inst, changed = candidate, True
                break
    return term, inst


def shrink_mutation(statements, schema, inst, options, budget: int = 200):
    statements = list(statements)
    changed = True
    while changed and budget > 0:
        changed = False
        for i in range(len(statements)):
            budget -= 1
            candidate = statements[:i] + statements[i + 1:]
            if candidate and mutation_mismatch(schema, inst, candidate, options):
                statements, changed = candidate, True
                break
        if changed:
            continue
        for candidate in _smaller_instances(inst):
            budget -= 1
            if budget <= 0:
                break
            if mutation_mismatch(schema, candidate, statements, options):
                inst, changed = candidate, True
                break
    return statements, inst


# --------------------------------------------------------------------------
# reports


def format_instance(inst: DatabaseInstance) -> str:
    lines = []
    for name in sorted(inst.relations):
        for t in sorted(inst.rows(name), key=repr):
            lines.append(f"  {name}{t!r}")
    return "\n".join(lines) or "  (empty)"


def format_statement(stmt) -> str:
    if isinstance(stmt, Insert):
        cols = " ".join(stmt.columns)
        vals = " ".join(format_literal(Lit(v)) for v in stmt.values)
        return f"(insert {stmt.relation} ({cols}) ({vals}))"
    if isinstance(stmt, Delete):
        return f"(delete {stmt.relation} {format_term(stmt.cond)})"
    assigns = " ".join(f"({name} {format_expr(e)})" for name, e in stmt.assignments)
    return f"(update {stmt.relation} ({assigns}) {format_term(stmt.cond)})"


def _counterexample(schema, inst, body: str) -> str:
    return "\n".join(["schema: " + json.dumps(schema_to_json(schema), sort_keys=True),
                      "instance:", format_instance(inst), body])


def run_iteration(cfg: FuzzConfig, i: int) -> Optional[FuzzFailure]:
    rng = iteration_rng(cfg.seed, i)
    mode = cfg.mode if cfg.mode != "both" else ("query", "mutation")[i % 2]
    schema = random_schema(rng, cfg, constraints=(mode == "mutation"))
    inst = random_instance(rng, schema, cfg)
    gen = TermGen(rng, schema, cfg, cfg.allow_minus)
    if mode == "query":
        term = gen.term(rng.randint(1, cfg.max_depth))
        detail = query_mismatch(term, schema, inst, cfg.options)
        if detail is None:
            return None
        term, inst = shrink_query(term, schema, inst, cfg.options)
        detail = query_mismatch(term, schema, inst, cfg.options)
        return FuzzFailure(i, "query", detail, _counterexample(schema, inst, "term: " + format_term(term)))
    statements = []
    oracle = inst
    for _ in range(rng.randint(1, cfg.max_statements)):
        stmt = random_statement(rng, gen, schema, cfg, oracle)
        statements.append(stmt)
        try:
            oracle = oracle_apply(schema, oracle, stmt)
        except VecrelError:
            pass
    detail = mutation_mismatch(schema, inst, statements, cfg.options)
    if detail is None:
        return None
    statements, inst = shrink_mutation(statements, schema, inst, cfg.options)
    detail = mutation_mismatch(schema, inst, statements, cfg.options)
    body = "statements:\n" + "\n".join("  " + format_statement(s) for s in statements)
    return FuzzFailure(i, "mutation", detail, _counterexample(schema, inst, body))


def fuzz_equivalence(cfg: FuzzConfig, iterations: int) -> FuzzReport:
    failures = []
    for i in range(iterations):
        failure = run_iteration(cfg, i)
        if failure is not None:
            failures.append(failure)
    return FuzzReport(cfg.seed, iterations, iterations - len(failures), tuple(failures))
