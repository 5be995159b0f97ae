"""Relational-algebra terms, their types, and the reference evaluator.

Columns are positional inside the evaluator; names only matter when a
column reference is resolved against a term's type.  Every type keeps its
column names distinct (products rename clashing right-hand names), so a
name alone always resolves to at most one column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union as TUnion

from .core import (
    VECTOR_COLUMNS,
    VECTOR_NAME,
    DatabaseInstance,
    DatabaseSchema,
    VecrelError,
    check_value,
    compare,
    value_kind,
    hash_canonical,
)

log = logging.getLogger(__name__)

COMPARATORS = ("=", "<", ">")


class AlgebraError(VecrelError):
    """A term or condition that does not type-check."""


# --------------------------------------------------------------------------
# column references, literals, expressions


@dataclass(frozen=True)
class ColRef:
    name: str
    rel: Optional[str] = None

    def __str__(self):
        return self.name if self.rel is None else f"{self.rel}.{self.name}"


@dataclass(frozen=True)
class Lit:
    value: object

    def __post_init__(self):
        object.__setattr__(self, "value", check_value(self.value))


@dataclass(frozen=True)
class HashOf:
    cols: tuple

    def __post_init__(self):
        object.__setattr__(self, "cols", tuple(self.cols))
        if not self.cols:
            raise AlgebraError("hash needs at least one column")


Expr = TUnion[Lit, ColRef, HashOf]
Operand = TUnion[ColRef, Lit]


# --------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class Cmp:
    """``left op right`` where each side is a column or a literal."""

    op: str
    left: Operand
    right: Operand

    def __post_init__(self):
        if self.op not in COMPARATORS:
            raise AlgebraError(f"unknown comparator {self.op!r}")


@dataclass(frozen=True)
class IsNull:
    col: ColRef


@dataclass(frozen=True)
class IsNotNull:
    col: ColRef


@dataclass(frozen=True)
class InSet:
    col: ColRef
    term: "Term"


@dataclass(frozen=True)
class NotInSet:
    col: ColRef
    term: "Term"


@dataclass(frozen=True)
class And:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Or:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Not:
    cond: "Condition"


Condition = TUnion[Cmp, IsNull, IsNotNull, InSet, NotInSet, And, Or, Not]


def conj(*conds):
    out = conds[0]
    for c in conds[1:]:
        out = And(out, c)
    return out


def disj(*conds):
    out = conds[0]
    for c in conds[1:]:
        out = Or(out, c)
    return out


# --------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Rel:
    name: str


@dataclass(frozen=True)
class Rename:
    term: "Term"
    col: ColRef
    new: str


@dataclass(frozen=True)
class Product:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Project:
    term: "Term"
    cols: tuple

    def __post_init__(self):
        object.__setattr__(self, "cols", tuple(self.cols))


@dataclass(frozen=True)
class Select:
    term: "Term"
    cond: Condition


@dataclass(frozen=True)
class Union:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Minus:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Extend:
    term: "Term"
    attribute: str
    name: str
    expr: Expr


@dataclass(frozen=True)
class NaturalJoin:
    """Equi-join on column pairs; keeps the columns of both operands."""

    left: "Term"
    right: "Term"
    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))


@dataclass(frozen=True)
class EmptyRel:
    """The nullary relation whose extension is the single empty tuple."""


@dataclass(frozen=True)
class Bottom:
    """The nullary empty-relation constant; evaluates like ``EmptyRel``."""


Term = TUnion[Rel, Rename, Product, Project, Select, Union, Minus, Extend, NaturalJoin, EmptyRel, Bottom]

UNARY = (Rename, Project, Select, Extend)
BINARY = (Product, Union, Minus, NaturalJoin)


def children(term) -> tuple:
    if isinstance(term, UNARY):
        return (term.term,)
    if isinstance(term, BINARY):
        return (term.left, term.right)
    return ()


def walk(term):
    """Pre-order traversal, including subterms nested in conditions."""
    yield term
    if isinstance(term, Select):
        for sub in condition_terms(term.cond):
            yield from walk(sub)
    for child in children(term):
        yield from walk(child)


def condition_terms(cond):
    if isinstance(cond, (InSet, NotInSet)):
        yield cond.term
    elif isinstance(cond, (And, Or)):
        yield from condition_terms(cond.left)
        yield from condition_terms(cond.right)
    elif isinstance(cond, Not):
        yield from condition_terms(cond.cond)


def term_depth(term) -> int:
    return 1 + max((term_depth(c) for c in children(term)), default=0)


# --------------------------------------------------------------------------
# types


class TypeCol(NamedTuple):
    """One output column: owning relation, column name, attribute (domain)."""

    rel: str
    name: str
    attribute: str


class TermType(tuple):
    """Ordered output columns of a term."""

    def pairs(self) -> tuple:
        return tuple((c.rel, c.name) for c in self)

    def names(self) -> tuple:
        return tuple(c.name for c in self)

    def attributes(self) -> tuple:
        return tuple(c.attribute for c in self)

    def resolve(self, ref: ColRef) -> int:
        hits = [i for i, c in enumerate(self) if c.name == ref.name and (ref.rel is None or ref.rel == c.rel)]
        if not hits:
            raise AlgebraError(f"column {ref} not found in {list(self.pairs())}")
        if len(hits) > 1:
            raise AlgebraError(f"column {ref} is ambiguous")
        return hits[0]


VECTOR_TYPE = TermType(
    TypeCol(VECTOR_NAME, name, "value" if name == "value" else "text") for name in VECTOR_COLUMNS
)

def free_rename_normalize(left_type, right_type):
    """Rename right-hand column names that clash with the left operand.

    Each clashing name gets the smallest suffix ``(k)`` that collides with
    no name on either side.  Returns the renamed right type and the
    ``old -> new`` map of the renamed columns.
    """
    left_names = {c.name if isinstance(c, TypeCol) else c for c in left_type}
    right_cols = [c if isinstance(c, TypeCol) else TypeCol("", c, "") for c in right_type]
    used = left_names | {c.name for c in right_cols}
    mapping = {}
    out = []
    for c in right_cols:
        if c.name in left_names:
            k = 1
            while f"{c.name}({k})" in used:
                k += 1
            new = f"{c.name}({k})"
            used.add(new)
            mapping[c.name] = new
            c = c._replace(name=new)
        out.append(c)
    if right_type and not isinstance(next(iter(right_type)), TypeCol):
        return [c.name for c in out], mapping
    return TermType(out), mapping


def union_compatible(a: TermType, b: TermType) -> bool:
    return a.attributes() == b.attributes()


def expr_attribute(expr, ty: TermType) -> Optional[str]:
    if isinstance(expr, ColRef):
        return ty[ty.resolve(expr)].attribute
    if isinstance(expr, HashOf):
        return "text"
    kind = value_kind(expr.value)
    return None if kind == "null" else kind


class Typer:
    """Memoizing type inference over one schema."""

    def __init__(self, schema: DatabaseSchema, diagnostics: Optional[list] = None):
        self.schema = schema
        self.diagnostics = diagnostics
        self._memo = {}

    def __call__(self, term) -> TermType:
        key = id(term)
        hit = self._memo.get(key)
        if hit is not None and hit[0] is term:
            return hit[1]
        ty = self._infer(term)
        self._memo[key] = (term, ty)
        return ty

    def _note(self, msg):
        log.debug(msg)
        if self.diagnostics is not None:
            self.diagnostics.append(msg)

    def _infer(self, t) -> TermType:
        if isinstance(t, Rel):
            if t.name == VECTOR_NAME:
                return VECTOR_TYPE
            rel = self.schema.relations.get(t.name)
            if rel is None:
                raise AlgebraError(f"unknown relation {t.name!r}")
            return TermType(TypeCol(rel.name, c.name, c.attribute) for c in rel.columns)
        if isinstance(t, (EmptyRel, Bottom)):
            return TermType()
        if isinstance(t, Rename):
            ty = self(t.term)
            i = ty.resolve(t.col)
            if t.new in ty.names():
                raise AlgebraError(f"rename target {t.new!r} is not fresh")
            cols = list(ty)
            cols[i] = cols[i]._replace(name=t.new)
            return TermType(cols)
        if isinstance(t, Product):
            left = self(t.left)
            right, _ = free_rename_normalize(left, self(t.right))
            return TermType(left + right)
        if isinstance(t, NaturalJoin):
            left, right = self(t.left), self(t.right)
            for lref, rref in t.pairs:
                left.resolve(lref)
                right.resolve(rref)
            right, _ = free_rename_normalize(left, right)
            return TermType(left + right)
        if isinstance(t, Project):
            ty = self(t.term)
            idx = [ty.resolve(c) for c in t.cols]
            if len(set(idx)) != len(idx):
                raise AlgebraError("projection repeats a column")
            return TermType(ty[i] for i in idx)
        if isinstance(t, Select):
            ty = self(t.term)
            self.check_condition(t.cond, ty)
            return ty
        if isinstance(t, Union):
            left, right = self(t.left), self(t.right)
            if not union_compatible(left, right):
                self._note(
                    f"union of incompatible operands {list(left.attributes())} / "
                    f"{list(right.attributes())} evaluates to {{<>}}"
                )
                return TermType()
            return left
        if isinstance(t, Minus):
            left, right = self(t.left), self(t.right)
            if not union_compatible(left, right):
                raise AlgebraError(
                    f"minus needs union-compatible operands, got {list(left.attributes())} "
                    f"and {list(right.attributes())}"
                )
            return left
        if isinstance(t, Extend):
            ty = self(t.term)
            if t.name in ty.names():
                raise AlgebraError(f"extend target {t.name!r} is not fresh")
            self.check_expr(t.expr, ty)
            return TermType(ty + (TypeCol("", t.name, t.attribute),))
        raise AlgebraError(f"not a term: {t!r}")

    def check_expr(self, expr, ty):
        if isinstance(expr, ColRef):
            ty.resolve(expr)
        elif isinstance(expr, HashOf):
            for c in expr.cols:
                ty.resolve(c)
        elif not isinstance(expr, Lit):
            raise AlgebraError(f"not an expression: {expr!r}")

    def check_condition(self, cond, ty):
        if isinstance(cond, Cmp):
            for side in (cond.left, cond.right):
                if isinstance(side, ColRef):
                    ty.resolve(side)
                elif not isinstance(side, Lit):
                    raise AlgebraError(f"not an operand: {side!r}")
        elif isinstance(cond, (IsNull, IsNotNull)):
            ty.resolve(cond.col)
        elif isinstance(cond, (InSet, NotInSet)):
            ty.resolve(cond.col)
            if len(self(cond.term)) != 1:
                raise AlgebraError("IN needs a subterm of arity 1")
        elif isinstance(cond, (And, Or)):
            self.check_condition(cond.left, ty)
            self.check_condition(cond.right, ty)
        elif isinstance(cond, Not):
            self.check_condition(cond.cond, ty)
        else:
            raise AlgebraError(f"not a condition: {cond!r}")


def infer_type(term, schema: DatabaseSchema, diagnostics: Optional[list] = None) -> TermType:
    return Typer(schema, diagnostics)(term)


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Relation:
    """An evaluated term: its type and a set of tuples."""

    type: TermType
    rows: frozenset

    def __len__(self):
        return len(self.rows)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=row_sort_key)


def row_sort_key(row):
    # Null first, then numbers, then text; stable across kinds.
    return tuple((0, 0) if v is None else (1, v) if not isinstance(v, str) else (2, v) for v in row)


class Evaluator:
    """Set-semantics evaluator; shared subterms are computed once."""

    def __init__(self, inst: DatabaseInstance, typer: Optional[Typer] = None):
        self.inst = inst
        self.typer = typer or Typer(inst.schema)
        self._memo = {}

    def __call__(self, term) -> Relation:
        key = id(term)
        hit = self._memo.get(key)
        if hit is not None and hit[0] is term:
            return hit[1]
        rel = Relation(self.typer(term), frozenset(self._rows(term)))
        self._memo[key] = (term, rel)
        return rel

    def _rows(self, t):
        if isinstance(t, Rel):
            if t.name != VECTOR_NAME:
                self.inst.schema[t.name]
            return self.inst.rows(t.name)
        if isinstance(t, (EmptyRel, Bottom)):
            return {()}
        if isinstance(t, Rename):
            return self(t.term).rows
        if isinstance(t, Product):
            left, right = self(t.left).rows, self(t.right).rows
            return {a + b for a in left for b in right}
        if isinstance(t, NaturalJoin):
            return self._join(t.left, t.right, self._pair_condition(t))
        if isinstance(t, Project):
            src = self(t.term)
            idx = [src.type.resolve(c) for c in t.cols]
            return {tuple(row[i] for i in idx) for row in src.rows}
        if isinstance(t, Select):
            if isinstance(t.term, Product):
                return self._join(t.term.left, t.term.right, t.cond)
            src = self(t.term)
            test = self.compile_condition(t.cond, src.type)
            return {row for row in src.rows if test(row)}
        if isinstance(t, Union):
            ty = self.typer(t)
            if not ty and (self.typer(t.left) or self.typer(t.right)):
                return {()}
            return self(t.left).rows | self(t.right).rows
        if isinstance(t, Minus):
            self.typer(t)
            return self(t.left).rows - self(t.right).rows
        if isinstance(t, Extend):
            src = self(t.term)
            fn = self.compile_expr(t.expr, src.type)
            return {row + (fn(row),) for row in src.rows}
        raise AlgebraError(f"not a term: {t!r}")

    def _pair_condition(self, t: NaturalJoin):
        # Right-hand names in the combined type may carry rename suffixes.
        left_ty = self.typer(t.left)
        right_ty = self.typer(t.right)
        _, mapping = free_rename_normalize(left_ty, right_ty)
        conds = []
        for lref, rref in t.pairs:
            lname = left_ty[left_ty.resolve(lref)].name
            rcol = right_ty[right_ty.resolve(rref)]
            conds.append(Cmp("=", ColRef(lname), ColRef(mapping.get(rcol.name, rcol.name))))
        return conj(*conds) if conds else None

    def _join(self, left_term, right_term, cond):
        """Select over a product, hash-partitioned on column equalities."""
        left, right = self(left_term), self(right_term)
        right_ty, _ = free_rename_normalize(left.type, right.type)
        ty = TermType(left.type + right_ty)
        if cond is None:
            return {a + b for a in left.rows for b in right.rows}
        test = self.compile_condition(cond, ty)
        n = len(left.type)
        lkeys, rkeys = [], []
        for atom in _conjuncts(cond):
            if isinstance(atom, Cmp) and atom.op == "=" and isinstance(atom.left, ColRef) and isinstance(atom.right, ColRef):
                i, j = ty.resolve(atom.left), ty.resolve(atom.right)
                if i >= n > j:
                    i, j = j, i
                if i < n <= j:
                    lkeys.append(i)
                    rkeys.append(j - n)
        if not lkeys:
            return {a + b for a in left.rows for b in right.rows if test(a + b)}
        buckets = {}
        for b in right.rows:
            k = tuple(b[j] for j in rkeys)
            if None not in k:
                buckets.setdefault(k, []).append(b)
        out = set()
        for a in left.rows:
            k = tuple(a[i] for i in lkeys)
            if None in k:
                continue
            for b in buckets.get(k, ()):
                row = a + b
                if test(row):
                    out.add(row)
        return out

    def compile_expr(self, expr, ty):
        if isinstance(expr, Lit):
            v = expr.value
            return lambda row: v
        if isinstance(expr, ColRef):
            i = ty.resolve(expr)
            return lambda row: row[i]
        if isinstance(expr, HashOf):
            idx = [ty.resolve(c) for c in expr.cols]
            return lambda row: hash_canonical([row[i] for i in idx])
        raise AlgebraError(f"not an expression: {expr!r}")

    def compile_condition(self, cond, ty):
        if isinstance(cond, Cmp):
            op = cond.op
            get_l = self._operand(cond.left, ty)
            get_r = self._operand(cond.right, ty)
            return lambda row: compare(op, get_l(row), get_r(row))
        if isinstance(cond, IsNull):
            i = ty.resolve(cond.col)
            return lambda row: row[i] is None
        if isinstance(cond, IsNotNull):
            i = ty.resolve(cond.col)
            return lambda row: row[i] is not None
        if isinstance(cond, (InSet, NotInSet)):
            i = ty.resolve(cond.col)
            sub = self(cond.term)
            if len(sub.type) != 1:
                raise AlgebraError("IN needs a subterm of arity 1")
            members = {r[0] for r in sub.rows if r[0] is not None}
            if isinstance(cond, InSet):
                return lambda row: row[i] is not None and row[i] in members
            return lambda row: not (row[i] is not None and row[i] in members)
        if isinstance(cond, And):
            a, b = self.compile_condition(cond.left, ty), self.compile_condition(cond.right, ty)
            return lambda row: a(row) and b(row)
        if isinstance(cond, Or):
            a, b = self.compile_condition(cond.left, ty), self.compile_condition(cond.right, ty)
            return lambda row: a(row) or b(row)
        if isinstance(cond, Not):
            a = self.compile_condition(cond.cond, ty)
            return lambda row: not a(row)
        raise AlgebraError(f"not a condition: {cond!r}")

    def _operand(self, side, ty):
        if isinstance(side, Lit):
            v = side.value
            return lambda row: v
        i = ty.resolve(side)
        return lambda row: row[i]


def _conjuncts(cond):
    if isinstance(cond, And):
        yield from _conjuncts(cond.left)
        yield from _conjuncts(cond.right)
    else:
        yield cond


def evaluate(term, inst: DatabaseInstance) -> Relation:
    """Evaluate ``term`` directly over ``inst`` (the reference semantics)."""
    return Evaluator(inst)(term)
