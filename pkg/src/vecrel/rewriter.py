"""Translation of user-schema terms and statements into terms over ``r_V``.

Every rewritten query yields rows ``(r-name, t-index, a-name, value)`` in
which each t-index stands for exactly one result tuple; ``view`` with the
original term's type turns them back into tuples.  Three rules keep the
t-index -> tuple map a function at every node:

* joins re-key both sides to ``Hash(left t-index, right t-index)``;
* unions re-key each side to ``Hash(t-index, side tag)``, so value-equal
  tuples coming from different relations cannot share a t-index;
* projections attach a marker row per tuple, so a tuple whose kept
  columns are all Null does not disappear.

Rewriting reads only the schema, never the data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .algebra import (
    AlgebraError,
    And,
    Bottom,
    Cmp,
    ColRef,
    EmptyRel,
    Evaluator,
    Extend,
    HashOf,
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
    Relation,
    Rename,
    Select,
    TermType,
    Typer,
    Union,
    children,
    condition_terms,
    disj,
    free_rename_normalize,
    union_compatible,
    walk,
)
from .bridge import MARKER_ANAME, MARKER_RNAME, MARKER_VALUE, matter, parse_tuple, view
from .core import (
    VECTOR_COLUMNS,
    VECTOR_NAME,
    ConstraintViolation,
    DatabaseInstance,
    DatabaseSchema,
    RelationSchema,
    SchemaError,
    VecrelError,
    VectorRelation,
    check_relation,
    check_value,
    hash_canonical,
)

log = logging.getLogger(__name__)

R_NAME, T_INDEX, A_NAME, VALUE = VECTOR_COLUMNS
RV = Rel(VECTOR_NAME)
UNIT_INDEX = hash_canonical([""])
FLIP = {"=": "=", "<": ">", ">": "<"}


class RewriteError(VecrelError):
    """A term with no rewriting over the vector relation."""


@dataclass(frozen=True)
class RewriteOptions:
    """Switches for mutation testing; the defaults are the correct rewriting."""

    null_mismatch: bool = True
    scope_delete_to_relation: bool = True


def _is(col: str, text: str):
    return Cmp("=", ColRef(col), Lit(text))


def _pair(rel: str, name: str):
    return And(_is(R_NAME, rel), _is(A_NAME, name))


def _ids(term, as_name=T_INDEX):
    out = Project(term, (ColRef(T_INDEX),))
    return out if as_name == T_INDEX else Rename(out, ColRef(T_INDEX), as_name)


def _union_all(terms):
    out = terms[0]
    for t in terms[1:]:
        out = Union(out, t)
    return out


def _intersect_all(terms):
    out = terms[0]
    for t in terms[1:]:
        out = Minus(out, Minus(out, t))
    return out


def nnf(cond, negate=False):
    """Push negation down to atoms (De Morgan); ``Not`` then wraps only comparisons."""
    if isinstance(cond, Not):
        return nnf(cond.cond, not negate)
    if isinstance(cond, And):
        parts = nnf(cond.left, negate), nnf(cond.right, negate)
        return Or(*parts) if negate else And(*parts)
    if isinstance(cond, Or):
        parts = nnf(cond.left, negate), nnf(cond.right, negate)
        return And(*parts) if negate else Or(*parts)
    if not negate:
        return cond
    if isinstance(cond, IsNull):
        return IsNotNull(cond.col)
    if isinstance(cond, IsNotNull):
        return IsNull(cond.col)
    if isinstance(cond, InSet):
        return NotInSet(cond.col, cond.term)
    if isinstance(cond, NotInSet):
        return InSet(cond.col, cond.term)
    return Not(cond)


class Rewriter:
    def __init__(self, schema: DatabaseSchema, options: Optional[RewriteOptions] = None):
        self.schema = schema
        self.options = options or RewriteOptions()
        self.typer = Typer(schema)
        self._memo = {}

    def __call__(self, term):
        key = id(term)
        hit = self._memo.get(key)
        if hit is not None and hit[0] is term:
            return hit[1]
        self.typer(term)
        out = self._rewrite(term)
        self._memo[key] = (term, out)
        return out

    def _rewrite(self, t):
        if isinstance(t, Rel):
            if t.name == VECTOR_NAME:
                raise RewriteError("the vector relation is not itself rewritten")
            return Select(RV, _is(R_NAME, t.name))
        if isinstance(t, (EmptyRel, Bottom)):
            return self._unit()
        if isinstance(t, Rename):
            ty = self.typer(t.term)
            col = ty[ty.resolve(t.col)]
            return self._relabel(self(t.term), {(col.rel, col.name): (col.rel, t.new)})
        if isinstance(t, Project):
            return self._project(t)
        if isinstance(t, Select):
            ty = self.typer(t.term)
            return self._select(self(t.term), ty, nnf(t.cond))
        if isinstance(t, Product):
            return self._join(t.left, t.right, ())
        if isinstance(t, NaturalJoin):
            return self._join(t.left, t.right, t.pairs)
        if isinstance(t, Union):
            return self._union(t)
        if isinstance(t, Minus):
            return self._minus(t)
        if isinstance(t, Extend):
            raise RewriteError("EXTEND has no rewriting over the vector relation")
        raise AlgebraError(f"not a term: {t!r}")

    # -- building blocks -------------------------------------------------

    def _unit(self):
        """The single empty tuple, carried by one marker row."""
        out = EmptyRel()
        for name, v in zip(VECTOR_COLUMNS, (MARKER_RNAME, UNIT_INDEX, MARKER_ANAME, MARKER_VALUE)):
            out = Extend(out, "value" if name == VALUE else "text", name, Lit(v))
        return out

    def _markers(self, vt):
        out = _ids(vt)
        out = Extend(out, "text", R_NAME, Lit(MARKER_RNAME))
        out = Extend(out, "text", A_NAME, Lit(MARKER_ANAME))
        out = Extend(out, "value", VALUE, Lit(MARKER_VALUE))
        return Project(out, tuple(ColRef(c) for c in VECTOR_COLUMNS))

    def _relabel(self, vt, mapping):
        """Simultaneously move rows of column ``(r, a)`` to ``mapping[(r, a)]``."""
        mapping = {src: dst for src, dst in mapping.items() if src != dst}
        if not mapping:
            return vt
        moved = disj(*(_pair(r, a) for r, a in sorted(mapping)))
        parts = [Select(vt, Not(moved))]
        for (r, a), (r2, a2) in sorted(mapping.items()):
            out = Project(Select(vt, _pair(r, a)), (ColRef(T_INDEX), ColRef(VALUE)))
            out = Extend(out, "text", R_NAME, Lit(r2))
            out = Extend(out, "text", A_NAME, Lit(a2))
            parts.append(Project(out, tuple(ColRef(c) for c in VECTOR_COLUMNS)))
        return _union_all(parts)

    def _rekey(self, vt, tag):
        out = Extend(vt, "text", "side", Lit(tag))
        out = Extend(out, "text", "rekeyed", HashOf((ColRef(T_INDEX), ColRef("side"))))
        out = Project(out, (ColRef(R_NAME), ColRef("rekeyed"), ColRef(A_NAME), ColRef(VALUE)))
        return Rename(out, ColRef("rekeyed"), T_INDEX)

    def _cells(self, vt, col, id_name, value_name):
        """``(t-index, value)`` of one user column, under the given names."""
        out = Project(Select(vt, _pair(col.rel, col.name)), (ColRef(T_INDEX), ColRef(VALUE)))
        return Rename(Rename(out, ColRef(T_INDEX), id_name), ColRef(VALUE), value_name)

    # -- operators ---------------------------------------------------------

    def _project(self, t: Project):
        ty = self.typer(t.term)
        vt = self(t.term)
        kept = [ty[ty.resolve(c)] for c in t.cols]
        if not kept:
            raise RewriteError("projection onto no columns")
        retained = Select(vt, disj(*(_pair(c.rel, c.name) for c in kept)))
        return Union(retained, self._markers(vt))

    def _select(self, vt, ty: TermType, cond):
        if isinstance(cond, Or):
            return Union(self._select(vt, ty, cond.left), self._select(vt, ty, cond.right))
        if isinstance(cond, And):
            return self._select(self._select(vt, ty, cond.left), ty, cond.right)
        inner = cond.cond if isinstance(cond, Not) else cond
        if isinstance(inner, Cmp) and not isinstance(inner.left, ColRef) and not isinstance(inner.right, ColRef):
            # Constant condition: keeps all rows or none.
            return Select(vt, cond)
        if isinstance(cond, Not):
            return Select(vt, NotInSet(ColRef(T_INDEX), self._satisfying(vt, ty, cond.cond)))
        if isinstance(cond, IsNull):
            return Select(vt, NotInSet(ColRef(T_INDEX), self._satisfying(vt, ty, IsNotNull(cond.col))))
        if isinstance(cond, NotInSet):
            return Select(vt, NotInSet(ColRef(T_INDEX), self._satisfying(vt, ty, InSet(cond.col, cond.term))))
        return Select(vt, InSet(ColRef(T_INDEX), self._satisfying(vt, ty, cond)))

    def _satisfying(self, vt, ty: TermType, atom):
        """Unary term of the t-indexes whose tuple satisfies a positive atom."""
        if isinstance(atom, IsNotNull):
            c = ty[ty.resolve(atom.col)]
            return _ids(Select(vt, _pair(c.rel, c.name)))
        if isinstance(atom, InSet):
            c = ty[ty.resolve(atom.col)]
            sub_ty = self.typer(atom.term)
            (sc,) = sub_ty
            values = Project(Select(self(atom.term), _pair(sc.rel, sc.name)), (ColRef(VALUE),))
            return _ids(Select(Select(vt, _pair(c.rel, c.name)), InSet(ColRef(VALUE), values)))
        if not isinstance(atom, Cmp):
            raise AlgebraError(f"not an atom: {atom!r}")
        op, left, right = atom.op, atom.left, atom.right
        if not isinstance(left, ColRef):
            op, left, right = FLIP[op], right, left
        c1 = ty[ty.resolve(left)]
        if isinstance(right, Lit):
            cells = Select(vt, _pair(c1.rel, c1.name))
            return _ids(Select(cells, Cmp(op, ColRef(VALUE), right)))
        c2 = ty[ty.resolve(right)]
        if c1 == c2:
            cells = Select(vt, _pair(c1.rel, c1.name))
            return _ids(Select(cells, Cmp(op, ColRef(VALUE), ColRef(VALUE))))
        a = self._cells(vt, c1, "i1", "v1")
        b = self._cells(vt, c2, "i2", "v2")
        both = Select(Product(a, b), And(Cmp("=", ColRef("i1"), ColRef("i2")), Cmp(op, ColRef("v1"), ColRef("v2"))))
        out = Rename(Project(both, (ColRef("i1"),)), ColRef("i1"), T_INDEX)
        if op == "=" and not self.options.null_mismatch:
            absent = Select(
                _ids(vt),
                And(
                    NotInSet(ColRef(T_INDEX), _ids(Select(vt, _pair(c1.rel, c1.name)))),
                    NotInSet(ColRef(T_INDEX), _ids(Select(vt, _pair(c2.rel, c2.name)))),
                ),
            )
            out = Union(out, absent)
        return out

    def _join(self, left, right, pairs):
        lty, rty = self.typer(left), self.typer(right)
        lvt, rvt = self(left), self(right)
        _, renamed = free_rename_normalize(lty, rty)
        left_ids, right_ids = _ids(lvt, "lid"), _ids(rvt, "rid")
        if not pairs:
            matched = Product(left_ids, right_ids)
        else:
            per_pair = []
            for lref, rref in pairs:
                lc, rc = lty[lty.resolve(lref)], rty[rty.resolve(rref)]
                a = self._cells(lvt, lc, "lid", "lv")
                b = self._cells(rvt, rc, "rid", "rv")
                hit = Project(Select(Product(a, b), Cmp("=", ColRef("lv"), ColRef("rv"))), (ColRef("lid"), ColRef("rid")))
                if not self.options.null_mismatch:
                    lnull = Select(left_ids, NotInSet(ColRef("lid"), Project(a, (ColRef("lid"),))))
                    rnull = Select(right_ids, NotInSet(ColRef("rid"), Project(b, (ColRef("rid"),))))
                    hit = Union(hit, Product(lnull, rnull))
                per_pair.append(hit)
            matched = _intersect_all(per_pair)
        keyed = Extend(matched, "text", "jid", HashOf((ColRef("lid"), ColRef("rid"))))
        rvt = self._relabel(rvt, {(c.rel, c.name): (c.rel, renamed[c.name]) for c in rty if c.name in renamed})
        sides = []
        for vt, id_name in ((lvt, "lid"), (rvt, "rid")):
            rows = Select(Product(vt, keyed), Cmp("=", ColRef(T_INDEX), ColRef(id_name)))
            rows = Project(rows, (ColRef(R_NAME), ColRef("jid"), ColRef(A_NAME), ColRef(VALUE)))
            sides.append(Rename(rows, ColRef("jid"), T_INDEX))
        return Union(*sides)

    def _union(self, t: Union):
        lty, rty = self.typer(t.left), self.typer(t.right)
        if not union_compatible(lty, rty):
            return self._unit()
        lvt = self._rekey(self(t.left), "L")
        rvt = self._rekey(self(t.right), "R")
        mapping = {(rc.rel, rc.name): (lc.rel, lc.name) for lc, rc in zip(lty, rty)}
        return Union(lvt, self._relabel(rvt, mapping))

    def _minus(self, t: Minus):
        lty, rty = self.typer(t.left), self.typer(t.right)
        lvt, rvt = self(t.left), self(t.right)
        left_ids, right_ids = _ids(lvt, "lid"), _ids(rvt, "rid")
        candidates = Product(left_ids, right_ids)
        mismatches = []
        for lc, rc in zip(lty, rty):
            a = self._cells(lvt, lc, "lid", "lv")
            b = self._cells(rvt, rc, "rid", "rv")
            a_ids, b_ids = Project(a, (ColRef("lid"),)), Project(b, (ColRef("rid"),))
            differ = Project(Select(Product(a, b), Not(Cmp("=", ColRef("lv"), ColRef("rv")))), (ColRef("lid"), ColRef("rid")))
            left_only = Product(a_ids, Select(right_ids, NotInSet(ColRef("rid"), b_ids)))
            right_only = Product(Select(left_ids, NotInSet(ColRef("lid"), a_ids)), b_ids)
            mismatches += [differ, left_only, right_only]
        matched = Minus(candidates, _union_all(mismatches)) if mismatches else candidates
        return Select(lvt, NotInSet(ColRef(T_INDEX), Project(matched, (ColRef("lid"),))))


def rewrite(term, schema: DatabaseSchema, options: Optional[RewriteOptions] = None):
    """The equivalent term over ``r_V`` for a user-schema term."""
    return Rewriter(schema, options)(term)


def _contains_extend(term) -> bool:
    return any(isinstance(t, Extend) for t in walk(term))


def answer(term, schema: DatabaseSchema, vector: VectorRelation, options: Optional[RewriteOptions] = None) -> Relation:
    """Evaluate a user term through the vector relation.

    Extend-free subterms go through ``rewrite`` + ``view``; any Extend node
    (which has no rewriting) is applied directly to those results.
    """
    rewriter = Rewriter(schema, options)
    vector_eval = Evaluator(vector.as_instance())
    typer = rewriter.typer

    def through_vector(t):
        return view(typer(t), vector_eval(rewriter(t)))

    if not _contains_extend(term):
        return through_vector(term)
    log.debug("EXTEND present: applying it after the rewritten operands")
    fallback = Evaluator(DatabaseInstance(schema, {}), typer)

    def seed(t):
        if not _contains_extend(t):
            fallback._memo[id(t)] = (t, through_vector(t))
            return
        for child in ([] if not isinstance(t, Select) else list(condition_terms(t.cond))) + list(children(t)):
            seed(child)

    seed(term)
    return fallback(term)


# --------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class MutationPlan:
    """What a statement does to the vector relation.

    ``delete`` is a term over ``r_V`` yielding the rows to remove;
    ``insert_rows`` are rows to add; ``insert_tuples`` is a user-level term
    (evaluated before deletion) whose tuples are parsed and added.
    """

    relation: str
    delete: Optional[object] = None
    insert_rows: frozenset = field(default_factory=frozenset)
    insert_tuples: Optional[object] = None


def rewrite_insert(rel: RelationSchema, cols, vals) -> frozenset:
    cols, vals = list(cols), list(vals)
    if len(cols) != len(vals):
        raise SchemaError(f"{len(cols)} columns but {len(vals)} values")
    if len(set(cols)) != len(cols):
        raise SchemaError("insert lists a column twice")
    if not cols:
        raise SchemaError("insert needs at least one column")
    full = [None] * rel.arity
    for name, v in zip(cols, vals):
        if v is None:
            raise ConstraintViolation([f"{rel.name}: inserted value for {name} is Null"])
        full[rel.position(name)] = check_value(v)
    return parse_tuple(rel, full)


def _single(rel: RelationSchema, schema: Optional[DatabaseSchema]) -> DatabaseSchema:
    if schema is None:
        return DatabaseSchema({rel.name: rel})
    return schema


def rewrite_delete(rel: RelationSchema, cond, schema: Optional[DatabaseSchema] = None,
                   options: Optional[RewriteOptions] = None) -> MutationPlan:
    schema = _single(rel, schema)
    options = options or RewriteOptions()
    doomed = _ids(rewrite(Select(Rel(rel.name), cond), schema, options))
    scope = InSet(ColRef(T_INDEX), doomed)
    if options.scope_delete_to_relation:
        scope = And(_is(R_NAME, rel.name), scope)
    return MutationPlan(rel.name, delete=Select(RV, scope))


def _fresh(name, taken):
    out = f"{name}'"
    while out in taken:
        out += "'"
    taken.add(out)
    return out


def rewrite_update(rel: RelationSchema, assignments, cond, schema: Optional[DatabaseSchema] = None,
                   options: Optional[RewriteOptions] = None) -> MutationPlan:
    """Delete the matching tuples, then insert them with the assignments applied."""
    schema = _single(rel, schema)
    assignments = dict(assignments)
    for name in assignments:
        rel.position(name)
    plan = rewrite_delete(rel, cond, schema, options)
    taken = set(rel.column_names)
    out = Select(Rel(rel.name), cond)
    new_names = []
    for col in rel.columns:
        new = _fresh(col.name, taken)
        out = Extend(out, col.attribute, new, assignments.get(col.name, ColRef(col.name, rel.name)))
        new_names.append(ColRef(new))
    Typer(schema)(out)
    return MutationPlan(rel.name, delete=plan.delete, insert_tuples=Project(out, tuple(new_names)))


def apply_plan(plan: MutationPlan, schema: DatabaseSchema, vector: VectorRelation) -> VectorRelation:
    """The vector relation after ``plan``; raises ConstraintViolation if invalid."""
    rel = schema[plan.relation]
    removed = frozenset()
    if plan.delete is not None:
        removed = Evaluator(vector.as_instance())(plan.delete).rows
    added = set(plan.insert_rows)
    if plan.insert_tuples is not None:
        for values in answer(plan.insert_tuples, schema, vector).rows:
            added |= parse_tuple(rel, values)
    after = VectorRelation((vector.rows - removed) | added)
    problems = check_relation(rel, matter(schema, rel.name, after).rows)
    if problems:
        raise ConstraintViolation(problems)
    return after.validate()
