"""Moving data between user relations and the vector relation.

``parse_tuple`` explodes one tuple into vector rows, ``matter`` reassembles a
stored relation, and ``view`` reassembles any typed query result.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable

from .algebra import Relation, TermType, TypeCol
from .core import (
    VECTOR_NAME,
    ConstraintViolation,
    CorruptionError,
    DatabaseInstance,
    DatabaseSchema,
    RelationInstance,
    RelationSchema,
    SchemaError,
    VectorRelation,
    VectorRow,
    check_instance,
    check_relation,
    hash_canonical,
)

# Rewritten projections tag every surviving tuple with one of these rows so
# that a tuple whose visible columns are all Null still has a t-index.
MARKER_RNAME = VECTOR_NAME
MARKER_ANAME = "*"
MARKER_VALUE = "*"


def is_marker(row) -> bool:
    return row[0] == MARKER_RNAME


def parse_tuple(rel: RelationSchema, values) -> frozenset:
    """Vector rows for one tuple: one row per non-Null field."""
    values = tuple(values)
    problems = check_relation(rel, [values])
    if problems:
        raise ConstraintViolation(problems)
    t_index = hash_canonical(values)
    return frozenset(
        VectorRow(rel.name, t_index, col.name, v) for col, v in zip(rel.columns, values) if v is not None
    )


def parse_instance(schema: DatabaseSchema, inst: DatabaseInstance) -> VectorRelation:
    problems = check_instance(schema, inst)
    if problems:
        raise ConstraintViolation(problems)
    rows = {}
    owner = {}
    for name in sorted(inst.relations):
        rel = schema[name]
        for values in inst.relations[name]:
            for row in parse_tuple(rel, values):
                key = (row.r_name, row.t_index)
                if owner.setdefault(key, values) != values:
                    raise CorruptionError(f"t-index collision in {name}: {owner[key]!r} vs {values!r}")
                rows[(row.r_name, row.t_index, row.a_name)] = row
    return VectorRelation(frozenset(rows.values()))


def _groups(rows: Iterable, r_name=None) -> dict:
    groups = defaultdict(dict)
    for r_n, t_index, a_name, value in rows:
        if r_name is not None and r_n != r_name:
            continue
        cell = groups[t_index]
        key = (r_n, a_name)
        if key in cell and cell[key] != value:
            raise CorruptionError(f"two values for ({r_n}, {t_index}, {a_name})")
        cell[key] = value
    return groups


def matter(schema: DatabaseSchema, rel_name: str, v) -> RelationInstance:
    """Materialize one user relation from the vector rows carrying its name."""
    rel = schema[rel_name]
    rows = v.rows if isinstance(v, VectorRelation) else v
    known = set(rel.column_names)
    out = set()
    for t_index, cells in _groups(rows, rel_name).items():
        stray = {a for (_, a) in cells} - known
        if stray:
            raise SchemaError(f"{rel_name} tuple {t_index} has columns {sorted(stray)} not in the schema")
        out.add(tuple(cells.get((rel_name, c), None) for c in rel.column_names))
    return RelationInstance(rel, frozenset(out))


def matter_all(schema: DatabaseSchema, v: VectorRelation) -> DatabaseInstance:
    stray = v.relation_names() - set(schema.relations)
    if stray:
        raise SchemaError(f"vector relation mentions unknown relations {sorted(stray)}")
    return DatabaseInstance(schema, {name: matter(schema, name, v).rows for name in schema.relations})


def view(ty: TermType, r) -> Relation:
    """Reassemble the tuples of a vector result with output columns ``ty``.

    A t-index contributes a tuple when it has a row for at least one column
    of ``ty`` or carries a projection marker; missing columns read as Null.
    """
    rows = r.rows if isinstance(r, (VectorRelation, Relation)) else r
    if not isinstance(ty, TermType):
        ty = TermType(TypeCol(rel, name, "") for rel, name in ty)
    pairs = ty.pairs()
    wanted = set(pairs)
    out = set()
    for cells in _groups(rows).values():
        if not any(k in wanted or k[0] == MARKER_RNAME for k in cells):
            continue
        out.add(tuple(cells.get(p) for p in pairs))
    return Relation(ty, frozenset(out))


def check_canonical(schema: DatabaseSchema, inst: DatabaseInstance) -> bool:
    """True when materializing the parsed instance gives back every relation."""
    vector = parse_instance(schema, inst)
    return all(matter(schema, name, vector).rows == inst.rows(name) for name in schema.relations)
