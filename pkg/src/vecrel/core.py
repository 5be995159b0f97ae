"""Values, schemas, instances, the vector relation and the tuple-index hash.

Cell values are plain Python scalars: ``None`` (Null), ``int`` (signed
64-bit), ``float`` (finite) and ``str``.  ``bool`` is rejected so that it
never aliases ``int``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

VECTOR_NAME = "r_V"
VECTOR_COLUMNS = ("r-name", "t-index", "a-name", "value")
KINDS = ("int", "real", "text")

TAG_NULL, TAG_INT, TAG_REAL, TAG_TEXT = 0, 1, 2, 3
FIELD_SEP = b"\x1f"
LIST_END = b"\x1e"

INT_MIN, INT_MAX = -(2**63), 2**63 - 1

FNV_PRIME = 0x100000001B3
# Standard 64-bit FNV offset basis, and the high half of the 128-bit one.
FNV_BASIS_HI = 0xCBF29CE484222325
FNV_BASIS_LO = 0x6C62272E07BB0142
MASK64 = 0xFFFFFFFFFFFFFFFF
HASH_ALGORITHM = "fnv1a128"


class VecrelError(Exception):
    """Base class for all errors raised by this package."""


class ValueKindError(VecrelError):
    """A value is not one of the four supported scalar kinds."""


class ComparisonTypeError(VecrelError):
    """An ordering comparison between incomparable kinds."""


class SchemaError(VecrelError):
    pass


class ConstraintViolation(VecrelError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class CorruptionError(VecrelError):
    """The vector relation is internally inconsistent (e.g. a hash collision)."""


# --------------------------------------------------------------------------
# values


def value_kind(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        raise ValueKindError(f"booleans are not values: {v!r}")
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "real"
    if isinstance(v, str):
        return "text"
    raise ValueKindError(f"unsupported value {v!r}")


def check_value(v):
    """Validate and normalize a value (-0.0 becomes 0.0)."""
    kind = value_kind(v)
    if kind == "int" and not INT_MIN <= v <= INT_MAX:
        raise ValueKindError(f"integer out of 64-bit range: {v}")
    if kind == "real":
        if not math.isfinite(v):
            raise ValueKindError(f"non-finite real: {v!r}")
        if v == 0.0:
            return 0.0
    if kind == "text" and ("\x1e" in v or "\x1f" in v):
        raise ValueKindError("text may not contain the separator bytes 0x1E/0x1F")
    return v


def is_numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def values_equal(a, b) -> bool:
    """Join/selection equality: Null matches nothing, not even Null."""
    if a is None or b is None:
        return False
    if is_numeric(a) and is_numeric(b):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return False


def compare(op: str, a, b) -> bool:
    if op == "=":
        return values_equal(a, b)
    if a is None or b is None:
        return False
    if not ((is_numeric(a) and is_numeric(b)) or (isinstance(a, str) and isinstance(b, str))):
        raise ComparisonTypeError(f"cannot compare {value_kind(a)} {op} {value_kind(b)}")
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    raise ValueError(f"unknown comparison operator {op!r}")


def serialize_value(v) -> bytes:
    """Tag byte followed by the value's bytes."""
    kind = value_kind(v)
    if kind == "null":
        return bytes([TAG_NULL])
    if kind == "int":
        return bytes([TAG_INT]) + struct.pack(">q", v)
    if kind == "real":
        return bytes([TAG_REAL]) + struct.pack(">d", v)
    return bytes([TAG_TEXT]) + v.encode("utf-8")


def deserialize_value(data: bytes):
    tag, body = data[0], data[1:]
    if tag == TAG_NULL and not body:
        return None
    if tag == TAG_INT and len(body) == 8:
        return struct.unpack(">q", body)[0]
    if tag == TAG_REAL and len(body) == 8:
        return struct.unpack(">d", body)[0]
    if tag == TAG_TEXT:
        return body.decode("utf-8")
    raise ValueKindError(f"malformed serialized value {data!r}")


def canonical_bytes(values: Sequence) -> bytes:
    return FIELD_SEP.join(serialize_value(v) for v in values) + LIST_END


def _fnv1a64(data: bytes, basis: int) -> int:
    h = basis
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def hash_canonical(values: Sequence) -> str:
    """128-bit tuple index of a value list, as 32 lowercase hex digits.

    Two FNV-1a 64 passes over the canonical serialization, one with the
    standard offset basis (high half) and one with ``FNV_BASIS_LO``.
    """
    if len(values) == 0:
        raise ValueError("hash_canonical needs at least one value")
    data = canonical_bytes(values)
    return f"{_fnv1a64(data, FNV_BASIS_HI):016x}{_fnv1a64(data, FNV_BASIS_LO):016x}"


# --------------------------------------------------------------------------
# schemas


def _check_name(name, what):
    if not isinstance(name, str) or not name or any(c in name for c in "\t\n\r"):
        raise SchemaError(f"invalid {what} name {name!r}")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "text"
    attribute: Optional[str] = None

    def __post_init__(self):
        _check_name(self.name, "column")
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.attribute is None:
            object.__setattr__(self, "attribute", self.kind)

    def accepts(self, v) -> bool:
        return v is None or value_kind(v) == self.kind


@dataclass(frozen=True)
class RelationSchema:
    """A user relation.  ``key`` and ``not_null`` hold 1-based column positions."""

    name: str
    columns: tuple
    key: Optional[frozenset] = None
    not_null: frozenset = frozenset()

    def __post_init__(self):
        _check_name(self.name, "relation")
        cols = tuple(c if isinstance(c, Column) else Column(*c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        if not cols:
            raise SchemaError(f"relation {self.name!r} needs at least one column")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError(f"relation {self.name!r} has duplicate column names")
        key = None if self.key is None else frozenset(self.key)
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "not_null", frozenset(self.not_null))
        for pos in (key or frozenset()) | self.not_null:
            if not isinstance(pos, int) or not 1 <= pos <= len(cols):
                raise SchemaError(f"relation {self.name!r}: column position {pos!r} out of range")

    @property
    def arity(self) -> int:
        return len(self.columns)

    @property
    def column_names(self) -> tuple:
        return tuple(c.name for c in self.columns)

    def position(self, column_name: str) -> int:
        """0-based index of a column name."""
        try:
            return self.column_names.index(column_name)
        except ValueError:
            raise SchemaError(f"relation {self.name!r} has no column {column_name!r}") from None


@dataclass(frozen=True)
class DatabaseSchema:
    relations: Mapping[str, RelationSchema] = field(default_factory=dict)

    def __post_init__(self):
        rels = self.relations
        if not isinstance(rels, Mapping):
            rels = {r.name: r for r in rels}
        for name, rel in rels.items():
            if name != rel.name:
                raise SchemaError(f"relation registered as {name!r} is named {rel.name!r}")
            if name == VECTOR_NAME:
                raise SchemaError(f"{VECTOR_NAME!r} is reserved for the vector relation")
        object.__setattr__(self, "relations", dict(sorted(rels.items())))

    def __getitem__(self, name) -> RelationSchema:
        try:
            return self.relations[name]
        except KeyError:
            raise SchemaError(f"unknown relation {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self.relations

    def __hash__(self):
        return hash(tuple(self.relations.values()))


# --------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class RelationInstance:
    schema: RelationSchema
    rows: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "rows", frozenset(tuple(r) for r in self.rows))

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class DatabaseInstance:
    schema: DatabaseSchema
    relations: Mapping[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        rels = {}
        for name, rows in self.relations.items():
            if isinstance(rows, RelationInstance):
                rows = rows.rows
            if name != VECTOR_NAME and name not in self.schema:
                raise SchemaError(f"instance has relation {name!r} missing from the schema")
            rels[name] = frozenset(tuple(r) for r in rows)
        object.__setattr__(self, "relations", rels)

    def rows(self, name) -> frozenset:
        return self.relations.get(name, frozenset())

    def relation(self, name) -> RelationInstance:
        return RelationInstance(self.schema[name], self.rows(name))


class Violation(NamedTuple):
    relation: str
    kind: str
    detail: str

    def __str__(self):
        return f"{self.relation}: {self.kind}: {self.detail}"


def check_relation(rel: RelationSchema, rows: Iterable) -> list:
    out = []
    seen_keys = {}
    for row in sorted(rows, key=repr):
        if len(row) != rel.arity:
            out.append(Violation(rel.name, "arity", f"{row!r} has {len(row)} fields, expected {rel.arity}"))
            continue
        try:
            for v in row:
                check_value(v)
        except ValueKindError as exc:
            out.append(Violation(rel.name, "value", f"{row!r}: {exc}"))
            continue
        for col, v in zip(rel.columns, row):
            if not col.accepts(v):
                out.append(Violation(rel.name, "kind", f"{row!r}: {col.name} expects {col.kind}"))
        if all(v is None for v in row):
            out.append(Violation(rel.name, "all-null", f"{row!r} has no non-Null field"))
        for pos in sorted(rel.not_null | (rel.key or frozenset())):
            if row[pos - 1] is None:
                out.append(Violation(rel.name, "not-null", f"{row!r}: column {rel.columns[pos - 1].name} is Null"))
        if rel.key:
            k = tuple(row[p - 1] for p in sorted(rel.key))
            if k in seen_keys and seen_keys[k] != row:
                out.append(Violation(rel.name, "key", f"{row!r} duplicates key {k!r} of {seen_keys[k]!r}"))
            seen_keys.setdefault(k, row)
    return out


def check_instance(schema: DatabaseSchema, inst: DatabaseInstance) -> list:
    """All constraint violations of ``inst``; empty when it is valid."""
    out = []
    for name in sorted(inst.relations):
        if name not in schema:
            out.append(Violation(name, "schema", "relation not in schema"))
            continue
        out.extend(check_relation(schema[name], inst.relations[name]))
    return out


# --------------------------------------------------------------------------
# the vector relation


class VectorRow(NamedTuple):
    r_name: str
    t_index: str
    a_name: str
    value: object


@dataclass(frozen=True)
class VectorRelation:
    rows: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "rows", frozenset(VectorRow(*r) for r in self.rows))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.sorted_rows())

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r.r_name, r.t_index, r.a_name))

    def violations(self) -> list:
        """Primary-key and NOT NULL problems, found in one pass."""
        out = []
        seen = {}
        for row in self.rows:
            if row.value is None:
                out.append(f"Null value in {row!r}")
            k = (row.r_name, row.t_index, row.a_name)
            if k in seen:
                out.append(f"duplicate key {k!r}: {seen[k]!r} vs {row.value!r}")
            seen[k] = row.value
        return sorted(out)

    def validate(self) -> "VectorRelation":
        problems = self.violations()
        if problems:
            raise CorruptionError("; ".join(problems))
        return self

    def relation_names(self) -> frozenset:
        return frozenset(r.r_name for r in self.rows)

    def as_instance(self) -> DatabaseInstance:
        return DatabaseInstance(DatabaseSchema(), {VECTOR_NAME: self.rows})
