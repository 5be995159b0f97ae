"""On-disk stores, CSV ingestion and the query/mutation pipeline.

A store is a directory holding ``schema.json`` and ``vector.tsv``.  The
vector file starts with the line ``vecrel/1 hash=fnv1a128`` followed by one
row per line, tab separated: r-name, t-index, a-name, kind tag, value.
Rows are sorted by (r-name, t-index, a-name) so the file is a pure function
of the vector relation.
"""

from __future__ import annotations

import contextlib
import fcntl
import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .algebra import Extend, Relation, Typer, evaluate, walk
from .bridge import matter, matter_all, parse_instance, parse_tuple
from .core import (
    HASH_ALGORITHM,
    KINDS,
    TAG_INT,
    TAG_REAL,
    TAG_TEXT,
    Column,
    ConstraintViolation,
    CorruptionError,
    DatabaseSchema,
    RelationSchema,
    SchemaError,
    ValueKindError,
    VectorRelation,
    VectorRow,
    check_relation,
    check_value,
)
from .csvio import read_records
from .rewriter import (
    MutationPlan,
    RewriteOptions,
    answer,
    apply_plan,
    rewrite_delete,
    rewrite_insert,
    rewrite_update,
)
from .sexpr import Delete, Insert, Update, parse_statement, parse_term_text

log = logging.getLogger(__name__)

FORMAT_VERSION = "vecrel/1"
HEADER = f"{FORMAT_VERSION} hash={HASH_ALGORITHM}"
SCHEMA_FILE = "schema.json"
VECTOR_FILE = "vector.tsv"
LOCK_FILE = ".lock"
STORE_ENV = "VECREL_STORE"


# --------------------------------------------------------------------------
# schema files


def _positions(items, rel_name, names, what):
    out = set()
    for item in items:
        if isinstance(item, bool):
            raise SchemaError(f"{rel_name}: bad {what} entry {item!r}")
        if isinstance(item, int):
            out.add(item)
        elif isinstance(item, str):
            if item not in names:
                raise SchemaError(f"{rel_name}: {what} names unknown column {item!r}")
            out.add(names.index(item) + 1)
        else:
            raise SchemaError(f"{rel_name}: bad {what} entry {item!r}")
    return frozenset(out)


def schema_from_json(data) -> DatabaseSchema:
    if not isinstance(data, dict) or not isinstance(data.get("relations"), list):
        raise SchemaError('schema must be an object with a "relations" list')
    rels = {}
    for i, r in enumerate(data["relations"]):
        if not isinstance(r, dict) or "name" not in r or not isinstance(r.get("columns"), list):
            raise SchemaError(f"relation #{i + 1}: needs a name and a columns list")
        name = r["name"]
        if name in rels:
            raise SchemaError(f"duplicate relation name {name!r}")
        cols = []
        for c in r["columns"]:
            if not isinstance(c, dict) or "name" not in c:
                raise SchemaError(f"{name}: every column needs a name")
            kind = c.get("kind", "text")
            if kind not in KINDS:
                raise SchemaError(f"{name}.{c['name']}: unknown kind {kind!r}")
            cols.append(Column(c["name"], kind, c.get("attribute")))
        names = [c.name for c in cols]
        key = r.get("key")
        key = None if key is None else _positions(key, name, names, "key")
        not_null = _positions(r.get("not_null", []), name, names, "not_null")
        rels[name] = RelationSchema(name, tuple(cols), key, not_null)
    return DatabaseSchema(rels)


def schema_to_json(schema: DatabaseSchema) -> dict:
    out = []
    for rel in schema.relations.values():
        entry = {
            "name": rel.name,
            "columns": [
                {"name": c.name, "kind": c.kind, **({} if c.attribute == c.kind else {"attribute": c.attribute})}
                for c in rel.columns
            ],
        }
        if rel.key is not None:
            entry["key"] = sorted(rel.key)
        if rel.not_null:
            entry["not_null"] = sorted(rel.not_null)
        out.append(entry)
    return {"relations": out}


def load_schema(path) -> DatabaseSchema:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return schema_from_json(data)


# --------------------------------------------------------------------------
# vector file

_ESC = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESC = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _escape(s: str) -> str:
    return "".join(_ESC.get(c, c) for c in s)


def _unescape(s: str) -> str:
    out, i = [], 0
    while i < len(s):
        c = s[i]
        if c == "\\":
            nxt = s[i + 1 : i + 2]
            if nxt not in _UNESC:
                raise CorruptionError(f"bad escape in {s!r}")
            out.append(_UNESC[nxt])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _format_value(v) -> tuple:
    if isinstance(v, int):
        return TAG_INT, str(v)
    if isinstance(v, float):
        return TAG_REAL, repr(v)
    return TAG_TEXT, _escape(v)


def format_vector(vector: VectorRelation) -> str:
    lines = [HEADER]
    for row in vector.sorted_rows():
        tag, text = _format_value(row.value)
        lines.append("\t".join((row.r_name, row.t_index, row.a_name, str(tag), text)))
    return "\n".join(lines) + "\n"


def parse_vector(text: str) -> VectorRelation:
    lines = text.split("\n")
    if not lines or lines[0] != HEADER:
        raise CorruptionError(f"vector file must start with {HEADER!r}")
    if lines[-1] != "":
        raise CorruptionError("vector file must end with a newline")
    rows = []
    for n, line in enumerate(lines[1:-1], start=2):
        parts = line.split("\t")
        if len(parts) != 5:
            raise CorruptionError(f"line {n}: expected 5 fields, found {len(parts)}")
        r_name, t_index, a_name, tag, text = parts
        try:
            if tag == str(TAG_INT):
                value = int(text)
            elif tag == str(TAG_REAL):
                value = float(text)
            elif tag == str(TAG_TEXT):
                value = _unescape(text)
            else:
                raise CorruptionError(f"line {n}: unknown tag {tag!r}")
            check_value(value)
        except (ValueError, ValueKindError) as exc:
            raise CorruptionError(f"line {n}: {exc}") from None
        rows.append(VectorRow(r_name, t_index, a_name, value))
    vector = VectorRelation(frozenset(rows))
    if len(vector) != len(rows):
        raise CorruptionError("vector file repeats a row")
    return vector.validate()


# --------------------------------------------------------------------------
# stores


@dataclass
class Store:
    """A schema plus its vector relation; ``path`` is None for in-memory stores."""

    schema: DatabaseSchema
    vector: VectorRelation = field(default_factory=VectorRelation)
    path: Optional[Path] = None
    options: RewriteOptions = field(default_factory=RewriteOptions)
    _mutex: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        stray = self.vector.relation_names() - set(self.schema.relations)
        if stray:
            raise CorruptionError(f"vector relation mentions unknown relations {sorted(stray)}")

    def digest(self) -> str:
        return hashlib.sha256(format_vector(self.vector).encode("utf-8")).hexdigest()

    def instance(self):
        return matter_all(self.schema, self.vector)


def resolve_store_path(path=None) -> Path:
    path = path or os.environ.get(STORE_ENV)
    if not path:
        raise SchemaError(f"no store given and {STORE_ENV} is not set")
    return Path(path)


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def _write_lock(store: Store):
    with store._mutex:
        if store.path is None:
            yield
            return
        with open(store.path / LOCK_FILE, "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                # Pick up anything another writer published meanwhile.
                store.vector = _read_vector(store.path)
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)


def _read_vector(path: Path) -> VectorRelation:
    return parse_vector((path / VECTOR_FILE).read_text(encoding="utf-8"))


def init_store(schema, path) -> Store:
    """Create an empty store directory; ``schema`` is a DatabaseSchema or a schema file."""
    if not isinstance(schema, DatabaseSchema):
        schema = load_schema(schema)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if (path / VECTOR_FILE).exists():
        raise SchemaError(f"{path} already holds a store")
    _write_atomic(path / SCHEMA_FILE, json.dumps(schema_to_json(schema), indent=2, sort_keys=True) + "\n")
    store = Store(schema, VectorRelation(), path)
    save_store(store)
    return store


def open_store(path=None) -> Store:
    path = resolve_store_path(path)
    if not (path / VECTOR_FILE).exists():
        raise SchemaError(f"{path} is not a store (no {VECTOR_FILE})")
    schema = load_schema(path / SCHEMA_FILE)
    return Store(schema, _read_vector(path), path)


def save_store(store: Store):
    if store.path is not None:
        _write_atomic(store.path / VECTOR_FILE, format_vector(store.vector))


def _commit(store: Store, vector: VectorRelation):
    candidate = Store(store.schema, vector.validate(), store.path)
    if store.path is not None:
        save_store(candidate)
    store.vector = candidate.vector


# --------------------------------------------------------------------------
# ingestion


def convert_field(col: Column, fld, where: str):
    if fld.is_null:
        return None
    text = fld.text
    try:
        if col.kind == "int":
            return check_value(int(text.strip()))
        if col.kind == "real":
            return check_value(float(text.strip()))
        return check_value(text)
    except (ValueError, ValueKindError) as exc:
        raise SchemaError(f"{where}: column {col.name!r} ({col.kind}): cannot read {text!r}: {exc}") from None


def read_csv_tuples(rel: RelationSchema, text: str, source: str = "<csv>") -> list:
    out = []
    for line, fields in read_records(text):
        if len(fields) != rel.arity:
            raise SchemaError(f"{source} line {line}: {len(fields)} fields, {rel.name} has arity {rel.arity}")
        out.append(tuple(convert_field(c, f, f"{source} line {line}") for c, f in zip(rel.columns, fields)))
    return out


def ingest_tuples(store: Store, rel_name: str, tuples) -> int:
    """Add tuples to a relation; returns how many were not already present."""
    rel = store.schema[rel_name]
    with _write_lock(store):
        before = matter(store.schema, rel_name, store.vector).rows
        new = set(tuple(t) for t in tuples) - before
        rows = set(store.vector.rows)
        for values in sorted(new, key=repr):
            rows |= parse_tuple(rel, values)
        after = VectorRelation(frozenset(rows))
        _check_relation_after(store.schema, rel, after)
        _commit(store, after)
    return len(new)


def ingest_csv(store: Store, rel_name: str, path) -> int:
    rel = store.schema[rel_name]
    text = Path(path).read_text(encoding="utf-8")
    return ingest_tuples(store, rel_name, read_csv_tuples(rel, text, str(path)))


def _check_relation_after(schema, rel, vector):
    problems = check_relation(rel, matter(schema, rel.name, vector).rows)
    if problems:
        raise ConstraintViolation(problems)


# --------------------------------------------------------------------------
# queries and statements


def run_query(store: Store, text, oracle: bool = False) -> Relation:
    """Answer a query given as s-expression text or an already parsed term.

    The default path rewrites the query over ``r_V``; ``oracle=True``
    evaluates it directly over the materialized relations instead.
    """
    term = parse_term_text(text) if isinstance(text, str) else text
    Typer(store.schema)(term)
    vector = store.vector
    if oracle:
        return evaluate(term, store.instance())
    if any(isinstance(t, Extend) for t in walk(term)):
        log.warning("extend has no vector rewriting; it is applied to the rewritten operand's result")
    return answer(term, store.schema, vector, store.options)


def plan_statement(store: Store, stmt) -> MutationPlan:
    if isinstance(stmt, str):
        stmt = parse_statement(stmt)
    rel = store.schema[stmt.relation]
    if isinstance(stmt, Insert):
        for name in stmt.columns:
            rel.position(name)
        return MutationPlan(rel.name, insert_rows=rewrite_insert(rel, stmt.columns, stmt.values))
    if isinstance(stmt, Delete):
        return rewrite_delete(rel, stmt.cond, store.schema, store.options)
    if isinstance(stmt, Update):
        return rewrite_update(rel, stmt.assignments, stmt.cond, store.schema, store.options)
    raise TypeError(f"not a statement: {stmt!r}")


def apply_mutation(store: Store, stmt) -> tuple:
    """Apply one statement; returns (vector rows added, vector rows removed).

    Nothing is changed, in memory or on disk, if the statement fails.
    """
    with _write_lock(store):
        plan = plan_statement(store, stmt)
        before = store.vector
        after = apply_plan(plan, store.schema, before)
        added = len(after.rows - before.rows)
        removed = len(before.rows - after.rows)
        if added or removed:
            _commit(store, after)
    return added, removed


def verify_store(store: Store) -> list:
    """Problems that break the parse/matter correspondence; empty when healthy."""
    problems = list(store.vector.violations())
    stray = store.vector.relation_names() - set(store.schema.relations)
    if stray:
        return problems + [f"unknown relations {sorted(stray)}"]
    try:
        inst = store.instance()
        reparsed = parse_instance(store.schema, inst)
    except (ConstraintViolation, CorruptionError, SchemaError) as exc:
        return problems + [str(exc)]
    for row in sorted(store.vector.rows ^ reparsed.rows):
        problems.append(f"row not reproduced by its tuple: {tuple(row)!r}")
    return problems
