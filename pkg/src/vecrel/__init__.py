"""Relational databases stored as one vector relation ``r_V(r-name, t-index, a-name, value)``.

Queries over the user schema are rewritten into queries over ``r_V`` and the
results reassembled with ``view``; ``evaluate`` gives the reference answer
over materialized relations.
"""

from .algebra import evaluate, infer_type
from .bridge import matter, matter_all, parse_instance, parse_tuple, view
from .core import (
    Column,
    ConstraintViolation,
    CorruptionError,
    DatabaseInstance,
    DatabaseSchema,
    RelationSchema,
    SchemaError,
    VecrelError,
    VectorRelation,
    VectorRow,
    hash_canonical,
)
from .engine import Store, apply_mutation, ingest_csv, init_store, load_schema, open_store, run_query
from .rewriter import RewriteOptions, answer, rewrite
from .sexpr import format_term, parse_statement, parse_term_text

__version__ = "0.1.0"

__all__ = [
    "Column",
    "ConstraintViolation",
    "CorruptionError",
    "DatabaseInstance",
    "DatabaseSchema",
    "RelationSchema",
    "RewriteOptions",
    "SchemaError",
    "Store",
    "VecrelError",
    "VectorRelation",
    "VectorRow",
    "answer",
    "apply_mutation",
    "evaluate",
    "format_term",
    "hash_canonical",
    "infer_type",
    "ingest_csv",
    "init_store",
    "load_schema",
    "matter",
    "matter_all",
    "open_store",
    "parse_instance",
    "parse_statement",
    "parse_term_text",
    "parse_tuple",
    "rewrite",
    "run_query",
    "view",
]
