"""Command-line front end: ``vecrel <command> ...``.

Exit status is 0 on success, 1 for user errors (bad input, constraint
violations, unknown relations) and 2 for corruption or internal failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .algebra import row_sort_key
from .core import CorruptionError, DatabaseSchema, VecrelError
from .csvio import format_record
from .engine import (
    STORE_ENV,
    apply_mutation,
    init_store,
    ingest_csv,
    load_schema,
    open_store,
    resolve_store_path,
    run_query,
    verify_store,
)
from .fuzz import FuzzConfig, fuzz_equivalence
from .rewriter import rewrite
from .sexpr import format_term, parse_term_text

NULL_DISPLAY = "NULL"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _text_arg(value: str) -> str:
    if value.startswith("@"):
        return Path(value[1:]).read_text(encoding="utf-8")
    return value


def _store_and_rest(args, n):
    """Split positional args; the store may be left out when VECREL_STORE is set."""
    if len(args) == n + 1:
        return resolve_store_path(args[0]), args[1:]
    if len(args) == n:
        return resolve_store_path(None), args
    raise UsageError(f"expected {n} argument(s) after the optional store, got {len(args)}")


def _render(labels, rows, fmt, out):
    rows = sorted(rows, key=row_sort_key)
    if fmt == "csv":
        for row in rows:
            out.write(format_record(row))
        return
    cells = [[NULL_DISPLAY if v is None else repr(v) if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(labels)]
    out.write("  ".join(h.ljust(w) for h, w in zip(labels, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for r in cells:
        out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    out.write(f"({len(cells)} row{'s' if len(cells) != 1 else ''})\n")


def cmd_init(ns, out):
    path = resolve_store_path(ns.store)
    init_store(ns.schema, path)
    out.write(f"initialized {path}\n")


def cmd_load(ns, out):
    path, (rel, csv_path) = _store_and_rest(ns.args, 2)
    store = open_store(path)
    n = ingest_csv(store, rel, csv_path)
    out.write(f"{n} tuple{'s' if n != 1 else ''} added to {rel}\n")


def cmd_query(ns, out):
    path, (text,) = _store_and_rest(ns.args, 1)
    store = open_store(path)
    result = run_query(store, _text_arg(text), oracle=ns.oracle)
    _render(list(result.type.names()), result.rows, ns.format, out)


def cmd_show_rewrite(ns, out):
    if ns.schema:
        schema = load_schema(ns.schema)
    else:
        try:
            schema = open_store(ns.store).schema
        except VecrelError:
            if ns.store is None:
                raise UsageError(f"show-rewrite needs --schema, --store or {STORE_ENV}") from None
            raise
    term = parse_term_text(_text_arg(ns.term))
    out.write(format_term(rewrite(term, schema), width=None if ns.compact else 100) + "\n")


def cmd_exec(ns, out):
    path, (text,) = _store_and_rest(ns.args, 1)
    store = open_store(path)
    added, removed = apply_mutation(store, _text_arg(text))
    out.write(f"{added} vector row{'s' if added != 1 else ''} added, {removed} removed\n")


def cmd_matter(ns, out):
    path, (rel,) = _store_and_rest(ns.args, 1)
    store = open_store(path)
    inst = store.instance()
    schema: DatabaseSchema = store.schema
    _render(list(schema[rel].column_names), inst.rows(rel), ns.format, out)


def cmd_verify(ns, out):
    path, _ = _store_and_rest(ns.args, 0)
    store = open_store(path)
    problems = verify_store(store)
    if problems:
        raise CorruptionError("; ".join(problems))
    out.write(f"ok: {len(store.vector)} vector rows, {len(store.schema.relations)} relations\n")


def cmd_fuzz(ns, out):
    cfg = FuzzConfig(seed=ns.seed, mode=ns.mode, allow_minus=ns.minus)
    report = fuzz_equivalence(cfg, ns.iters)
    if ns.json:
        out.write(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    else:
        for f in report.failures:
            out.write(f"iteration {f.iteration} ({f.kind}): {f.detail}\n{f.counterexample}\n\n")
    out.write(report.summary() + "\n")
    return 0 if report.ok else 2


def build_parser() -> argparse.ArgumentParser:
    # The subcommand copy must not reset a --format given before the subcommand.
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("table", "csv"), default=argparse.SUPPRESS, help="output format for relations")
    parser = _Parser(prog="vecrel", description="Relational queries over a single vector relation.")
    parser.add_argument("--format", choices=("table", "csv"), default="table", help="output format for relations")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("init", parents=[common], help="create a store from a schema file")
    p.add_argument("schema")
    p.add_argument("store", nargs="?", help="defaults to $VECREL_STORE")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("load", parents=[common], help="ingest a CSV file into a relation")
    p.add_argument("args", nargs="+", metavar="[store] rel csv")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("query", parents=[common], help="answer a query term (text or @file)")
    p.add_argument("args", nargs="+", metavar="[store] term")
    p.add_argument("--oracle", action="store_true", help="evaluate over the materialized relations instead")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("show-rewrite", parents=[common], help="print the rewritten term over r_V")
    p.add_argument("term")
    p.add_argument("--store", help=f"store whose schema to use (default ${STORE_ENV})")
    p.add_argument("--schema", help="schema file to use instead of a store")
    p.add_argument("--compact", action="store_true", help="print on one line")
    p.set_defaults(func=cmd_show_rewrite)

    p = sub.add_parser("exec", parents=[common], help="apply an insert, delete or update statement")
    p.add_argument("args", nargs="+", metavar="[store] statement")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("matter", parents=[common], help="print a materialized relation")
    p.add_argument("args", nargs="+", metavar="[store] rel")
    p.set_defaults(func=cmd_matter)

    p = sub.add_parser("verify", parents=[common], help="check that the store round-trips")
    p.add_argument("args", nargs="*", metavar="store")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fuzz", parents=[common], help="compare the vector path with direct evaluation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--mode", choices=("query", "mutation", "both"), default="both")
    p.add_argument("--minus", action="store_true", help="also generate set differences")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    p.set_defaults(func=cmd_fuzz)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    logging.basicConfig(level=logging.WARNING, format="vecrel: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        ns = build_parser().parse_args(argv)
        return ns.func(ns, out) or 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except CorruptionError as exc:
        print(f"vecrel: corrupt store: {exc}", file=sys.stderr)
        return 2
    except (VecrelError, OSError, ValueError) as exc:
        print(f"vecrel: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last resort
        print(f"vecrel: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
