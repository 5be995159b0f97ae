"""Textual syntax for terms, conditions and statements.

Grammar (``;`` starts a comment; NAME is a bare symbol or a quoted string)::

    term  := (rel NAME) | (empty) | (bottom)
           | (rename TERM COL NAME) | (project TERM (COLSPEC ...))
           | (select TERM COND) | (product TERM TERM)
           | (join TERM TERM ((COL COL) ...))
           | (union TERM TERM) | (minus TERM TERM)
           | (extend TERM ATTR NAME EXPR)
    COL   := (col NAME) | (col REL NAME)
    COLSPEC := COL | (REL NAME) | NAME
    COND  := (= OPND OPND) | (< OPND OPND) | (> OPND OPND)
           | (is-null COL) | (not-null COL) | (in COL TERM) | (not-in COL TERM)
           | (and COND COND ...) | (or COND COND ...) | (not COND)
    OPND  := COL | LIT
    EXPR  := COL | LIT | (hash COL ...)
    LIT   := (int N) | (real X) | (text "s") | (null) | N | X | "s"

    stmt  := (insert REL (NAME ...) (LIT ...))
           | (delete REL COND)
           | (update REL ((NAME EXPR) ...) COND)

Errors report the byte offset of the offending token.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

from .algebra import (
    And,
    Bottom,
    Cmp,
    ColRef,
    EmptyRel,
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
    Rename,
    Select,
    Union,
)
from .core import ValueKindError, VecrelError


class SexprError(VecrelError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


@dataclass(frozen=True)
class Sym:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class Str:
    text: str
    offset: int = 0


@dataclass(frozen=True)
class Num:
    value: object
    offset: int = 0


class SList(list):
    offset = 0


_DELIMS = set("()\";") | set(" \t\r\n")
_INT = re.compile(r"^[+-]?\d+$")
_REAL = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


def read(text: str):
    """Parse exactly one s-expression."""
    data = text.encode("utf-8")
    items, pos = _read_many(data, 0, top=True)
    if len(items) != 1:
        raise SexprError(f"expected one expression, found {len(items)}", 0 if not items else items[1].offset)
    return items[0]


def _skip(data, pos):
    while pos < len(data):
        c = data[pos : pos + 1]
        if c in (b" ", b"\t", b"\r", b"\n"):
            pos += 1
        elif c == b";":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    return pos


def _read_many(data, pos, top=False):
    items = []
    while True:
        pos = _skip(data, pos)
        if pos >= len(data):
            if top:
                return items, pos
            raise SexprError("unclosed '('", pos)
        c = data[pos : pos + 1]
        if c == b")":
            if top:
                raise SexprError("unexpected ')'", pos)
            return items, pos + 1
        item, pos = _read_one(data, pos)
        items.append(item)


def _read_one(data, pos):
    c = data[pos : pos + 1]
    if c == b"(":
        inner, end = _read_many(data, pos + 1)
        lst = SList(inner)
        lst.offset = pos
        return lst, end
    if c == b'"':
        out = bytearray()
        i = pos + 1
        while True:
            if i >= len(data):
                raise SexprError("unterminated string", pos)
            ch = data[i : i + 1]
            if ch == b'"':
                return Str(out.decode("utf-8"), pos), i + 1
            if ch == b"\\":
                esc = data[i + 1 : i + 2].decode("utf-8", "replace")
                if esc not in _ESCAPES:
                    raise SexprError(f"bad escape \\{esc}", i)
                out += _ESCAPES[esc].encode()
                i += 2
                continue
            out += ch
            i += 1
    start = pos
    while pos < len(data) and chr(data[pos]) not in _DELIMS:
        pos += 1
    token = data[start:pos].decode("utf-8")
    if _INT.match(token):
        return Num(int(token), start), pos
    if _REAL.match(token):
        return Num(float(token), start), pos
    return Sym(token, start), pos


# --------------------------------------------------------------------------
# s-expression -> AST


def _offset(x):
    return getattr(x, "offset", 0)


def _head(x):
    if isinstance(x, SList) and x and isinstance(x[0], Sym):
        return x[0].name
    return None


def _expect(x, n, what):
    if not isinstance(x, SList) or len(x) != n:
        raise SexprError(f"malformed {what}: expected {n - 1} argument(s)", _offset(x))


def _name(x, what="name"):
    if isinstance(x, Sym):
        return x.name
    if isinstance(x, Str):
        return x.text
    raise SexprError(f"expected a {what}", _offset(x))


def parse_literal(x):
    try:
        if isinstance(x, Num):
            return Lit(x.value)
        if isinstance(x, Str):
            return Lit(x.text)
        head = _head(x)
        if head == "null":
            _expect(x, 1, "null")
            return Lit(None)
        if head in ("int", "real", "text"):
            _expect(x, 2, head)
            arg = x[1]
            if head == "int" and isinstance(arg, Num) and isinstance(arg.value, int):
                return Lit(arg.value)
            if head == "real" and isinstance(arg, Num):
                return Lit(float(arg.value))
            if head == "real" and isinstance(arg, Str):
                return Lit(float.fromhex(arg.text) if "p" in arg.text else float(arg.text))
            if head == "text" and isinstance(arg, (Str, Sym)):
                return Lit(_name(arg))
            raise SexprError(f"bad {head} literal", _offset(arg))
    except (ValueKindError, ValueError) as exc:
        raise SexprError(str(exc), _offset(x)) from None
    raise SexprError("expected a literal", _offset(x))


def parse_col(x) -> ColRef:
    if _head(x) != "col" or len(x) not in (2, 3):
        raise SexprError("expected (col NAME) or (col REL NAME)", _offset(x))
    if len(x) == 2:
        return ColRef(_name(x[1]))
    return ColRef(_name(x[2]), _name(x[1], "relation name"))


def _colspec(x) -> ColRef:
    if _head(x) == "col":
        return parse_col(x)
    if isinstance(x, SList) and len(x) == 2:
        return ColRef(_name(x[1]), _name(x[0], "relation name"))
    if isinstance(x, SList) and len(x) == 1:
        return ColRef(_name(x[0]))
    return ColRef(_name(x, "column"))


def _operand(x):
    return parse_col(x) if _head(x) == "col" else parse_literal(x)


def parse_expr(x):
    head = _head(x)
    if head == "col":
        return parse_col(x)
    if head == "hash":
        if len(x) < 2:
            raise SexprError("hash needs at least one column", _offset(x))
        return HashOf(tuple(parse_col(c) for c in x[1:]))
    return parse_literal(x)


def parse_condition(x):
    head = _head(x)
    if head in ("=", "<", ">"):
        _expect(x, 3, head)
        return Cmp(head, _operand(x[1]), _operand(x[2]))
    if head in ("is-null", "not-null"):
        _expect(x, 2, head)
        return (IsNull if head == "is-null" else IsNotNull)(parse_col(x[1]))
    if head in ("in", "not-in"):
        _expect(x, 3, head)
        return (InSet if head == "in" else NotInSet)(parse_col(x[1]), parse_term(x[2]))
    if head in ("and", "or"):
        if len(x) < 3:
            raise SexprError(f"{head} needs at least two conditions", _offset(x))
        parts = [parse_condition(c) for c in x[1:]]
        node = And if head == "and" else Or
        out = parts[0]
        for p in parts[1:]:
            out = node(out, p)
        return out
    if head == "not":
        _expect(x, 2, "not")
        return Not(parse_condition(x[1]))
    raise SexprError("expected a condition", _offset(x))


def parse_term(x):
    head = _head(x)
    if head == "rel":
        _expect(x, 2, "rel")
        return Rel(_name(x[1], "relation name"))
    if head in ("empty", "bottom"):
        _expect(x, 1, head)
        return EmptyRel() if head == "empty" else Bottom()
    if head == "rename":
        _expect(x, 4, "rename")
        return Rename(parse_term(x[1]), parse_col(x[2]), _name(x[3]))
    if head == "project":
        _expect(x, 3, "project")
        if not isinstance(x[2], SList):
            raise SexprError("project needs a column list", _offset(x[2]))
        return Project(parse_term(x[1]), tuple(_colspec(c) for c in x[2]))
    if head == "select":
        _expect(x, 3, "select")
        return Select(parse_term(x[1]), parse_condition(x[2]))
    if head in ("product", "union", "minus"):
        _expect(x, 3, head)
        node = {"product": Product, "union": Union, "minus": Minus}[head]
        return node(parse_term(x[1]), parse_term(x[2]))
    if head == "join":
        _expect(x, 4, "join")
        if not isinstance(x[3], SList):
            raise SexprError("join needs a list of column pairs", _offset(x[3]))
        pairs = []
        for p in x[3]:
            _expect(p, 2, "join pair")
            pairs.append((parse_col(p[0]), parse_col(p[1])))
        return NaturalJoin(parse_term(x[1]), parse_term(x[2]), tuple(pairs))
    if head == "extend":
        _expect(x, 5, "extend")
        return Extend(parse_term(x[1]), _name(x[2], "attribute"), _name(x[3]), parse_expr(x[4]))
    raise SexprError("expected a term", _offset(x))


def parse_term_text(text: str):
    return parse_term(read(text))


def parse_condition_text(text: str):
    return parse_condition(read(text))


# --------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Insert:
    relation: str
    columns: tuple
    values: tuple


@dataclass(frozen=True)
class Delete:
    relation: str
    cond: object


@dataclass(frozen=True)
class Update:
    relation: str
    assignments: tuple
    cond: object


def parse_statement(text: str):
    x = read(text)
    head = _head(x)
    if head == "insert":
        _expect(x, 4, "insert")
        if not isinstance(x[2], SList) or not isinstance(x[3], SList):
            raise SexprError("insert needs a column list and a value list", _offset(x))
        cols = tuple(_name(c, "column") for c in x[2])
        vals = tuple(parse_literal(v).value for v in x[3])
        return Insert(_name(x[1], "relation name"), cols, vals)
    if head == "delete":
        _expect(x, 3, "delete")
        return Delete(_name(x[1], "relation name"), parse_condition(x[2]))
    if head == "update":
        _expect(x, 4, "update")
        if not isinstance(x[2], SList):
            raise SexprError("update needs an assignment list", _offset(x[2]))
        assigns = []
        for a in x[2]:
            _expect(a, 2, "assignment")
            assigns.append((_name(a[0], "column"), parse_expr(a[1])))
        return Update(_name(x[1], "relation name"), tuple(assigns), parse_condition(x[3]))
    raise SexprError("expected insert, delete or update", _offset(x))


# --------------------------------------------------------------------------
# AST -> text

_BARE = re.compile(r"^[A-Za-z_*][A-Za-z0-9_\-*.'#]*$")


def _q(s: str) -> str:
    if _BARE.match(s) and not _INT.match(s) and not _REAL.match(s):
        return s
    body = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{body}"'


def format_literal(lit: Lit) -> str:
    v = lit.value
    if v is None:
        return "(null)"
    if isinstance(v, int):
        return f"(int {v})"
    if isinstance(v, float):
        return f"(real {v!r})"
    return f"(text {_string(v)})"


def _string(s):
    body = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{body}"'


def format_col(c: ColRef) -> str:
    return f"(col {_q(c.name)})" if c.rel is None else f"(col {_q(c.rel)} {_q(c.name)})"


def format_expr(e) -> str:
    if isinstance(e, ColRef):
        return format_col(e)
    if isinstance(e, HashOf):
        return "(hash " + " ".join(format_col(c) for c in e.cols) + ")"
    return format_literal(e)


def _doc(node):
    """Nested lists of strings mirroring the s-expression structure."""
    if isinstance(node, ColRef):
        return format_col(node)
    if isinstance(node, Lit):
        return format_literal(node)
    if isinstance(node, HashOf):
        return format_expr(node)
    if isinstance(node, Rel):
        return f"(rel {_q(node.name)})"
    if isinstance(node, EmptyRel):
        return "(empty)"
    if isinstance(node, Bottom):
        return "(bottom)"
    if isinstance(node, Rename):
        return ["rename", _doc(node.term), format_col(node.col), _q(node.new)]
    if isinstance(node, Project):
        specs = " ".join(f"({_q(c.rel)} {_q(c.name)})" if c.rel is not None else _q(c.name) for c in node.cols)
        return ["project", _doc(node.term), f"({specs})"]
    if isinstance(node, Select):
        return ["select", _doc(node.term), _doc(node.cond)]
    if isinstance(node, (Product, Union, Minus)):
        head = {Product: "product", Union: "union", Minus: "minus"}[type(node)]
        return [head, _doc(node.left), _doc(node.right)]
    if isinstance(node, NaturalJoin):
        pairs = " ".join(f"({format_col(a)} {format_col(b)})" for a, b in node.pairs)
        return ["join", _doc(node.left), _doc(node.right), f"({pairs})"]
    if isinstance(node, Extend):
        return ["extend", _doc(node.term), _q(node.attribute), _q(node.name), format_expr(node.expr)]
    if isinstance(node, Cmp):
        return [node.op, _doc(node.left), _doc(node.right)]
    if isinstance(node, (IsNull, IsNotNull)):
        return ["is-null" if isinstance(node, IsNull) else "not-null", format_col(node.col)]
    if isinstance(node, (InSet, NotInSet)):
        return ["in" if isinstance(node, InSet) else "not-in", format_col(node.col), _doc(node.term)]
    if isinstance(node, (And, Or)):
        return ["and" if isinstance(node, And) else "or", _doc(node.left), _doc(node.right)]
    if isinstance(node, Not):
        return ["not", _doc(node.cond)]
    raise TypeError(f"cannot format {node!r}")


def _flat(doc) -> str:
    if isinstance(doc, str):
        return doc
    return "(" + " ".join(_flat(d) for d in doc) + ")"


def _pretty(doc, indent, width, out):
    flat = _flat(doc)
    if isinstance(doc, str) or indent + len(flat) <= width:
        out.append(" " * indent + flat)
        return
    head, *args = doc
    out.append(" " * indent + "(" + head)
    for a in args:
        _pretty(a, indent + 2, width, out)
    out[-1] += ")"


def format_term(node, width: Optional[int] = None) -> str:
    """Render a term or condition; with ``width`` it is indented to fit."""
    doc = _doc(node)
    if width is None:
        return _flat(doc)
    lines = []
    _pretty(doc, 0, width, lines)
    return "\n".join(lines)


def format_real(v: float) -> str:
    return repr(v) if math.isfinite(v) else str(v)
