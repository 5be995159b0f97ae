"""RFC 4180 CSV with an unquoted ``\\N`` standing for Null.

The stdlib ``csv`` reader drops the information whether a field was quoted,
which is exactly what separates Null (``\\N``) from the text ``"\\N"``; so
this module carries its own small reader.
"""

from __future__ import annotations

from typing import Iterator, List, NamedTuple

from .core import VecrelError

NULL_TOKEN = "\\N"


class CsvError(VecrelError):
    pass


class Field(NamedTuple):
    text: str
    quoted: bool

    @property
    def is_null(self) -> bool:
        return not self.quoted and self.text == NULL_TOKEN


def read_records(text: str) -> Iterator[tuple]:
    """Yield ``(line_number, [Field, ...])`` per record; blank lines are skipped."""
    i, n, line = 0, len(text), 1
    while i < n:
        start_line = line
        fields: List[Field] = []
        while True:
            if i < n and text[i] == '"':
                i += 1
                buf = []
                while True:
                    if i >= n:
                        raise CsvError(f"line {start_line}: unterminated quoted field")
                    c = text[i]
                    if c == '"':
                        if i + 1 < n and text[i + 1] == '"':
                            buf.append('"')
                            i += 2
                            continue
                        i += 1
                        break
                    if c == "\n":
                        line += 1
                    buf.append(c)
                    i += 1
                fields.append(Field("".join(buf), True))
                if i < n and text[i] not in ",\r\n":
                    raise CsvError(f"line {line}: text after closing quote")
            else:
                j = i
                while j < n and text[j] not in ",\r\n":
                    if text[j] == '"':
                        raise CsvError(f"line {line}: quote inside unquoted field")
                    j += 1
                fields.append(Field(text[i:j], False))
                i = j
            if i < n and text[i] == ",":
                i += 1
                continue
            break
        if i < n and text[i] == "\r":
            i += 1
        if i < n and text[i] == "\n":
            i += 1
        line += 1
        if fields == [Field("", False)]:
            continue
        yield start_line, fields


def _needs_quotes(s: str) -> bool:
    return s == NULL_TOKEN or s == "" or any(c in s for c in ',"\r\n') or s != s.strip()


def format_field(value) -> str:
    if value is None:
        return NULL_TOKEN
    if isinstance(value, float):
        return repr(value)
    s = str(value)
    if isinstance(value, str) and _needs_quotes(s):
        return '"' + s.replace('"', '""') + '"'
    return s


def format_record(values) -> str:
    return ",".join(format_field(v) for v in values) + "\r\n"
