"""Read/write evaluator for a small JSONPath subset.

Supported segments::

    $                      root
    .name  ['any key']     child
    [3]  [-1]              array index
    .*  [*]                wildcard (read only)
    [?(@.field == 'lit')]  single equality filter over array elements / object values

Filter literals are single-quoted strings or numbers. Writes are persistent:
:func:`set_value` returns a new document and never mutates its input.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass
from typing import Any, Union

from .exceptions import PathSyntaxError, SetOnWildcard, TypeConflict

__all__ = [
    "Root", "Child", "Index", "Wildcard", "Filter", "PathExpr",
    "parse_path", "render_path", "get", "set_value", "leaf_paths",
]


@dataclass(frozen=True)
class Root:
    pass


@dataclass(frozen=True)
class Child:
    name: str


@dataclass(frozen=True)
class Index:
    index: int


@dataclass(frozen=True)
class Wildcard:
    pass


@dataclass(frozen=True)
class Filter:
    field: str
    literal: Union[str, int, float]
    comparator: str = "=="


Segment = Union[Root, Child, Index, Wildcard, Filter]


@dataclass(frozen=True)
class PathExpr:
    segments: tuple

    def __str__(self) -> str:
        return render_path(self)

    @property
    def has_wildcard(self) -> bool:
        return any(isinstance(s, Wildcard) for s in self.segments)


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_INT = re.compile(r"-?[0-9]+")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, expected: str):
        offset = len(self.text[: self.pos].encode("utf-8"))
        raise PathSyntaxError(self.text, offset, expected)

    def peek(self, n: int = 1) -> str:
        return self.text[self.pos : self.pos + n]

    def expect(self, token: str):
        if not self.text.startswith(token, self.pos):
            self.fail(repr(token))
        self.pos += len(token)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def match(self, pattern: re.Pattern, expected: str) -> str:
        m = pattern.match(self.text, self.pos)
        if m is None:
            self.fail(expected)
        self.pos = m.end()
        return m.group(0)

    def quoted(self) -> str:
        self.expect("'")
        out = []
        while True:
            if self.pos >= len(self.text):
                self.fail("closing quote")
            ch = self.text[self.pos]
            if ch == "\\":
                nxt = self.text[self.pos + 1 : self.pos + 2]
                if nxt not in ("'", "\\"):
                    self.pos += 1
                    self.fail("escaped quote or backslash")
                out.append(nxt)
                self.pos += 2
            elif ch == "'":
                self.pos += 1
                return "".join(out)
            else:
                out.append(ch)
                self.pos += 1

    def literal(self):
        if self.peek() == "'":
            return self.quoted()
        if self.peek() == '"':
            self.fail("single-quoted string or number")
        text = self.match(_NUMBER, "single-quoted string or number")
        if any(c in text for c in ".eE"):
            return float(text)
        return int(text)

    def bracket(self) -> Segment:
        self.expect("[")
        ch = self.peek()
        if ch == "*":
            self.pos += 1
            seg: Segment = Wildcard()
        elif ch == "'":
            seg = Child(self.quoted())
        elif ch == "?":
            self.expect("?(")
            self.skip_ws()
            self.expect("@.")
            name = self.match(_IDENT, "field name")
            self.skip_ws()
            if self.peek(2) != "==":
                self.fail("'==' (only equality filters are supported)")
            self.pos += 2
            self.skip_ws()
            lit = self.literal()
            self.skip_ws()
            self.expect(")")
            seg = Filter(name, lit)
        elif ch == "-" or ch.isdigit():
            seg = Index(int(self.match(_INT, "integer index")))
        else:
            self.fail("index, '*', quoted name or filter")
        self.expect("]")
        return seg

    def parse(self) -> PathExpr:
        if not self.text:
            self.fail("'$'")
        self.expect("$")
        segments: list[Segment] = [Root()]
        while self.pos < len(self.text):
            ch = self.peek()
            if ch == ".":
                self.pos += 1
                if self.peek() == ".":
                    self.fail("child name (recursive descent is not supported)")
                if self.peek() == "*":
                    self.pos += 1
                    segments.append(Wildcard())
                else:
                    segments.append(Child(self.match(_IDENT, "child name")))
            elif ch == "[":
                segments.append(self.bracket())
            else:
                self.fail("'.' or '['")
        return PathExpr(tuple(segments))


def parse_path(text: str | PathExpr) -> PathExpr:
    if isinstance(text, PathExpr):
        return text
    return _Parser(text).parse()


def _quote(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _render_literal(lit) -> str:
    if isinstance(lit, str):
        return _quote(lit)
    return repr(lit)


def render_path(path: PathExpr | str) -> str:
    path = parse_path(path)
    parts = []
    for seg in path.segments:
        if isinstance(seg, Root):
            parts.append("$")
        elif isinstance(seg, Child):
            if _IDENT.fullmatch(seg.name):
                parts.append("." + seg.name)
            else:
                parts.append("[" + _quote(seg.name) + "]")
        elif isinstance(seg, Index):
            parts.append(f"[{seg.index}]")
        elif isinstance(seg, Wildcard):
            parts.append("[*]")
        elif isinstance(seg, Filter):
            parts.append(f"[?(@.{seg.field} == {_render_literal(seg.literal)})]")
    return "".join(parts)


def _equal(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    return type(a) is type(b) and a == b


def _filter_hit(elem, seg: Filter) -> bool:
    return isinstance(elem, dict) and seg.field in elem and _equal(elem[seg.field], seg.literal)


def get(doc: Any, path: PathExpr | str) -> list:
    """All values matched by ``path``, in document order."""
    path = parse_path(path)
    nodes = [doc]
    for seg in path.segments[1:]:
        nxt = []
        for node in nodes:
            if isinstance(seg, Child):
                if isinstance(node, dict) and seg.name in node:
                    nxt.append(node[seg.name])
            elif isinstance(seg, Index):
                if isinstance(node, list) and -len(node) <= seg.index < len(node):
                    nxt.append(node[seg.index])
            elif isinstance(seg, Wildcard):
                if isinstance(node, dict):
                    nxt.extend(node.values())
                elif isinstance(node, list):
                    nxt.extend(node)
            elif isinstance(seg, Filter):
                if isinstance(node, dict):
                    nxt.extend(v for v in node.values() if _filter_hit(v, seg))
                elif isinstance(node, list):
                    nxt.extend(v for v in node if _filter_hit(v, seg))
        nodes = nxt
    return nodes


_ABSENT = object()


def _set(node, segs, value, depth):
    if not segs:
        return copy.deepcopy(value)
    seg, rest = segs[0], segs[1:]
    if isinstance(seg, Child):
        if node is _ABSENT or node is None:
            node = {}
        if not isinstance(node, dict):
            raise TypeConflict(f"segment {depth}: cannot take child {seg.name!r} of {type(node).__name__}")
        new = dict(node)
        new[seg.name] = _set(node.get(seg.name, _ABSENT), rest, value, depth + 1)
        return new
    if isinstance(seg, Index):
        if node is _ABSENT or node is None:
            node = []
        if not isinstance(node, list):
            raise TypeConflict(f"segment {depth}: cannot index into {type(node).__name__}")
        new = list(node)
        i = seg.index
        if i < 0:
            i += len(new)
            if i < 0:
                raise TypeConflict(f"segment {depth}: index {seg.index} out of range")
        if i >= len(new):
            new.extend([None] * (i + 1 - len(new)))
            new[i] = _set(_ABSENT, rest, value, depth + 1)
        else:
            new[i] = _set(new[i], rest, value, depth + 1)
        return new
    if isinstance(seg, Filter):
        if not rest:
            raise TypeConflict("a filter cannot be the final segment of a write path")
        if node is _ABSENT or node is None:
            node = []
        if isinstance(node, list):
            new = list(node)
            hits = [i for i, v in enumerate(new) if _filter_hit(v, seg)]
            if not hits:
                new.append({seg.field: seg.literal})
                hits = [len(new) - 1]
            for i in hits:
                new[i] = _set(new[i], rest, value, depth + 1)
            return new
        if isinstance(node, dict):
            hits = [k for k, v in node.items() if _filter_hit(v, seg)]
            if not hits:
                raise TypeConflict(f"segment {depth}: no object member matches the filter")
            new = dict(node)
            for k in hits:
                new[k] = _set(new[k], rest, value, depth + 1)
            return new
        raise TypeConflict(f"segment {depth}: cannot filter a {type(node).__name__}")
    raise TypeError(f"unexpected segment {seg!r}")


def set_value(doc: Any, path: PathExpr | str, value: Any) -> Any:
    """Return a copy of ``doc`` with ``value`` written at ``path``.

    Missing objects/arrays along the way are created. A filter over an array
    with no matching element appends ``{field: literal}`` and writes into it.
    """
    path = parse_path(path)
    if path.has_wildcard:
        raise SetOnWildcard(f"cannot write through a wildcard: {render_path(path)}")
    segs = path.segments[1:]
    if not segs:
        return copy.deepcopy(value)
    return _set(doc, segs, value, 1)


def leaf_paths(doc: Any, prefix: PathExpr | None = None):
    """Yield ``(PathExpr, value)`` for every scalar leaf, in document order.

    Empty containers are not leaves.
    """
    base = prefix.segments if prefix is not None else (Root(),)
    stack = [(base, doc)]
    while stack:
        segs, node = stack.pop()
        if isinstance(node, dict):
            stack.extend(reversed([(segs + (Child(k),), v) for k, v in node.items()]))
        elif isinstance(node, list):
            stack.extend(reversed([(segs + (Index(i),), v) for i, v in enumerate(node)]))
        else:
            yield PathExpr(segs), node
