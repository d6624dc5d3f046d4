"""Evaluator for the jq filter subset accepted in DADL transform fields.

The v0.1 profile covers: identity, field and index access, ``.[]`` iteration,
optional access (``?``), pipes, commas, ``map``/``select``/``del``, object and
array construction, ``length``, ``keys``, literals, and comparison operators
inside ``select``.  Anything else that is recognizably jq raises
:class:`JqUnsupportedError` so callers can tell a subset limit from a typo
(:class:`JqSyntaxError`) or an evaluation fault (:class:`JqRuntimeError`).

A filter maps one input value to a stream of outputs, as in jq proper.
"""

from __future__ import annotations

import re
from typing import Any, Iterator

from .errors import JqRuntimeError, JqSyntaxError, JqUnsupportedError

# Functions that exist in jq but are outside the DADL v0.1 subset.  Named so
# the error can say "subset limit" rather than "syntax error".
_KNOWN_JQ_FUNCTIONS = {
    "add", "all", "any", "ascii_downcase", "ascii_upcase", "contains", "empty",
    "endswith", "env", "error", "first", "flatten", "floor", "from_entries",
    "getpath", "group_by", "gsub", "has", "halt", "implode", "in", "input",
    "inputs", "join", "last", "limit", "ltrimstr", "max", "max_by", "min",
    "min_by", "not", "now", "path", "paths", "range", "recurse", "reverse",
    "rtrimstr", "sort", "sort_by", "split", "splits", "sqrt", "startswith",
    "sub", "test", "to_entries", "tonumber", "tostring", "type", "unique",
    "unique_by", "until", "values", "with_entries",
}

_KNOWN_JQ_KEYWORDS = {
    "if", "then", "elif", "else", "end", "reduce", "foreach", "as", "def",
    "import", "include", "label", "try", "catch", "and", "or",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\.\.|==|!=|<=|>=|//|\|=|\+=|-=|\*=|/=|[.\[\]{}()|,:?<>=+\-*/%$@;])
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "/": "/", "n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f"}

_UNSUPPORTED_OPS = {"..", "//", "|=", "+=", "-=", "*=", "/=", "+", "*", "/", "%", "$", "@", ";", "="}


def _unescape(raw: str) -> str:
    out, i = [], 1
    body = raw[:-1]
    while i < len(body):
        c = body[i]
        if c == "\\":
            i += 1
            nxt = body[i]
            if nxt == "u":
                out.append(chr(int(body[i + 1 : i + 5], 16)))
                i += 5
                continue
            out.append(_ESCAPES.get(nxt, nxt))
            i += 1
        else:
            out.append(c)
            i += 1
    return "".join(out)


class _Token:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind: str, value: Any, pos: int):
        self.kind = kind
        self.value = value
        self.pos = pos


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise JqSyntaxError(f"cannot tokenize filter at offset {i}: {text[i:i+12]!r}")
        i = m.end()
        if m.lastgroup == "ws":
            continue
        if m.lastgroup == "num":
            raw = m.group("num")
            tokens.append(_Token("num", float(raw) if "." in raw or "e" in raw or "E" in raw else int(raw), m.start()))
        elif m.lastgroup == "str":
            tokens.append(_Token("str", _unescape(m.group("str")), m.start()))
        elif m.lastgroup == "ident":
            tokens.append(_Token("ident", m.group("ident"), m.start()))
        else:
            tokens.append(_Token("op", m.group("op"), m.start()))
    tokens.append(_Token("eof", None, len(text)))
    return tokens


# --- AST ----------------------------------------------------------------------


class _Node:
    def run(self, value: Any) -> Iterator[Any]:
        raise NotImplementedError


class _Identity(_Node):
    def run(self, value):
        yield value


class _Literal(_Node):
    def __init__(self, value):
        self.value = value

    def run(self, value):
        yield self.value


class _Field(_Node):
    def __init__(self, source: _Node, name: str, optional: bool):
        self.source = source
        self.name = name
        self.optional = optional

    def run(self, value):
        for base in self.source.run(value):
            if base is None:
                yield None
            elif isinstance(base, dict):
                yield base.get(self.name)
            elif self.optional:
                continue
            else:
                raise JqRuntimeError(f"cannot index {_type_name(base)} with {self.name!r}")


class _Index(_Node):
    def __init__(self, source: _Node, index: int, optional: bool):
        self.source = source
        self.index = index
        self.optional = optional

    def run(self, value):
        for base in self.source.run(value):
            if base is None:
                yield None
            elif isinstance(base, list):
                idx = self.index
                yield base[idx] if -len(base) <= idx < len(base) else None
            elif self.optional:
                continue
            else:
                raise JqRuntimeError(f"cannot index {_type_name(base)} with number")


class _Iterate(_Node):
    def __init__(self, source: _Node, optional: bool):
        self.source = source
        self.optional = optional

    def run(self, value):
        for base in self.source.run(value):
            if isinstance(base, list):
                yield from base
            elif isinstance(base, dict):
                yield from base.values()
            elif self.optional:
                continue
            else:
                raise JqRuntimeError(f"cannot iterate over {_type_name(base)}")


class _Pipe(_Node):
    def __init__(self, left: _Node, right: _Node):
        self.left = left
        self.right = right

    def run(self, value):
        for mid in self.left.run(value):
            yield from self.right.run(mid)


class _Comma(_Node):
    def __init__(self, parts: list[_Node]):
        self.parts = parts

    def run(self, value):
        for part in self.parts:
            yield from part.run(value)


class _Compare(_Node):
    def __init__(self, left: _Node, op: str, right: _Node):
        self.left = left
        self.op = op
        self.right = right

    def run(self, value):
        for a in self.left.run(value):
            for b in self.right.run(value):
                yield _compare(a, self.op, b)


class _Map(_Node):
    def __init__(self, inner: _Node):
        self.inner = inner

    def run(self, value):
        if not isinstance(value, list):
            raise JqRuntimeError(f"map requires an array, got {_type_name(value)}")
        yield [out for item in value for out in self.inner.run(item)]


class _Select(_Node):
    def __init__(self, predicate: _Node):
        self.predicate = predicate

    def run(self, value):
        for verdict in self.predicate.run(value):
            if verdict is not None and verdict is not False:
                yield value


class _Del(_Node):
    def __init__(self, paths: list[list[str | int]]):
        self.paths = paths

    def run(self, value):
        result = value
        # Delete deepest-first index paths so positions stay valid.
        for path in sorted(self.paths, key=_del_sort_key, reverse=True):
            result = _delete_path(result, path)
        yield result


class _Length(_Node):
    def run(self, value):
        if value is None:
            yield 0
        elif isinstance(value, bool):
            raise JqRuntimeError("boolean has no length")
        elif isinstance(value, (list, dict, str)):
            yield len(value)
        elif isinstance(value, (int, float)):
            yield abs(value)
        else:
            raise JqRuntimeError(f"{_type_name(value)} has no length")


class _Keys(_Node):
    def run(self, value):
        if isinstance(value, dict):
            yield sorted(value.keys())
        elif isinstance(value, list):
            yield list(range(len(value)))
        else:
            raise JqRuntimeError(f"{_type_name(value)} has no keys")


class _ObjectConstruct(_Node):
    def __init__(self, fields: list[tuple[str, _Node]]):
        self.fields = fields

    def run(self, value):
        yield from self._build(value, 0, {})

    def _build(self, value, i, acc):
        if i == len(self.fields):
            yield dict(acc)
            return
        key, expr = self.fields[i]
        for out in expr.run(value):
            acc[key] = out
            yield from self._build(value, i + 1, acc)


class _ArrayConstruct(_Node):
    def __init__(self, inner: _Node | None):
        self.inner = inner

    def run(self, value):
        if self.inner is None:
            yield []
        else:
            yield list(self.inner.run(value))


def _type_name(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "array"
    return "object"


def _compare(a: Any, op: str, b: Any) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    numeric = isinstance(a, (int, float)) and not isinstance(a, bool) and \
        isinstance(b, (int, float)) and not isinstance(b, bool)
    if not numeric and not (isinstance(a, str) and isinstance(b, str)):
        raise JqRuntimeError(f"cannot order {_type_name(a)} and {_type_name(b)}")
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _del_sort_key(path: list[str | int]):
    return [(1, p) if isinstance(p, int) else (0, 0) for p in path]


def _delete_path(value: Any, path: list[str | int]) -> Any:
    if not path:
        return value
    head, rest = path[0], path[1:]
    if isinstance(head, str):
        if not isinstance(value, dict) or head not in value:
            return value
        copied = dict(value)
        if rest:
            copied[head] = _delete_path(copied[head], rest)
        else:
            del copied[head]
        return copied
    if not isinstance(value, list) or not (-len(value) <= head < len(value)):
        return value
    copied_list = list(value)
    if rest:
        copied_list[head] = _delete_path(copied_list[head], rest)
    else:
        del copied_list[head]
    return copied_list


# --- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token], text: str):
        self.tokens = tokens
        self.text = text
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.next()
        if tok.kind != "op" or tok.value != op:
            raise JqSyntaxError(f"expected {op!r} at offset {tok.pos} in {self.text!r}")

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.value in ops

    # pipe > comma > comparison > postfix/primary
    def parse_pipe(self) -> _Node:
        node = self.parse_comma()
        while self.at_op("|"):
            self.next()
            node = _Pipe(node, self.parse_comma())
        return node

    def parse_comma(self) -> _Node:
        parts = [self.parse_compare()]
        while self.at_op(","):
            self.next()
            parts.append(self.parse_compare())
        return parts[0] if len(parts) == 1 else _Comma(parts)

    def parse_compare(self) -> _Node:
        node = self.parse_unary()
        if self.at_op("==", "!=", "<", "<=", ">", ">="):
            op = self.next().value
            right = self.parse_unary()
            return _Compare(node, op, right)
        return node

    def parse_unary(self) -> _Node:
        if self.at_op("-"):
            tok = self.next()
            nxt = self.peek()
            if nxt.kind == "num":
                self.next()
                return self.parse_suffixes(_Literal(-nxt.value))
            raise JqUnsupportedError(
                f"arithmetic is outside the supported jq subset (offset {tok.pos})")
        return self.parse_postfix()

    def parse_postfix(self) -> _Node:
        node = self.parse_primary()
        return self.parse_suffixes(node)

    def parse_suffixes(self, node: _Node) -> _Node:
        while True:
            if self.at_op("."):
                # `.foo` suffix chained directly after a primary, e.g. `map(.a).b`
                save = self.i
                self.next()
                tok = self.peek()
                if tok.kind == "ident":
                    self.next()
                    node = _Field(node, tok.value, self._eat_optional())
                    continue
                self.i = save
                return node
            if self.at_op("["):
                self.next()
                if self.at_op("]"):
                    self.next()
                    node = _Iterate(node, self._eat_optional())
                    continue
                tok = self.next()
                if tok.kind == "num" and isinstance(tok.value, int):
                    if self.at_op(":"):
                        raise JqUnsupportedError("array slices are outside the supported jq subset")
                    self.expect_op("]")
                    node = _Index(node, tok.value, self._eat_optional())
                    continue
                if tok.kind == "op" and tok.value == "-":
                    num = self.next()
                    if num.kind != "num" or not isinstance(num.value, int):
                        raise JqSyntaxError(f"bad array index at offset {num.pos}")
                    self.expect_op("]")
                    node = _Index(node, -num.value, self._eat_optional())
                    continue
                if tok.kind == "str":
                    self.expect_op("]")
                    node = _Field(node, tok.value, self._eat_optional())
                    continue
                if tok.kind == "op" and tok.value == ":":
                    raise JqUnsupportedError("array slices are outside the supported jq subset")
                raise JqSyntaxError(f"bad bracket content at offset {tok.pos} in {self.text!r}")
            return node

    def _eat_optional(self) -> bool:
        if self.at_op("?"):
            self.next()
            return True
        return False

    def parse_primary(self) -> _Node:
        tok = self.peek()
        if tok.kind == "op":
            if tok.value == ".":
                self.next()
                nxt = self.peek()
                if nxt.kind == "ident":
                    self.next()
                    return _Field(_Identity(), nxt.value, self._eat_optional())
                if nxt.kind == "str":
                    self.next()
                    return _Field(_Identity(), nxt.value, self._eat_optional())
                if nxt.kind == "op" and nxt.value == "[":
                    return _Identity()  # bracket handled as suffix
                return _Identity()
            if tok.value == "(":
                self.next()
                inner = self.parse_pipe()
                self.expect_op(")")
                return inner
            if tok.value == "[":
                self.next()
                if self.at_op("]"):
                    self.next()
                    return _ArrayConstruct(None)
                inner = self.parse_pipe()
                self.expect_op("]")
                return _ArrayConstruct(inner)
            if tok.value == "{":
                return self.parse_object()
            if tok.value in _UNSUPPORTED_OPS:
                raise JqUnsupportedError(
                    f"operator {tok.value!r} is outside the supported jq subset")
            raise JqSyntaxError(f"unexpected {tok.value!r} at offset {tok.pos} in {self.text!r}")
        if tok.kind == "num" or tok.kind == "str":
            self.next()
            return _Literal(tok.value)
        if tok.kind == "ident":
            return self.parse_ident()
        raise JqSyntaxError(f"unexpected end of filter: {self.text!r}")

    def parse_ident(self) -> _Node:
        tok = self.next()
        name = tok.value
        if name == "true":
            return _Literal(True)
        if name == "false":
            return _Literal(False)
        if name == "null":
            return _Literal(None)
        if name == "length":
            return _Length()
        if name == "keys":
            return _Keys()
        if name == "map":
            self.expect_op("(")
            inner = self.parse_pipe()
            self.expect_op(")")
            return _Map(inner)
        if name == "select":
            self.expect_op("(")
            inner = self.parse_pipe()
            self.expect_op(")")
            return _Select(inner)
        if name == "del":
            self.expect_op("(")
            paths = [self.parse_del_path()]
            while self.at_op(","):
                self.next()
                paths.append(self.parse_del_path())
            self.expect_op(")")
            return _Del(paths)
        if name in _KNOWN_JQ_KEYWORDS:
            raise JqUnsupportedError(f"{name!r} is outside the supported jq subset")
        if name in _KNOWN_JQ_FUNCTIONS:
            raise JqUnsupportedError(f"function {name!r} is outside the supported jq subset")
        raise JqUnsupportedError(f"unknown function {name!r} (outside the supported jq subset)")

    def parse_del_path(self) -> list[str | int]:
        """A del() argument: a plain field/index chain like .a.b[0]."""
        self.expect_op(".")
        path: list[str | int] = []
        tok = self.peek()
        if tok.kind == "ident" or tok.kind == "str":
            self.next()
            path.append(tok.value)
        elif self.at_op("["):
            pass
        else:
            raise JqSyntaxError(f"bad del() path at offset {tok.pos} in {self.text!r}")
        while True:
            if self.at_op("."):
                self.next()
                tok = self.next()
                if tok.kind not in ("ident", "str"):
                    raise JqSyntaxError(f"bad del() path at offset {tok.pos}")
                path.append(tok.value)
            elif self.at_op("["):
                self.next()
                tok = self.next()
                sign = 1
                if tok.kind == "op" and tok.value == "-":
                    sign = -1
                    tok = self.next()
                if tok.kind != "num" or not isinstance(tok.value, int):
                    raise JqSyntaxError(f"bad del() index at offset {tok.pos}")
                self.expect_op("]")
                path.append(sign * tok.value)
            else:
                return path

    def parse_object(self) -> _Node:
        self.expect_op("{")
        fields: list[tuple[str, _Node]] = []
        if self.at_op("}"):
            self.next()
            return _ObjectConstruct(fields)
        while True:
            tok = self.next()
            if tok.kind == "ident" or tok.kind == "str":
                key = tok.value
            else:
                raise JqSyntaxError(f"bad object key at offset {tok.pos} in {self.text!r}")
            if self.at_op(":"):
                self.next()
                value = self.parse_compare()
            else:
                value = _Field(_Identity(), key, False)  # shorthand {a} == {a: .a}
            fields.append((key, value))
            if self.at_op(","):
                self.next()
                continue
            self.expect_op("}")
            return _ObjectConstruct(fields)


def compile_filter(text: str) -> _Node:
    """Parse a filter, raising JqSyntaxError/JqUnsupportedError as appropriate."""
    if not isinstance(text, str) or not text.strip():
        raise JqSyntaxError("empty jq filter")
    parser = _Parser(_tokenize(text), text)
    node = parser.parse_pipe()
    tail = parser.peek()
    if tail.kind != "eof":
        if tail.kind == "op" and tail.value in _UNSUPPORTED_OPS:
            raise JqUnsupportedError(f"operator {tail.value!r} is outside the supported jq subset")
        raise JqSyntaxError(f"trailing input at offset {tail.pos} in {text!r}")
    return node


def apply_filter(doc: Any, text: str) -> Any:
    """Run a filter over a document.

    Multiple outputs collect into an array, zero outputs become null, a single
    output is returned as-is.
    """
    outputs = list(compile_filter(text).run(doc))
    if not outputs:
        return None
    if len(outputs) == 1:
        return outputs[0]
    return outputs
