"""JSONPath subset used by DADL documents.

Supported: root ``$``, dot children (``$.a.b``), bracket children
(``$['a']`` / ``$["a"]``), array indexes (``$.items[0]``, negatives allowed),
and wildcards (``$.a.*`` / ``$[*]``).  Recursive descent, slices, filters and
unions are not part of the v0.1 profile and raise :class:`InvalidPath`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .errors import InvalidPath

_DOT_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


@dataclass(frozen=True)
class _Step:
    kind: str  # "child" | "index" | "wild"
    key: str | int | None = None


class JsonPath:
    """A compiled path expression."""

    def __init__(self, text: str, steps: list[_Step]):
        self.text = text
        self._steps = steps

    def __repr__(self) -> str:
        return f"JsonPath({self.text!r})"

    def find(self, doc: Any) -> list[Any]:
        """All values the path matches in ``doc`` (possibly empty)."""
        current = [doc]
        for step in self._steps:
            next_values: list[Any] = []
            for value in current:
                if step.kind == "child":
                    if isinstance(value, dict) and step.key in value:
                        next_values.append(value[step.key])
                elif step.kind == "index":
                    if isinstance(value, list):
                        idx = step.key
                        assert isinstance(idx, int)
                        if -len(value) <= idx < len(value):
                            next_values.append(value[idx])
                elif step.kind == "wild":
                    if isinstance(value, dict):
                        next_values.extend(value.values())
                    elif isinstance(value, list):
                        next_values.extend(value)
            current = next_values
        return current


def parse_path(text: str) -> JsonPath:
    """Compile a path expression, rejecting anything outside the subset."""
    if not isinstance(text, str) or not text.strip():
        raise InvalidPath("empty JSONPath expression")
    s = text.strip()
    if not s.startswith("$"):
        raise InvalidPath(f"JSONPath must start with '$': {text!r}")
    i = 1
    steps: list[_Step] = []
    while i < len(s):
        if s.startswith("..", i):
            raise InvalidPath(f"recursive descent not supported: {text!r}")
        if s[i] == ".":
            i += 1
            if i < len(s) and s[i] == "*":
                steps.append(_Step("wild"))
                i += 1
                continue
            m = _DOT_NAME_RE.match(s, i)
            if not m:
                raise InvalidPath(f"expected name after '.' at offset {i}: {text!r}")
            steps.append(_Step("child", m.group(0)))
            i = m.end()
        elif s[i] == "[":
            end = s.find("]", i)
            if end < 0:
                raise InvalidPath(f"unterminated '[' at offset {i}: {text!r}")
            inner = s[i + 1 : end].strip()
            if inner == "*":
                steps.append(_Step("wild"))
            elif inner and (inner[0] in "'\""):
                if len(inner) < 2 or inner[-1] != inner[0]:
                    raise InvalidPath(f"bad quoted key at offset {i}: {text!r}")
                steps.append(_Step("child", inner[1:-1]))
            else:
                try:
                    steps.append(_Step("index", int(inner)))
                except ValueError:
                    raise InvalidPath(f"bad bracket content {inner!r}: {text!r}") from None
            i = end + 1
        else:
            raise InvalidPath(f"unexpected character {s[i]!r} at offset {i}: {text!r}")
    return JsonPath(text, steps)


def evaluate(doc: Any, text: str) -> tuple[Any, bool]:
    """Evaluate a path against a document.

    Returns ``(value, matched)``: a single match yields that value, multiple
    matches yield a list, zero matches yield ``(None, False)``.
    """
    matches = parse_path(text).find(doc)
    if not matches:
        return None, False
    if len(matches) == 1:
        return matches[0], True
    return matches, True
