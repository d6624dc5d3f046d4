"""Small shared helpers: durations, canonical JSON, byte/token accounting."""

from __future__ import annotations

import json
import math
import re
from typing import Any

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$")

_UNIT_SECONDS = {"ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0, None: 1.0}


def parse_duration(value: Any, *, field: str = "duration") -> float:
    """Parse a duration into seconds.

    Accepts numbers (seconds) or strings like ``"30s"``, ``"500ms"``, ``"2m"``.
    """
    if isinstance(value, bool):
        raise ValueError(f"{field}: booleans are not durations")
    if isinstance(value, (int, float)):
        if value < 0:
            raise ValueError(f"{field}: negative duration")
        return float(value)
    if isinstance(value, str):
        m = _DURATION_RE.match(value)
        if not m:
            raise ValueError(f"{field}: cannot parse duration {value!r}")
        return float(m.group(1)) * _UNIT_SECONDS[m.group(2)]
    raise ValueError(f"{field}: expected number or duration string, got {type(value).__name__}")


def format_duration(seconds: float) -> str:
    if seconds == int(seconds):
        return f"{int(seconds)}s"
    return f"{seconds}s"


def canonical_json(value: Any) -> str:
    """Deterministic JSON rendering (sorted keys, compact separators).

    Non-JSON values fall back to ``str``; secret wrappers stringify to their
    redacted form, so nothing sensitive can ride through here.
    """
    return json.dumps(value, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, default=str)


def json_bytes(value: Any) -> int:
    """Byte size of a value under canonical JSON serialization."""
    return len(canonical_json(value).encode("utf-8"))


def chars4_tokens(text: str) -> int:
    """Crude token estimate: one token per four bytes of UTF-8, rounded up."""
    n = len(text.encode("utf-8"))
    return math.ceil(n / 4)


_IDENT_RE = re.compile(r"^[a-z][a-z0-9_]*$")


def valid_name(name: str) -> bool:
    """Tool/composite names: lowercase snake_case starting with a letter."""
    return bool(_IDENT_RE.match(name))
