"""Bounded execution of composite scripts.

A script gets three budgets: wall-clock time, an api call cap, and an output
byte ceiling.  The cap is charged when a call is *submitted*, not when it
completes, so a script cannot overshoot by firing calls concurrently.  Limit
violations raise SandboxError subclasses that pass straight through script
try/catch; a script cannot absorb its own termination.
"""

from __future__ import annotations

import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import (
    CallCapExceeded,
    OutputTooLarge,
    ScriptError,
    StaticCheckFailed,
)
from .es.interp import (
    Interp,
    JsError,
    JsFunction,
    JsPromise,
    error_message,
    type_error,
    undefined,
)
from .es.parser import parse_script
from .util import json_bytes

DEFAULT_TIMEOUT = 30.0
MAX_TIMEOUT = 120.0
DEFAULT_CALL_CAP = 50
DEFAULT_OUTPUT_BYTES = 1 << 20

# Names with no legitimate use in a tool-composition script.  The scan runs on
# raw source before parsing, so occurrences in comments and strings count too;
# better to refuse odd-but-harmless scripts than admit an obfuscated escape.
FORBIDDEN_TOKENS = (
    "fetch", "require", "import", "eval", "Function",
    "XMLHttpRequest", "WebSocket", "process", "globalThis",
)
_FORBIDDEN_RE = re.compile(r"\b(" + "|".join(FORBIDDEN_TOKENS) + r")\b")


@dataclass(frozen=True)
class SandboxLimits:
    timeout: float = DEFAULT_TIMEOUT
    max_api_calls: int = DEFAULT_CALL_CAP
    max_output_bytes: int = DEFAULT_OUTPUT_BYTES

    def effective_timeout(self) -> float:
        return max(0.0, min(float(self.timeout), MAX_TIMEOUT))


@dataclass
class ScriptResult:
    value: Any
    logs: list
    api_calls: int


def static_check(source: str) -> None:
    found = sorted({m.group(1) for m in _FORBIDDEN_RE.finditer(source)})
    if found:
        raise StaticCheckFailed(found)


class _CallBudget:
    """Charged at submission under a lock, so concurrent Promise.all fan-out
    cannot race past the cap."""

    def __init__(self, cap: int):
        self.cap = cap
        self.used = 0
        self._lock = threading.Lock()

    def take(self) -> None:
        with self._lock:
            if self.used >= self.cap:
                raise CallCapExceeded(
                    f"script reached its limit of {self.cap} api calls")
            self.used += 1


def clean_result(value):
    """Apply JSON serialization semantics to a script's return value:
    undefined object entries vanish, undefined array slots become null."""
    if value is undefined:
        return None
    if isinstance(value, JsPromise):
        raise ScriptError("script returned a pending call; await it first")
    if isinstance(value, JsFunction) or callable(value):
        return None
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if v is undefined or isinstance(v, JsFunction):
                continue
            if isinstance(v, JsPromise):
                raise ScriptError("script returned a pending call; await it first")
            if callable(v):
                continue
            out[str(k)] = clean_result(v)
        return out
    if isinstance(value, list):
        items = []
        for v in value:
            if isinstance(v, JsPromise):
                raise ScriptError("script returned a pending call; await it first")
            if v is undefined or isinstance(v, JsFunction) or callable(v):
                items.append(None)
            else:
                items.append(clean_result(v))
        return items
    return value


def sanitize_args(value, *, _depth: int = 0):
    """Convert script argument values into plain tool parameters.

    undefined object values are dropped (what JSON serialization would do);
    undefined array slots become null; functions cannot cross the boundary.
    """
    if _depth > 32:
        raise type_error("tool arguments are nested too deeply")
    if value is undefined:
        return None
    if isinstance(value, JsFunction) or callable(value):
        raise type_error("cannot pass a function to a tool")
    if isinstance(value, JsPromise):
        raise type_error("await a call before passing its result to a tool")
    if isinstance(value, dict):
        return {
            str(k): sanitize_args(v, _depth=_depth + 1)
            for k, v in value.items() if v is not undefined
        }
    if isinstance(value, list):
        return [sanitize_args(v, _depth=_depth + 1) for v in value]
    return value


class Sandbox:
    """Runs one script at a time against a tree of tool callables.

    ``api`` is a dict whose leaves are Python callables taking a single params
    dict.  Nested dicts are allowed (backend.tool addressing); the sandbox
    wraps every leaf so calls are budgeted and executed off-thread, which is
    what makes Promise.all fan-out actually concurrent.
    """

    def __init__(self, limits: Optional[SandboxLimits] = None, *,
                 monotonic: Callable[[], float] = time.monotonic,
                 max_workers: int = 8):
        self.limits = limits or SandboxLimits()
        self.monotonic = monotonic
        self.max_workers = max_workers

    def run(self, source: str, *, api: Optional[dict] = None,
            params: Optional[dict] = None,
            extra_globals: Optional[dict] = None) -> ScriptResult:
        static_check(source)
        program = parse_script(source)

        budget = _CallBudget(self.limits.max_api_calls)
        deadline = self.monotonic() + self.limits.effective_timeout()
        logs: list = []
        executor = ThreadPoolExecutor(max_workers=self.max_workers)
        try:
            bound_api = self._wrap_tree(api or {}, budget, executor)
            globals_: dict[str, Any] = {
                "api": bound_api,
                "params": dict(params or {}),
            }
            if extra_globals:
                globals_.update(extra_globals)
            interp = Interp(globals_, deadline=deadline,
                            monotonic=self.monotonic, logs=logs)
            try:
                value = interp.run(program)
            except JsError as err:
                raise ScriptError(f"uncaught: {error_message(err.value)}")
            except RecursionError:
                raise ScriptError("script is nested too deeply")
        finally:
            executor.shutdown(wait=False, cancel_futures=True)

        try:
            value = clean_result(value)
            size = json_bytes(value)
        except RecursionError:
            raise ScriptError("script result is nested too deeply")
        if size > self.limits.max_output_bytes:
            raise OutputTooLarge(
                f"script result is {size} bytes; the limit is "
                f"{self.limits.max_output_bytes}")
        return ScriptResult(value=value, logs=logs, api_calls=budget.used)

    def _wrap_tree(self, api: dict, budget: _CallBudget,
                   executor: ThreadPoolExecutor) -> dict:
        out: dict[str, Any] = {}
        for name, node in api.items():
            if isinstance(node, dict):
                out[name] = self._wrap_tree(node, budget, executor)
            else:
                out[name] = self._wrap_call(node, budget, executor)
        return out

    def _wrap_call(self, fn: Callable[[dict], Any], budget: _CallBudget,
                   executor: ThreadPoolExecutor):
        def call(arg=None, *_ignored):
            budget.take()
            if arg is None or arg is undefined:
                cleaned: Any = {}
            else:
                cleaned = sanitize_args(arg)
            if not isinstance(cleaned, dict):
                raise type_error("tool arguments must be an object")
            future = executor.submit(fn, cleaned)
            return JsPromise.from_future(future)

        return call
