"""One invocable surface over a library of documents.

The runtime owns the wiring: each backend gets an HTTP engine sharing one
credential resolver, every invocation passes through the gatekeeper, and
composites run in the sandbox with tool bindings that re-authorize per call.
A script therefore cannot reach a tool its principal is not allowed to call
directly; the nested check happens before any HTTP, and both the script and
each underlying call leave their own audit records.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from . import jq
from .authz import ExecutionContext, Gatekeeper, Principal, strictest_label
from .credentials import CredentialResolver
from .engine import _SCALAR_CHECKS, HttpEngine
from .errors import (
    MissingRequiredParam,
    SchemaError,
    TypeMismatch,
    UnknownParam,
    UnknownTool,
)
from .model import CompositeDef, DadlDocument, effective_tool
from .sandbox import Sandbox, SandboxLimits
from .util import json_bytes


@dataclass
class InvokeResult:
    """What an invocation produced, for either a primitive or a script."""

    value: Any
    kind: str  # "tool" | "script"
    truncated: bool = False
    warnings: list[str] = field(default_factory=list)
    next_cursor: Optional[str] = None
    pages: int = 0
    requests: int = 0
    status: Optional[int] = None
    bytes_in: int = 0
    bytes_out: int = 0
    logs: list[str] = field(default_factory=list)
    api_calls: int = 0


def composite_effective_access(doc: DadlDocument, comp: CompositeDef):
    """A composite with no declared label is summarized by the strictest
    label among the tools its code references, so a read-only principal can
    still run read-only compositions."""
    if comp.access is not None:
        return comp.access
    referenced = [t for t in comp.referenced_tools() if t in doc.tool_map()]
    return strictest_label([effective_tool(doc, t).access for t in referenced])


def bind_composite_params(name: str, comp: CompositeDef,
                          params: Mapping[str, Any] | None) -> dict[str, Any]:
    """Same contract as tool parameter binding: unknown names refused,
    defaults applied, declared scalar types enforced."""
    given = dict(params or {})
    declared = comp.param_map()
    for pname in given:
        if pname not in declared:
            raise UnknownParam(f"{name} has no parameter {pname!r}")
    bound: dict[str, Any] = {}
    for pname, spec in declared.items():
        if pname in given:
            value = given[pname]
        elif spec.has_default:
            value = spec.default
        elif spec.required:
            raise MissingRequiredParam(f"{name} requires parameter {pname!r}")
        else:
            continue
        if isinstance(spec.type, str):
            check = _SCALAR_CHECKS.get(spec.type, _SCALAR_CHECKS["any"])
            if value is not None and not check(value):
                raise TypeMismatch(
                    f"parameter {pname!r} of {name} expects {spec.type}, "
                    f"got {type(value).__name__}")
        bound[pname] = value
    return bound


class Runtime:
    def __init__(self, documents, resolver: Optional[CredentialResolver] = None, *,
                 gatekeeper: Optional[Gatekeeper] = None,
                 session=None,
                 sleep: Callable[[float], None] = time.sleep,
                 monotonic: Callable[[], float] = time.monotonic,
                 rng=None,
                 sandbox_workers: int = 8):
        if isinstance(documents, DadlDocument):
            documents = [documents]
        self.resolver = resolver if resolver is not None else CredentialResolver()
        self.gatekeeper = gatekeeper if gatekeeper is not None else Gatekeeper()
        self.monotonic = monotonic
        self.sandbox_workers = sandbox_workers
        self.backends: dict[str, tuple[DadlDocument, HttpEngine]] = {}
        for doc in documents:
            name = doc.backend.name
            if name in self.backends:
                raise SchemaError("library", f"duplicate backend name {name!r}")
            engine = HttpEngine(doc, self.resolver, session=session,
                                sleep=sleep, monotonic=monotonic, rng=rng)
            self.backends[name] = (doc, engine)

    # --- lookup ---------------------------------------------------------------

    def backend_names(self) -> list[str]:
        return sorted(self.backends)

    def documents(self) -> list[DadlDocument]:
        return [doc for doc, _ in self.backends.values()]

    def document(self, backend: str) -> DadlDocument:
        return self._backend(backend)[0]

    def _backend(self, backend: str) -> tuple[DadlDocument, HttpEngine]:
        try:
            return self.backends[backend]
        except KeyError:
            known = ", ".join(sorted(self.backends)) or "none loaded"
            raise UnknownTool(f"unknown backend {backend!r} (backends: {known})")

    # --- invocation -----------------------------------------------------------

    def invoke(self, principal: Principal, backend: str, name: str,
               params: Mapping[str, Any] | None = None, *,
               jq_override: Optional[str] = None,
               parent: Optional[ExecutionContext] = None) -> InvokeResult:
        doc, engine = self._backend(backend)
        if name in doc.tool_map():
            return self._invoke_tool(principal, backend, doc, engine, name,
                                     params, jq_override, parent)
        if name in doc.composite_map():
            return self._invoke_composite(principal, backend, doc, engine, name,
                                          params, jq_override, parent)
        raise UnknownTool(f"backend {backend!r} has no tool named {name!r}")

    def _invoke_tool(self, principal, backend, doc, engine, tool_name,
                     params, jq_override, parent=None) -> InvokeResult:
        resolved = effective_tool(doc, tool_name)
        ctx = self.gatekeeper.begin(
            principal, backend=backend, tool=tool_name,
            access=resolved.access, kind="tool", params=params, parent=parent)
        try:
            res = engine.execute_tool(tool_name, params, ctx,
                                      jq_override=jq_override)
        except Exception as exc:
            self.gatekeeper.finish(ctx, ok=False,
                                   error=f"{type(exc).__name__}: {exc}")
            raise
        self.gatekeeper.finish(
            ctx, ok=True, bytes_in=res.bytes_in, bytes_out=res.bytes_out,
            truncated=res.truncated or None,
            warnings=res.warnings)
        return InvokeResult(
            value=res.value, kind="tool", truncated=res.truncated,
            warnings=list(res.warnings), next_cursor=res.next_cursor,
            pages=res.pages, requests=res.requests, status=res.status,
            bytes_in=res.bytes_in, bytes_out=res.bytes_out)

    def _invoke_composite(self, principal, backend, doc, engine, name,
                          params, jq_override, parent=None) -> InvokeResult:
        comp = doc.composite_map()[name]
        bound = bind_composite_params(name, comp, params)
        ctx = self.gatekeeper.begin(
            principal, backend=backend, tool=name,
            access=composite_effective_access(doc, comp), kind="script",
            params=params, parent=parent)

        totals = {"bytes_in": 0, "requests": 0}
        totals_lock = threading.Lock()
        api = {
            tool_name: self._composite_binding(
                principal, backend, doc, engine, tool_name, ctx,
                totals, totals_lock)
            for tool_name in doc.tool_map()
        }
        sandbox = Sandbox(
            SandboxLimits(timeout=comp.timeout,
                          max_api_calls=comp.max_api_calls),
            monotonic=self.monotonic,
            max_workers=self.sandbox_workers)
        try:
            script = sandbox.run(comp.code, api=api, params=bound)
            value = script.value
            if jq_override is not None:
                value = jq.apply_filter(value, jq_override)
        except Exception as exc:
            self.gatekeeper.finish(
                ctx, ok=False, bytes_in=totals["bytes_in"],
                error=f"{type(exc).__name__}: {exc}")
            raise
        bytes_out = json_bytes(value)
        self.gatekeeper.finish(
            ctx, ok=True, bytes_in=totals["bytes_in"], bytes_out=bytes_out,
            api_calls=script.api_calls)
        return InvokeResult(
            value=value, kind="script", requests=totals["requests"],
            bytes_in=totals["bytes_in"], bytes_out=bytes_out,
            logs=list(script.logs), api_calls=script.api_calls)

    def _composite_binding(self, principal, backend, doc, engine, tool_name,
                           parent_ctx: ExecutionContext,
                           totals: dict, totals_lock: threading.Lock):
        resolved = effective_tool(doc, tool_name)

        def call(call_params: dict):
            child = self.gatekeeper.begin(
                principal, backend=backend, tool=tool_name,
                access=resolved.access, kind="tool", params=call_params,
                parent=parent_ctx)
            try:
                res = engine.execute_tool(tool_name, call_params, child)
            except Exception as exc:
                self.gatekeeper.finish(child, ok=False,
                                       error=f"{type(exc).__name__}: {exc}")
                raise
            self.gatekeeper.finish(
                child, ok=True, bytes_in=res.bytes_in,
                bytes_out=res.bytes_out, truncated=res.truncated or None,
                warnings=res.warnings)
            with totals_lock:
                totals["bytes_in"] += res.bytes_in
                totals["requests"] += res.requests
            return res.value

        return call
