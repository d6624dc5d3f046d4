"""Two-operation gateway over a library of backends.

However many tools are loaded, clients are advertised exactly two:
``search`` finds tools by keyword and returns their signatures, ``execute``
runs a script against the whole catalog through the same sandbox composites
use.  The advertisement text is a module constant, so its size provably does
not depend on the catalog; everything tool-specific lives in the interface
text, which is handed to scripts and search results but never advertised.

Catalogs are immutable snapshots.  A reload builds a complete new snapshot
(documents, index, engines) and swaps one reference; executions in flight
keep the snapshot they started with, so they never observe a half-reloaded
library.
"""

from __future__ import annotations

import json
import re
import sys
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from . import jq
from .authz import AccessLabel, ExecutionContext, Gatekeeper, Principal
from .credentials import CredentialResolver
from .errors import (
    AuthzDenied,
    DadlError,
    OverrideForbidden,
    SandboxError,
    SchemaError,
    UnknownTool,
)
from .es import JsError
from .es.interp import make_error
from .model import DadlDocument, ParamDef, effective_tool, parse_document
from .runtime import InvokeResult, Runtime, composite_effective_access
from .sandbox import Sandbox, SandboxLimits
from .util import chars4_tokens, json_bytes

UNLABELED = "unlabeled"

# What a parameter type renders as in interface text.  Anything we cannot
# name precisely is unknown rather than any: scripts should not assume shape.
_TS_TYPES = {
    "string": "string",
    "integer": "number",
    "number": "number",
    "boolean": "boolean",
    "array": "unknown[]",
    "object": "Record<string, unknown>",
    "any": "unknown",
}

_WORD_RE = re.compile(r"[a-z0-9]+")


def _terms(text: str) -> set:
    return set(_WORD_RE.findall(text.lower()))


def _one_line(text: str, limit: int = 200) -> str:
    flat = " ".join(text.split())
    if len(flat) > limit:
        flat = flat[: limit - 1].rstrip() + "…"
    return flat


# --- catalog ------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    """One invocable thing: a primitive tool or a composite."""

    backend: str
    name: str
    kind: str  # "tool" | "composite"
    access: str
    description: str  # hint-augmented, may span lines
    params: tuple
    returns: str = ""  # upstream shape note for the interface text

    @property
    def qualified(self) -> str:
        return f"{self.backend}.{self.name}"

    def param_map(self) -> dict[str, ParamDef]:
        return dict(self.params)


@dataclass(frozen=True)
class ToolSignature:
    """What search hands back: enough to call the tool from a script."""

    qualified: str
    call_name: str  # what to write after `api.` — bare unless ambiguous
    description: str  # single line, at most 200 chars
    params: str
    access: str
    backend: str
    interface: str  # this tool's block of the generated interface text

    MAX_RENDERED = 512

    def render(self) -> str:
        head = f"{self.call_name} [{self.access}] ({self.backend}): {self.description}"
        body = f"  params: {self.params}" if self.params else "  params: none"
        text = f"{head}\n{body}"
        raw = text.encode("utf-8")
        if len(raw) > self.MAX_RENDERED:
            # the ellipsis is 3 bytes of utf-8, budgeted inside the cap
            keep = raw[: self.MAX_RENDERED - 3].decode("utf-8", "ignore")
            text = keep.rstrip() + "…"
        return text

    def as_dict(self) -> dict:
        return {
            "name": self.call_name,
            "qualified": self.qualified,
            "description": self.description,
            "params": self.params,
            "access": self.access,
            "backend": self.backend,
            "interface": self.interface,
        }


class Catalog:
    """Immutable, indexed view over a set of documents.

    Tools are addressable bare when their name is unique across the whole
    catalog, and as ``backend.tool`` always.
    """

    def __init__(self, documents: Any = (), *, generation: int = 0):
        if isinstance(documents, DadlDocument):
            documents = [documents]
        if isinstance(documents, Mapping):
            docs = dict(documents)
        else:
            docs = {}
            for doc in documents:
                name = doc.backend.name
                if name in docs:
                    raise SchemaError(
                        "catalog", f"duplicate backend name {name!r}")
                docs[name] = doc
        for name, doc in docs.items():
            if name != doc.backend.name:
                raise SchemaError(
                    "catalog",
                    f"document keyed {name!r} declares backend "
                    f"{doc.backend.name!r}")
        self.documents: dict[str, DadlDocument] = {
            name: docs[name] for name in sorted(docs)}
        self.generation = generation

        self.entries: list[CatalogEntry] = []
        for bname, doc in self.documents.items():
            names = sorted(set(doc.tool_map()) | set(doc.composite_map()))
            for tname in names:
                if tname in doc.tool_map():
                    resolved = effective_tool(doc, tname)
                    returns = f"JSON from {resolved.method} {resolved.path}"
                    if resolved.result_path:
                        returns += f", projected at {resolved.result_path}"
                    if resolved.pagination and not resolved.pagination.disabled:
                        returns += f" ({resolved.pagination.strategy} pagination)"
                    entry = CatalogEntry(
                        backend=bname, name=tname, kind="tool",
                        access=str(resolved.access) if resolved.access else UNLABELED,
                        description=resolved.description_with_hints,
                        params=resolved.params,
                        returns=returns)
                else:
                    comp = doc.composite_map()[tname]
                    access = composite_effective_access(doc, comp)
                    entry = CatalogEntry(
                        backend=bname, name=tname, kind="composite",
                        access=str(access) if access else UNLABELED,
                        description=comp.description,
                        params=comp.params)
                self.entries.append(entry)

        self._by_qualified = {e.qualified: e for e in self.entries}
        counts: dict[str, int] = {}
        for entry in self.entries:
            counts[entry.name] = counts.get(entry.name, 0) + 1
        self._bare = {
            e.name: e for e in self.entries if counts[e.name] == 1}
        self._ambiguous = {name for name, n in counts.items() if n > 1}
        self._index = {
            e.qualified: (
                _terms(e.name) | {e.name.lower()},
                _terms(e.description),
                _terms(e.backend) | {e.backend.lower()},
            )
            for e in self.entries
        }

    @property
    def tool_count(self) -> int:
        return len(self.entries)

    def backend_names(self) -> list[str]:
        return list(self.documents)

    def call_name(self, entry: CatalogEntry) -> str:
        return entry.name if entry.name in self._bare else entry.qualified

    def resolve(self, name: str) -> CatalogEntry:
        if name in self._by_qualified:
            return self._by_qualified[name]
        if name in self._bare:
            return self._bare[name]
        if name in self._ambiguous:
            owners = ", ".join(sorted(
                e.qualified for e in self.entries if e.name == name))
            raise UnknownTool(
                f"{name!r} is ambiguous; qualify as one of: {owners}")
        raise UnknownTool(f"no tool named {name!r} in the catalog")

    def signature(self, entry: CatalogEntry) -> ToolSignature:
        parts = []
        for pname, spec in entry.params:
            typed = f"{pname}: {_ts_type(spec.type)}"
            parts.append(f"{typed} (required)" if spec.required else typed)
        return ToolSignature(
            qualified=entry.qualified,
            call_name=self.call_name(entry),
            description=_one_line(entry.description),
            params="; ".join(parts),
            access=entry.access,
            backend=entry.backend,
            interface=_interface_block(entry, self.call_name(entry)),
        )

    def search(self, query: str, k: int = 10) -> list[ToolSignature]:
        """Top-k by weighted term overlap: a query term hitting the tool
        name scores 3, the description 1, the backend name 1.  Ties break
        lexicographically by qualified name."""
        terms = _terms(query)
        if not terms or k <= 0:
            return []
        scored = []
        for entry in self.entries:
            name_t, desc_t, backend_t = self._index[entry.qualified]
            score = (3 * len(terms & name_t)
                     + len(terms & desc_t)
                     + len(terms & backend_t))
            if score > 0:
                scored.append((-score, entry.qualified, entry))
        scored.sort()
        return [self.signature(entry) for _, _, entry in scored[:k]]


def _fragment(spec_type) -> Optional[dict]:
    """Schema-fragment param types come out of the parser as item tuples;
    direct construction may hand us a mapping.  Either way, a dict."""
    if isinstance(spec_type, Mapping):
        return dict(spec_type)
    if isinstance(spec_type, tuple):
        try:
            return dict(spec_type)
        except (TypeError, ValueError):
            return None
    return None


def _ts_type(spec_type) -> str:
    if isinstance(spec_type, str):
        return _TS_TYPES.get(spec_type, "unknown")
    frag = _fragment(spec_type)
    if frag is not None:
        enum = frag.get("enum")
        if isinstance(enum, (list, tuple)) and enum and all(
                isinstance(v, str) for v in enum):
            return " | ".join(json.dumps(v) for v in enum)
        inner = frag.get("type")
        if isinstance(inner, str):
            return _TS_TYPES.get(inner, "unknown")
    return "unknown"


# --- interface text -----------------------------------------------------------


def _params_type(entry: CatalogEntry) -> str:
    parts = []
    for pname, spec in entry.params:
        opt = "" if spec.required else "?"
        parts.append(f"{pname}{opt}: {_ts_type(spec.type)}")
    return "{ " + "; ".join(parts) + " }" if parts else "{}"


def _interface_block(entry: CatalogEntry, call_name: str) -> str:
    lines = ["  /**"]
    for line in entry.description.splitlines():
        lines.append(f"   * {line}".rstrip())
    for pname, spec in entry.params:
        if spec.description:
            lines.append(f"   * @param {pname} {_one_line(spec.description, 120)}")
    if entry.returns:
        lines.append(f"   * @returns {entry.returns}")
    if entry.kind == "composite":
        lines.append("   * @composite runs as a sandboxed script")
    lines.append(f"   * @access {entry.access}")
    lines.append(f"   * @backend {entry.backend}")
    lines.append("   */")
    lines.append(
        f"  {call_name}(params: {_params_type(entry)}): Promise<unknown>;")
    return "\n".join(lines)


def generate_interface(catalog: Catalog) -> str:
    """TypeScript-style text describing every catalog tool exactly once.

    This is what scripts and search results see; it is never part of the
    advertisement.  Methods whose name is shown dotted (``backend.tool``)
    must be called that way because the bare name is taken by more than one
    backend.
    """
    header = [
        f"// {catalog.tool_count} tools across "
        f"{len(catalog.documents)} backends.",
        "// Call each method as api.<name>(params); names shown as",
        "// backend.name are called as api.<backend>.<name>(params).",
        "interface Api {",
    ]
    blocks = [
        _interface_block(entry, catalog.call_name(entry))
        for entry in catalog.entries
    ]
    return "\n".join(header) + "\n" + "\n\n".join(blocks) + "\n}\n"


# --- advertisement ------------------------------------------------------------

SEARCH_TOOL = {
    "name": "search",
    "description": (
        "Find tools in the catalog by keyword. Returns up to k matching "
        "signatures, each with the exact name to call from an execute "
        "script, a one-line description, the parameter list with required "
        "markers, the access label, the owning backend, and the tool's "
        "typed interface text. Ranking is by term overlap; matches on the "
        "tool name weigh most. The catalog is not listed anywhere else, so "
        "always search before writing a script."),
    "inputSchema": {
        "type": "object",
        "properties": {
            "query": {
                "type": "string",
                "description": (
                    "Keywords matched against tool names, descriptions, "
                    "and backend names."),
            },
            "k": {
                "type": "integer",
                "description": "Maximum number of results, default 10.",
            },
        },
        "required": ["query"],
    },
}

EXECUTE_TOOL = {
    "name": "execute",
    "description": (
        "Run a JavaScript snippet against the catalog. Every tool found "
        "via search is callable as an async method of the global `api` "
        "object, taking a single params object and resolving to the tool's "
        "JSON result; the snippet's return value is the operation result. "
        "Filter, join, and reshape inside the snippet so only the data you "
        "need comes back. The script runs with no network, filesystem, or "
        "dynamic evaluation, under a hard timeout and a capped number of "
        "api calls; each underlying call is authorized and audited "
        "individually, and a denied call rejects with an AuthzDenied error "
        "the script may catch."),
    "inputSchema": {
        "type": "object",
        "properties": {
            "script": {
                "type": "string",
                "description": (
                    "JavaScript source. Supports const/let, arrow "
                    "functions, async/await, Promise.all for parallel "
                    "calls, destructuring, spread, optional chaining, "
                    "ternary, and array methods such as map, filter, "
                    "find, and slice. Build strings with +, not "
                    "backticks. End with a return statement."),
            },
            "jq_override": {
                "type": "string",
                "description": (
                    "Optional jq-style filter applied to the script's "
                    "return value before it is sent back."),
            },
        },
        "required": ["script"],
    },
}

_ORIENTATION = """\
This gateway fronts a library of REST API backends. The library itself is
not advertised: whether one tool or several thousand are loaded, this
message is all that a client sees up front, and it never changes size.

Work in two steps. First call `search` with a few keywords describing what
you need; read the returned signatures and interface text to learn each
tool's exact call name, parameters, and access label. Then call `execute`
with a short script that invokes those tools through the `api` object and
returns the reshaped result, for example:

  const issues = await api.list_issues({ state: "open" });
  return issues.filter(i => !i.assignee).map(i => i.title);

Calls return promises; await them, or start several and gather with
Promise.all to fan out in parallel. Results are plain JSON. A failed call
rejects with an error object carrying `name` and `message`; use
try/catch where partial progress is acceptable.

Access labels (read, write, admin, dangerous, or custom) describe what a
tool can do, and every api call is checked against your own grants before
any request is sent upstream. A call you are not allowed to make fails
with AuthzDenied and leaves an audit record; the rest of the script keeps
running if you catch it. Scripts are sandboxed: no network or filesystem
beyond `api`, no eval, a hard wall-clock timeout, a fixed budget of api
calls, and a cap on result size. Prefer asking for little: pass filters
the tool supports, and project away fields you do not need before
returning.
"""


def advertisement_surface() -> str:
    """The full fixed text a client is shown.  A function of nothing: its
    bytes cannot depend on what the catalog holds."""
    return (
        _ORIENTATION
        + "\nTools:\n\n"
        + json.dumps([SEARCH_TOOL, EXECUTE_TOOL], indent=2)
        + "\n"
    )


# --- context cost -------------------------------------------------------------


@dataclass(frozen=True)
class ContextCostReport:
    catalog_tool_count: int
    flat_advertisement_tokens: int
    codemode_surface_tokens: int
    interface_bytes_total: int
    bytes_per_tool: float
    reduction_ratio: float

    def as_dict(self) -> dict:
        return {
            "catalog_tool_count": self.catalog_tool_count,
            "flat_advertisement_tokens": self.flat_advertisement_tokens,
            "codemode_surface_tokens": self.codemode_surface_tokens,
            "interface_bytes_total": self.interface_bytes_total,
            "bytes_per_tool": round(self.bytes_per_tool, 1),
            "reduction_ratio": round(self.reduction_ratio, 1),
        }


def param_schema(entry: CatalogEntry) -> dict:
    """JSON Schema for one tool's parameters, the shape a one-tool-per-entry
    protocol registration would carry."""
    properties: dict[str, Any] = {}
    required = []
    for pname, spec in entry.params:
        frag = _fragment(spec.type)
        if frag is not None:
            prop = frag
        elif spec.type == "any" or not isinstance(spec.type, str):
            prop = {}
        else:
            prop = {"type": spec.type}
        if spec.description:
            prop["description"] = spec.description
        if spec.has_default:
            prop["default"] = spec.default
        properties[pname] = prop
        if spec.required:
            required.append(pname)
    schema: dict[str, Any] = {"type": "object", "properties": properties}
    if required:
        schema["required"] = required
    return schema


def flat_registration(catalog: Catalog, entry: CatalogEntry) -> dict:
    return {
        "name": catalog.call_name(entry),
        "description": entry.description,
        "inputSchema": param_schema(entry),
    }


def flat_advertisement(catalog: Catalog) -> str:
    """Every tool rendered as its own registration, the conventional
    per-tool advertisement this gateway exists to avoid."""
    return "\n".join(
        json.dumps(flat_registration(catalog, entry))
        for entry in catalog.entries)


def measure_context(catalog: Catalog, tokenizer_mode="chars4") -> ContextCostReport:
    if tokenizer_mode == "chars4":
        tokens = chars4_tokens
    elif callable(tokenizer_mode):
        tokens = tokenizer_mode
    else:
        raise ValueError(
            f"tokenizer_mode must be 'chars4' or a callable, "
            f"got {tokenizer_mode!r}")
    n = catalog.tool_count
    flat = tokens(flat_advertisement(catalog)) if n else 0
    surface = tokens(advertisement_surface())
    interface_bytes = len(generate_interface(catalog).encode("utf-8")) if n else 0
    return ContextCostReport(
        catalog_tool_count=n,
        flat_advertisement_tokens=flat,
        codemode_surface_tokens=surface,
        interface_bytes_total=interface_bytes,
        bytes_per_tool=interface_bytes / n if n else 0.0,
        reduction_ratio=flat / surface if flat else 0.0,
    )


# --- loading ------------------------------------------------------------------


def load_library(directory) -> dict[str, DadlDocument]:
    """Parse every ``.dadl`` file in a directory.  Any failure rejects the
    whole load and names the offending file."""
    root = Path(directory)
    if not root.is_dir():
        raise SchemaError("library", f"{root} is not a directory")
    docs: dict[str, DadlDocument] = {}
    for path in sorted(root.glob("*.dadl")):
        doc = _load_file(path)
        name = doc.backend.name
        if name in docs:
            raise SchemaError(
                "library", f"{path.name}: backend {name!r} already defined")
        docs[name] = doc
    return docs


def _load_file(path: Path) -> DadlDocument:
    try:
        return parse_document(path.read_text(encoding="utf-8"))
    except DadlError as err:
        raise SchemaError(path.name, str(err)) from None


def _documents_from(source) -> dict[str, DadlDocument]:
    if isinstance(source, Catalog):
        return dict(source.documents)
    if isinstance(source, Mapping):
        return dict(source)
    if isinstance(source, DadlDocument):
        return {source.backend.name: source}
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.is_dir():
            return load_library(path)
        doc = _load_file(path)
        return {doc.backend.name: doc}
    docs: dict[str, DadlDocument] = {}
    for item in source:
        for name, doc in _documents_from(item).items():
            if name in docs:
                raise SchemaError(
                    "library", f"backend {name!r} already defined")
            docs[name] = doc
    return docs


# --- the gateway --------------------------------------------------------------

# Running a script is itself only as privileged as what it calls; the
# container record is labeled read and every api call re-authorizes.
_EXECUTE_ACCESS = AccessLabel("read")


class _Generation:
    """One catalog snapshot plus the engines bound to it."""

    __slots__ = ("catalog", "runtime")

    def __init__(self, catalog: Catalog, runtime: Runtime):
        self.catalog = catalog
        self.runtime = runtime


class Gateway:
    def __init__(self, documents: Any = (), *,
                 resolver: Optional[CredentialResolver] = None,
                 gatekeeper: Optional[Gatekeeper] = None,
                 limits: Optional[SandboxLimits] = None,
                 session=None,
                 sleep: Callable[[float], None] = time.sleep,
                 monotonic: Callable[[], float] = time.monotonic,
                 rng=None,
                 sandbox_workers: int = 8,
                 allow_jq_override: bool = True,
                 expose_native: bool = False):
        self.resolver = resolver if resolver is not None else CredentialResolver()
        self.gatekeeper = gatekeeper if gatekeeper is not None else Gatekeeper()
        self.limits = limits or SandboxLimits()
        self.monotonic = monotonic
        self.sandbox_workers = sandbox_workers
        self.allow_jq_override = allow_jq_override
        self.expose_native = expose_native
        self._session = session
        self._sleep = sleep
        self._rng = rng
        self._lock = threading.Lock()
        self._state = self._build(_documents_from(documents), generation=0)

    def _build(self, docs: Mapping[str, DadlDocument], generation: int) -> _Generation:
        catalog = Catalog(docs, generation=generation)
        runtime = Runtime(
            list(catalog.documents.values()), self.resolver,
            gatekeeper=self.gatekeeper, session=self._session,
            sleep=self._sleep, monotonic=self.monotonic, rng=self._rng,
            sandbox_workers=self.sandbox_workers)
        return _Generation(catalog, runtime)

    @property
    def catalog(self) -> Catalog:
        return self._state.catalog

    def search(self, query: str, k: int = 10) -> list[ToolSignature]:
        return self._state.catalog.search(query, k)

    def interface(self) -> str:
        return generate_interface(self._state.catalog)

    def advertisement_surface(self) -> str:
        return advertisement_surface()

    def measure(self, tokenizer_mode="chars4") -> ContextCostReport:
        return measure_context(self._state.catalog, tokenizer_mode)

    def hot_reload(self, source) -> Catalog:
        """Swap in a new catalog.  All parsing and validation happens
        before the swap; a bad source leaves the current catalog in place.
        Engines are rebuilt, so per-generation state such as session
        tokens starts fresh; the resolver and audit trail carry over."""
        docs = _documents_from(source)
        with self._lock:
            state = self._build(
                docs, generation=self._state.catalog.generation + 1)
            self._state = state
        return state.catalog

    # --- execute --------------------------------------------------------------

    def execute(self, script: str, principal: Principal, *,
                jq_override: Optional[str] = None,
                limits: Optional[SandboxLimits] = None) -> InvokeResult:
        """Run a script spanning the catalog.

        Each api call re-authorizes the calling principal for that tool's
        label and leaves an audit record parented to this execution.  A
        denial fails that one call with a catchable AuthzDenied error; the
        script decides whether to continue.
        """
        if jq_override is not None and not self.allow_jq_override:
            raise OverrideForbidden("jq_override is disabled on this gateway")
        state = self._state  # pin one generation for the whole run
        ctx = self.gatekeeper.begin(
            principal, backend="gateway", tool="execute",
            access=_EXECUTE_ACCESS, kind="script",
            params={"script": script})
        totals = {"requests": 0, "bytes_in": 0}
        totals_lock = threading.Lock()
        api = self._api_tree(state, principal, ctx, totals, totals_lock)
        sandbox = Sandbox(limits or self.limits, monotonic=self.monotonic,
                          max_workers=self.sandbox_workers)
        try:
            script_result = sandbox.run(script, api=api, params={})
            value = script_result.value
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
            api_calls=script_result.api_calls)
        return InvokeResult(
            value=value, kind="script", requests=totals["requests"],
            bytes_in=totals["bytes_in"], bytes_out=bytes_out,
            logs=list(script_result.logs), api_calls=script_result.api_calls)

    def _api_tree(self, state: _Generation, principal: Principal,
                  parent: ExecutionContext, totals: dict,
                  totals_lock: threading.Lock) -> dict:
        tree: dict[str, Any] = {}
        for entry in state.catalog.entries:
            call = self._binding(state, entry, principal, parent,
                                 totals, totals_lock)
            tree.setdefault(entry.backend, {})[entry.name] = call
        for name, entry in state.catalog._bare.items():
            if name not in tree:  # a backend named like a tool wins the slot
                tree[name] = tree[entry.backend][entry.name]
        return tree

    def _binding(self, state: _Generation, entry: CatalogEntry,
                 principal: Principal, parent: ExecutionContext,
                 totals: dict, totals_lock: threading.Lock):
        def call(call_params: dict):
            try:
                res = state.runtime.invoke(
                    principal, entry.backend, entry.name, call_params,
                    parent=parent)
            except AuthzDenied as err:
                # unlike a composite, a gateway script may catch a denial
                # and continue; the deny record is already written
                raise JsError(make_error("AuthzDenied", str(err)))
            except SandboxError as err:
                if entry.kind == "composite":
                    # a nested composite blowing its own budget is an
                    # upstream failure here, not this script's
                    raise JsError(make_error(type(err).__name__, str(err)))
                raise
            with totals_lock:
                totals["requests"] += res.requests
                totals["bytes_in"] += res.bytes_in
            return res.value

        return call

    # --- protocol surface -----------------------------------------------------

    def advertised_tools(self) -> list[dict]:
        tools = [SEARCH_TOOL, EXECUTE_TOOL]
        if self.expose_native:
            state = self._state
            tools = tools + [
                flat_registration(state.catalog, entry)
                for entry in state.catalog.entries
            ]
        return tools

    def call_native(self, name: str, principal: Principal,
                    params: Optional[Mapping[str, Any]] = None) -> InvokeResult:
        state = self._state
        entry = state.catalog.resolve(name)
        return state.runtime.invoke(principal, entry.backend, entry.name, params)


# --- JSON-RPC -----------------------------------------------------------------

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
SERVER_ERROR = -32000
NO_PRINCIPAL = -32001


def _rpc_error(msg_id, code: int, message: str, data=None) -> dict:
    error: dict[str, Any] = {"code": code, "message": message}
    if data is not None:
        error["data"] = data
    return {"jsonrpc": "2.0", "id": msg_id, "error": error}


def _rpc_result(msg_id, result) -> dict:
    return {"jsonrpc": "2.0", "id": msg_id, "result": result}


class GatewaySession:
    """One protocol conversation.  Holds the principal once established,
    either passed in by the transport (HTTP bearer) or set by the
    ``initialize`` handshake (stdio)."""

    def __init__(self, gateway: Gateway, principal: Optional[Principal] = None):
        self.gateway = gateway
        self.principal = principal

    def _resolve_principal(self, raw) -> Principal:
        policy = self.gateway.gatekeeper.policy
        if isinstance(raw, str):
            return policy.resolve_principal(raw)
        if isinstance(raw, Mapping) and isinstance(raw.get("id"), str):
            roles = raw.get("roles")
            if roles is None:
                return policy.resolve_principal(raw["id"])
            return Principal(raw["id"], tuple(roles))
        raise ValueError("principal must be an id string or {id, roles}")

    def handle_line(self, line: str) -> Optional[str]:
        try:
            message = json.loads(line)
        except ValueError:
            return json.dumps(_rpc_error(None, PARSE_ERROR, "parse error"))
        response = self.handle(message)
        return json.dumps(response) if response is not None else None

    def handle(self, message) -> Optional[dict]:
        if not isinstance(message, dict) or message.get("jsonrpc") != "2.0" \
                or not isinstance(message.get("method"), str):
            return _rpc_error(
                None if not isinstance(message, dict) else message.get("id"),
                INVALID_REQUEST, "invalid request")
        msg_id = message.get("id")
        notification = "id" not in message
        try:
            result = self._dispatch(message["method"], message.get("params"))
        except _RpcFault as fault:
            return None if notification else _rpc_error(
                msg_id, fault.code, fault.message, fault.data)
        except AuthzDenied as err:
            return None if notification else _rpc_error(
                msg_id, SERVER_ERROR, str(err), {"error": "AuthzDenied"})
        except DadlError as err:
            return None if notification else _rpc_error(
                msg_id, SERVER_ERROR, str(err),
                {"error": type(err).__name__})
        return None if notification else _rpc_result(msg_id, result)

    def _dispatch(self, method: str, params):
        if params is None:
            params = {}
        if not isinstance(params, dict):
            raise _RpcFault(INVALID_PARAMS, "params must be an object")
        if method == "initialize":
            return self._initialize(params)
        if method in ("tools/list", "list_tools"):
            return {"tools": self.gateway.advertised_tools()}
        if method in ("tools/call", "call_tool"):
            return self._call(params)
        if method == "ping":
            return {}
        raise _RpcFault(METHOD_NOT_FOUND, f"no method {method!r}")

    def _initialize(self, params: dict):
        raw = params.get("principal")
        if raw is not None:
            try:
                self.principal = self._resolve_principal(raw)
            except ValueError as err:
                raise _RpcFault(INVALID_PARAMS, str(err))
        return {
            "server": {"name": "dadl-gateway"},
            "generation": self.gateway.catalog.generation,
            "principal": self.principal.id if self.principal else None,
        }

    def _require_principal(self) -> Principal:
        if self.principal is None:
            raise _RpcFault(
                NO_PRINCIPAL,
                "no principal established; initialize with a principal or "
                "send a bearer token")
        return self.principal

    def _call(self, params: dict):
        name = params.get("name")
        args = params.get("arguments") or {}
        if not isinstance(name, str) or not isinstance(args, dict):
            raise _RpcFault(
                INVALID_PARAMS, "expected {name: string, arguments: object}")
        if name == "search":
            query = args.get("query")
            if not isinstance(query, str) or not query.strip():
                raise _RpcFault(INVALID_PARAMS, "search needs a query string")
            k = args.get("k", 10)
            if not isinstance(k, int) or k < 1:
                raise _RpcFault(INVALID_PARAMS, "k must be a positive integer")
            results = self.gateway.search(query, k)
            return {"results": [sig.as_dict() for sig in results]}
        if name == "execute":
            script = args.get("script")
            if not isinstance(script, str) or not script.strip():
                raise _RpcFault(INVALID_PARAMS, "execute needs a script string")
            override = args.get("jq_override")
            if override is not None and not isinstance(override, str):
                raise _RpcFault(INVALID_PARAMS, "jq_override must be a string")
            res = self.gateway.execute(
                script, self._require_principal(), jq_override=override)
            return {"value": res.value, "api_calls": res.api_calls,
                    "requests": res.requests, "logs": res.logs}
        if self.gateway.expose_native:
            res = self.gateway.call_native(name, self._require_principal(), args)
            return {"value": res.value, "requests": res.requests,
                    "truncated": res.truncated,
                    "next_cursor": res.next_cursor}
        raise _RpcFault(
            INVALID_PARAMS,
            f"no tool {name!r}; this gateway advertises search and execute")


class _RpcFault(Exception):
    def __init__(self, code: int, message: str, data=None):
        self.code = code
        self.message = message
        self.data = data
        super().__init__(message)


# --- transports ---------------------------------------------------------------


def serve_stdio(gateway: Gateway, rfile=None, wfile=None, *,
                principal: Optional[Principal] = None) -> None:
    """Newline-delimited JSON-RPC until EOF.  One session per stream pair;
    the handshake's principal field applies to every later call."""
    rfile = rfile if rfile is not None else sys.stdin
    wfile = wfile if wfile is not None else sys.stdout
    session = GatewaySession(gateway, principal=principal)
    for line in rfile:
        if not line.strip():
            continue
        out = session.handle_line(line)
        if out is not None:
            wfile.write(out + "\n")
            wfile.flush()


class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "GatewayHTTPServer"

    def log_message(self, fmt, *args):  # request logging goes to the audit
        pass                            # trail, not stderr

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            length = 0
        body = self.rfile.read(length) if length else b""
        principal = self._principal()
        session = GatewaySession(self.server.gateway, principal=principal)
        try:
            message = json.loads(body.decode("utf-8"))
        except ValueError:
            response: Any = _rpc_error(None, PARSE_ERROR, "parse error")
        else:
            response = session.handle(message)
            if response is None:  # notification: acknowledge with no body
                self.send_response(204)
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
        payload = json.dumps(response).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _principal(self) -> Optional[Principal]:
        header = self.headers.get("Authorization") or ""
        if header.lower().startswith("bearer "):
            token = header[7:].strip()
            if token:
                policy = self.server.gateway.gatekeeper.policy
                return policy.resolve_principal(token)
        return None


class GatewayHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, gateway: Gateway):
        super().__init__(address, _HttpHandler)
        self.gateway = gateway


def serve_http(gateway: Gateway, host: str = "127.0.0.1",
               port: int = 0) -> GatewayHTTPServer:
    """Bind and return the server; the caller drives serve_forever."""
    return GatewayHTTPServer((host, port), gateway)


def serve(gateway: Gateway, transport: str = "stdio", *,
          host: str = "127.0.0.1", port: int = 8264,
          principal: Optional[Principal] = None) -> None:
    if transport == "stdio":
        serve_stdio(gateway, principal=principal)
    elif transport == "http":
        server = serve_http(gateway, host, port)
        try:
            server.serve_forever()
        finally:
            server.server_close()
    else:
        raise ValueError(f"unknown transport {transport!r}")
