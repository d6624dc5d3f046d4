"""DADL document model: parsing, validation, effective-tool resolution,
static closure, and coverage reporting.

A ``.dadl`` file is YAML 1.2 with a top-level ``backend`` object, an ``auth``
block, and a ``tools`` map.  This module fixes the concrete v0.1 field grammar:
field names, defaults, and invariants.  Parsing is strict about document
*shape* (missing required fields, wrong types, unknown auth variants raise
:class:`SchemaError` naming the YAML path); semantic findings (literal
credentials, placeholder mismatches, composite timeout bounds, ...) are
collected by :func:`validate` into a report instead of raising.

Built-in defaults of the v0.1 profile:

* tool timeout 30 s, composite timeout 30 s (maximum 120 s)
* pagination ``page_size`` 50, ``max_pages`` 10, ``behavior`` "auto"
* retry: 3 attempts, base delay 0.5 s, multiplier 2.0, max delay 30 s
* ``allow_jq_override`` false, composite ``max_api_calls`` 50

All model objects are immutable after construction and safe to share across
threads; parsing and validation are pure functions.
"""

from __future__ import annotations

import datetime as _dt
import re
from dataclasses import dataclass, field
from typing import Any
from urllib.parse import urlparse

import yaml

from .errors import ClosureViolation, SchemaError, UnknownTool, YamlError
from .util import format_duration, json_bytes, parse_duration, valid_name

HTTP_METHODS = ("GET", "POST", "PUT", "PATCH", "DELETE", "HEAD")
WELL_KNOWN_ACCESS = ("read", "write", "admin", "dangerous")
PAGINATION_STRATEGIES = ("cursor", "offset", "page", "link_header", "none")
PARAM_LOCATIONS = ("path", "query", "body", "header")

DEFAULT_TOOL_TIMEOUT = 30.0
MAX_COMPOSITE_TIMEOUT = 120.0
DEFAULT_COMPOSITE_TIMEOUT = 30.0
DEFAULT_MAX_API_CALLS = 50
DEFAULT_PAGE_SIZE = 50
DEFAULT_MAX_PAGES = 10

_PLACEHOLDER_RE = re.compile(r"\{([^{}/]+)\}")
_COMPOSITE_CALL_RE = re.compile(r"\bapi\.([A-Za-z_][A-Za-z0-9_]*)\s*\(")


# --- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class CredentialRef:
    """Logical, secret-free pointer into the credential store, e.g.
    ``vault/my-api-token``.  Resolution happens elsewhere; here it is opaque."""

    ref: str

    @property
    def namespace(self) -> str:
        return self.ref.split("/", 1)[0] if "/" in self.ref else ""

    @property
    def key(self) -> str:
        return self.ref.split("/", 1)[1] if "/" in self.ref else self.ref

    def __str__(self) -> str:
        return self.ref


@dataclass(frozen=True)
class BackendDef:
    name: str
    type: str
    version: str
    base_url: str
    description: str = ""


@dataclass(frozen=True)
class BearerAuth:
    credential: CredentialRef
    header_name: str = "Authorization"
    prefix: str = "Bearer "

    scheme = "bearer"

    def refs(self) -> list[CredentialRef]:
        return [self.credential]


@dataclass(frozen=True)
class BasicAuth:
    username: CredentialRef
    password: CredentialRef

    scheme = "basic"

    def refs(self) -> list[CredentialRef]:
        return [self.username, self.password]


@dataclass(frozen=True)
class OAuth2ClientCredentials:
    token_url: str
    client_id: CredentialRef
    client_secret: CredentialRef
    scopes: tuple[str, ...] = ()
    refresh_margin: float = 60.0

    scheme = "oauth2_client_credentials"

    def refs(self) -> list[CredentialRef]:
        return [self.client_id, self.client_secret]


@dataclass(frozen=True)
class LoginCall:
    """Declarative login request.  ``body`` values are either literals or
    :class:`CredentialRef` markers (written ``{credential: ns/key}`` in YAML)."""

    method: str
    path: str
    body: tuple[tuple[str, Any], ...] = ()

    def body_map(self) -> dict[str, Any]:
        return dict(self.body)


@dataclass(frozen=True)
class SessionAuth:
    login: LoginCall
    token_extract: str
    token_header: str
    relogin_on: tuple[int, ...] = (401,)

    scheme = "session"

    def refs(self) -> list[CredentialRef]:
        return [v for _, v in self.login.body if isinstance(v, CredentialRef)]


@dataclass(frozen=True)
class ApiKeyAuth:
    credential: CredentialRef
    placement: str  # "header" | "query"
    name: str

    scheme = "api_key"

    def refs(self) -> list[CredentialRef]:
        return [self.credential]


AuthConfig = BearerAuth | BasicAuth | OAuth2ClientCredentials | SessionAuth | ApiKeyAuth


@dataclass(frozen=True)
class AccessLabel:
    value: str

    @property
    def well_known(self) -> bool:
        return self.value in WELL_KNOWN_ACCESS

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PaginationConfig:
    strategy: str
    request_params: tuple[tuple[str, str], ...] = ()
    response_paths: tuple[tuple[str, str], ...] = ()
    page_size: int = DEFAULT_PAGE_SIZE
    max_pages: int = DEFAULT_MAX_PAGES
    behavior: str = "auto"

    def request_param(self, role: str) -> str | None:
        return dict(self.request_params).get(role)

    def response_path(self, role: str) -> str | None:
        return dict(self.response_paths).get(role)

    @property
    def disabled(self) -> bool:
        return self.strategy == "none"


@dataclass(frozen=True)
class ParamDef:
    type: Any = "any"  # scalar type name or opaque JSON-Schema fragment
    required: bool = False
    default: Any = None
    has_default: bool = False
    location: str | None = None  # resolved during effective_tool when absent
    description: str = ""


@dataclass(frozen=True)
class ToolExample:
    params: tuple[tuple[str, Any], ...] = ()
    note: str = ""
    response: Any = None
    has_response: bool = False


@dataclass(frozen=True)
class ToolDef:
    method: str
    path: str
    description: str
    access: AccessLabel | None = None
    params: tuple[tuple[str, ParamDef], ...] = ()
    pagination: PaginationConfig | None = None  # strategy "none" disables inherited
    result_path: str | None = None
    transform: str | None = None
    max_items: int | None = None
    allow_jq_override: bool | None = None
    timeout: float | None = None
    examples: tuple[ToolExample, ...] = ()

    def param_map(self) -> dict[str, ParamDef]:
        return dict(self.params)

    def path_placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.path)


@dataclass(frozen=True)
class CompositeDef:
    description: str
    code: str
    params: tuple[tuple[str, ParamDef], ...] = ()
    timeout: float = DEFAULT_COMPOSITE_TIMEOUT
    max_api_calls: int = DEFAULT_MAX_API_CALLS
    access: AccessLabel | None = None

    def param_map(self) -> dict[str, ParamDef]:
        return dict(self.params)

    def referenced_tools(self) -> set[str]:
        """Names the code statically references via ``api.<name>(``.

        A conservative text scan: matches inside string literals are included
        on purpose (over-approximation never under-reports the closure).
        """
        return set(_COMPOSITE_CALL_RE.findall(self.code))


@dataclass(frozen=True)
class CoverageBlock:
    tools_defined: int | None = None
    estimated_total: int | None = None
    percent: float | None = None
    focus: str = ""
    missing: str = ""
    last_reviewed: str = ""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    multiplier: float = 2.0
    max_delay: float = 30.0


@dataclass(frozen=True)
class ErrorPolicy:
    message_path: str = "$.message"
    code_path: str | None = None
    terminal_statuses: frozenset[int] = frozenset()
    retryable_statuses: frozenset[int] = frozenset()
    retry: RetryPolicy = RetryPolicy()


@dataclass(frozen=True)
class RateLimitPolicy:
    remaining_header: str = "X-RateLimit-Remaining"
    retry_after_header: str = "Retry-After"
    pause_threshold: int = 1
    shared_per_credential: bool = True


@dataclass(frozen=True)
class ToolDefaults:
    pagination: PaginationConfig | None = None
    timeout: float | None = None
    max_items: int | None = None
    allow_jq_override: bool | None = None


@dataclass(frozen=True)
class DadlDocument:
    backend: BackendDef
    auth: AuthConfig
    tools: tuple[tuple[str, ToolDef], ...]
    spec_url: str = ""
    credits: tuple[str, ...] = ()
    source_name: str = ""
    source_url: str = ""
    date: str = ""
    defaults: ToolDefaults | None = None
    types: tuple[tuple[str, Any], ...] = ()
    composites: tuple[tuple[str, CompositeDef], ...] = ()
    hints: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()
    coverage: CoverageBlock | None = None
    error_policy: ErrorPolicy | None = None
    rate_limit: RateLimitPolicy | None = None
    declared_contains_code: bool | None = None

    @property
    def contains_code(self) -> bool:
        return bool(self.composites)

    def tool_map(self) -> dict[str, ToolDef]:
        return dict(self.tools)

    def composite_map(self) -> dict[str, CompositeDef]:
        return dict(self.composites)

    def hints_for(self, tool_name: str) -> dict[str, str]:
        return dict(dict(self.hints).get(tool_name, ()))

    def types_map(self) -> dict[str, Any]:
        return dict(self.types)


@dataclass(frozen=True)
class ResolvedTool:
    """One tool after defaults merging and hint injection — what the HTTP
    engine executes.  Merging precedence: tool-level over document ``defaults``
    over built-in defaults; ``pagination: none`` at tool level disables
    inherited pagination."""

    backend_name: str
    tool_name: str
    method: str
    path: str
    base_url: str
    params: tuple[tuple[str, ParamDef], ...]
    pagination: PaginationConfig | None
    result_path: str | None
    transform: str | None
    max_items: int | None
    allow_jq_override: bool
    timeout: float
    access: AccessLabel | None
    description: str
    description_with_hints: str
    error_policy: ErrorPolicy
    rate_limit: RateLimitPolicy | None
    credential_refs: tuple[str, ...] = ()

    def param_map(self) -> dict[str, ParamDef]:
        return dict(self.params)

    @property
    def qualified_name(self) -> str:
        return f"{self.backend_name}.{self.tool_name}"


@dataclass(frozen=True)
class EndpointEntry:
    method: str
    path_template: str
    tool_names: frozenset[str]


@dataclass(frozen=True)
class EndpointSurface:
    """The statically determined HTTP surface of one document."""

    entries: frozenset[EndpointEntry]
    includes_composites: bool
    composite_reachable: tuple[tuple[str, frozenset[str]], ...] = ()

    def pairs(self) -> set[tuple[str, str]]:
        return {(e.method, e.path_template) for e in self.entries}

    def reachable_map(self) -> dict[str, frozenset[str]]:
        return dict(self.composite_reachable)


@dataclass(frozen=True)
class Finding:
    path: str
    code: str
    message: str


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error_codes(self) -> set[str]:
        return {f.code for f in self.errors}

    def warning_codes(self) -> set[str]:
        return {f.code for f in self.warnings}


@dataclass(frozen=True)
class CoverageSummary:
    backend: str
    actual_tools: int
    declared: CoverageBlock | None
    discrepancy: bool
    reported_percent: int | None


@dataclass(frozen=True)
class CoverageReport:
    summaries: tuple[CoverageSummary, ...]
    total_backends: int
    total_tools: int
    total_declared_estimate: int


# --- parsing helpers ----------------------------------------------------------


def _strip_underscore_keys(node: Any) -> Any:
    if isinstance(node, dict):
        return {
            k: _strip_underscore_keys(v)
            for k, v in node.items()
            if not (isinstance(k, str) and k.startswith("_"))
        }
    if isinstance(node, list):
        return [_strip_underscore_keys(v) for v in node]
    return node


def _require(mapping: dict, key: str, path: str) -> Any:
    if key not in mapping or mapping[key] is None:
        raise SchemaError(f"{path}.{key}" if path else key, "required field is missing")
    return mapping[key]


def _as_str(value: Any, path: str) -> str:
    if isinstance(value, _dt.date):
        return value.isoformat()
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {type(value).__name__}")
    return value


def _as_map(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        kind = "list" if isinstance(value, list) else type(value).__name__
        raise SchemaError(path, f"expected a map, got {kind}")
    return value


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(path, f"expected boolean, got {type(value).__name__}")
    return value


def _as_int(value: Any, path: str, *, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        raise SchemaError(path, f"must be >= {minimum}, got {value}")
    return value


def _as_duration(value: Any, path: str) -> float:
    try:
        return parse_duration(value, field=path)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def _as_credential_ref(value: Any, path: str) -> CredentialRef:
    text = _as_str(value, path)
    if not text or any(c.isspace() for c in text):
        raise SchemaError(path, "credential reference must be non-empty without whitespace")
    return CredentialRef(text)


def _parse_backend(raw: Any, path: str = "backend") -> BackendDef:
    m = _as_map(raw, path)
    name = _as_str(_require(m, "name", path), f"{path}.name")
    btype = _as_str(_require(m, "type", path), f"{path}.type")
    if btype != "rest":
        raise SchemaError(f"{path}.type", f'only "rest" backends are supported, got {btype!r}')
    version = _as_str(_require(m, "version", path), f"{path}.version")
    base_url = _as_str(_require(m, "base_url", path), f"{path}.base_url")
    parsed = urlparse(base_url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise SchemaError(f"{path}.base_url", f"must be an absolute http(s) URL, got {base_url!r}")
    if parsed.query or parsed.fragment:
        raise SchemaError(f"{path}.base_url", "must not carry a query string or fragment")
    description = _as_str(m.get("description", ""), f"{path}.description")
    return BackendDef(name=name, type=btype, version=version, base_url=base_url.rstrip("/"),
                      description=description)


def _parse_auth(raw: Any, path: str = "auth") -> AuthConfig:
    m = _as_map(raw, path)
    kind = _as_str(_require(m, "type", path), f"{path}.type")
    if kind == "bearer":
        return BearerAuth(
            credential=_as_credential_ref(_require(m, "credential", path), f"{path}.credential"),
            header_name=_as_str(m.get("header_name", "Authorization"), f"{path}.header_name"),
            prefix=m.get("prefix", "Bearer ") if isinstance(m.get("prefix", "Bearer "), str)
            else _as_str(m.get("prefix"), f"{path}.prefix"),
        )
    if kind == "basic":
        return BasicAuth(
            username=_as_credential_ref(_require(m, "username", path), f"{path}.username"),
            password=_as_credential_ref(_require(m, "password", path), f"{path}.password"),
        )
    if kind == "oauth2_client_credentials":
        scopes_raw = m.get("scopes", [])
        if not isinstance(scopes_raw, list):
            raise SchemaError(f"{path}.scopes", "expected a list of strings")
        return OAuth2ClientCredentials(
            token_url=_as_str(_require(m, "token_url", path), f"{path}.token_url"),
            client_id=_as_credential_ref(_require(m, "client_id", path), f"{path}.client_id"),
            client_secret=_as_credential_ref(_require(m, "client_secret", path),
                                             f"{path}.client_secret"),
            scopes=tuple(_as_str(s, f"{path}.scopes") for s in scopes_raw),
            refresh_margin=_as_duration(m.get("refresh_margin", 60), f"{path}.refresh_margin"),
        )
    if kind == "session":
        login_raw = _as_map(_require(m, "login", path), f"{path}.login")
        body_raw = login_raw.get("body", {})
        body_items: list[tuple[str, Any]] = []
        for key, value in _as_map(body_raw, f"{path}.login.body").items():
            if isinstance(value, dict) and set(value.keys()) == {"credential"}:
                body_items.append(
                    (key, _as_credential_ref(value["credential"], f"{path}.login.body.{key}")))
            else:
                body_items.append((key, value))
        relogin_raw = m.get("relogin_on", [401])
        if not isinstance(relogin_raw, list):
            raise SchemaError(f"{path}.relogin_on", "expected a list of status codes")
        return SessionAuth(
            login=LoginCall(
                method=_as_str(_require(login_raw, "method", f"{path}.login"),
                               f"{path}.login.method").upper(),
                path=_as_str(_require(login_raw, "path", f"{path}.login"), f"{path}.login.path"),
                body=tuple(body_items),
            ),
            token_extract=_as_str(_require(m, "token_extract", path), f"{path}.token_extract"),
            token_header=_as_str(_require(m, "token_header", path), f"{path}.token_header"),
            relogin_on=tuple(_as_int(s, f"{path}.relogin_on") for s in relogin_raw),
        )
    if kind == "api_key":
        placement = _as_str(_require(m, "placement", path), f"{path}.placement")
        if placement not in ("header", "query"):
            raise SchemaError(f"{path}.placement", f'expected "header" or "query", got {placement!r}')
        return ApiKeyAuth(
            credential=_as_credential_ref(_require(m, "credential", path), f"{path}.credential"),
            placement=placement,
            name=_as_str(_require(m, "name", path), f"{path}.name"),
        )
    raise SchemaError(f"{path}.type", f"unknown auth scheme {kind!r}")


_PAGINATION_REQUIRED_ROLES = {
    "cursor": (("cursor",), ("next_cursor",)),
    "offset": (("offset",), ()),
    "page": (("page",), ()),
    "link_header": ((), ()),
}


def _parse_pagination(raw: Any, path: str) -> PaginationConfig:
    if raw is None or raw == "none":
        return PaginationConfig(strategy="none")
    m = _as_map(raw, path)
    strategy = m.get("strategy")
    if strategy is None and "strategy" in m:
        strategy = "none"
    if strategy is None:
        raise SchemaError(f"{path}.strategy", "required field is missing")
    strategy = _as_str(strategy, f"{path}.strategy") if strategy != "none" else "none"
    if strategy not in PAGINATION_STRATEGIES:
        raise SchemaError(f"{path}.strategy", f"unknown strategy {strategy!r}")
    if strategy == "none":
        extra = set(m.keys()) - {"strategy"}
        if extra:
            raise SchemaError(path, f'strategy "none" must not carry other fields: {sorted(extra)}')
        return PaginationConfig(strategy="none")
    request_params = tuple(sorted(
        (str(k), _as_str(v, f"{path}.request_params.{k}"))
        for k, v in _as_map(m.get("request_params", {}), f"{path}.request_params").items()))
    response_paths = tuple(sorted(
        (str(k), _as_str(v, f"{path}.response_paths.{k}"))
        for k, v in _as_map(m.get("response_paths", {}), f"{path}.response_paths").items()))
    cfg = PaginationConfig(
        strategy=strategy,
        request_params=request_params,
        response_paths=response_paths,
        page_size=_as_int(m.get("page_size", DEFAULT_PAGE_SIZE), f"{path}.page_size", minimum=1),
        max_pages=_as_int(m.get("max_pages", DEFAULT_MAX_PAGES), f"{path}.max_pages", minimum=1),
        behavior=_as_str(m.get("behavior", "auto"), f"{path}.behavior"),
    )
    if cfg.behavior not in ("auto", "expose"):
        raise SchemaError(f"{path}.behavior", f'expected "auto" or "expose", got {cfg.behavior!r}')
    need_params, need_paths = _PAGINATION_REQUIRED_ROLES[strategy]
    for role in need_params:
        if cfg.request_param(role) is None:
            raise SchemaError(f"{path}.request_params", f'strategy "{strategy}" requires a "{role}" parameter name')
    for role in need_paths:
        if cfg.response_path(role) is None:
            raise SchemaError(f"{path}.response_paths", f'strategy "{strategy}" requires a "{role}" path')
    return cfg


def _parse_param(raw: Any, path: str) -> ParamDef:
    if raw is None:
        return ParamDef()
    m = _as_map(raw, path)
    location = m.get("location")
    if location is not None:
        location = _as_str(location, f"{path}.location")
        if location not in PARAM_LOCATIONS:
            raise SchemaError(f"{path}.location", f"unknown location {location!r}")
    ptype = m.get("type", "any")
    if isinstance(ptype, str):
        if ptype not in ("string", "integer", "number", "boolean", "object", "array", "any"):
            raise SchemaError(f"{path}.type", f"unknown type {ptype!r}")
    elif not isinstance(ptype, dict):
        raise SchemaError(f"{path}.type", "expected a type name or schema fragment")
    return ParamDef(
        type=ptype if isinstance(ptype, str) else tuple(sorted(ptype.items())) if all(
            isinstance(v, (str, int, float, bool)) for v in ptype.values()) else str(ptype),
        required=_as_bool(m.get("required", False), f"{path}.required"),
        default=m.get("default"),
        has_default="default" in m,
        location=location,
        description=_as_str(m.get("description", ""), f"{path}.description"),
    )


def _parse_params(raw: Any, path: str) -> tuple[tuple[str, ParamDef], ...]:
    if raw is None:
        return ()
    m = _as_map(raw, path)
    return tuple((str(name), _parse_param(spec, f"{path}.{name}")) for name, spec in m.items())


def _parse_access(raw: Any, path: str) -> AccessLabel:
    text = _as_str(raw, path)
    if not text:
        raise SchemaError(path, "access label must be non-empty")
    return AccessLabel(text)


def _parse_examples(raw: Any, path: str) -> tuple[ToolExample, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise SchemaError(path, "expected a list of examples")
    out = []
    for i, entry in enumerate(raw):
        m = _as_map(entry, f"{path}[{i}]")
        params = tuple(sorted(_as_map(m.get("params", {}), f"{path}[{i}].params").items()))
        out.append(ToolExample(
            params=params,
            note=_as_str(m.get("note", ""), f"{path}[{i}].note"),
            response=m.get("response"),
            has_response="response" in m,
        ))
    return tuple(out)


def _parse_tool(raw: Any, path: str) -> ToolDef:
    m = _as_map(raw, path)
    method = _as_str(_require(m, "method", path), f"{path}.method").upper()
    if method not in HTTP_METHODS:
        raise SchemaError(f"{path}.method", f"unknown HTTP method {method!r}")
    tool_path = _as_str(_require(m, "path", path), f"{path}.path")
    if not tool_path.startswith("/"):
        raise SchemaError(f"{path}.path", "path must start with '/'")
    pagination = None
    if "pagination" in m:
        pagination = _parse_pagination(m["pagination"], f"{path}.pagination")
    max_items = None
    if m.get("max_items") is not None:
        max_items = _as_int(m["max_items"], f"{path}.max_items", minimum=1)
    allow_override = None
    if "allow_jq_override" in m:
        allow_override = _as_bool(m["allow_jq_override"], f"{path}.allow_jq_override")
    return ToolDef(
        method=method,
        path=tool_path,
        description=_as_str(_require(m, "description", path), f"{path}.description"),
        access=_parse_access(m["access"], f"{path}.access") if "access" in m else None,
        params=_parse_params(m.get("params"), f"{path}.params"),
        pagination=pagination,
        result_path=_as_str(m["result_path"], f"{path}.result_path") if "result_path" in m else None,
        transform=_as_str(m["transform"], f"{path}.transform") if "transform" in m else None,
        max_items=max_items,
        allow_jq_override=allow_override,
        timeout=_as_duration(m["timeout"], f"{path}.timeout") if "timeout" in m else None,
        examples=_parse_examples(m.get("examples"), f"{path}.examples"),
    )


def _parse_composite(raw: Any, path: str) -> CompositeDef:
    m = _as_map(raw, path)
    code = _as_str(_require(m, "code", path), f"{path}.code")
    if not code.strip():
        raise SchemaError(f"{path}.code", "composite code must be non-empty")
    return CompositeDef(
        description=_as_str(_require(m, "description", path), f"{path}.description"),
        code=code,
        params=_parse_params(m.get("params"), f"{path}.params"),
        timeout=_as_duration(m.get("timeout", DEFAULT_COMPOSITE_TIMEOUT), f"{path}.timeout"),
        max_api_calls=_as_int(m.get("max_api_calls", DEFAULT_MAX_API_CALLS),
                              f"{path}.max_api_calls", minimum=1),
        access=_parse_access(m["access"], f"{path}.access") if "access" in m else None,
    )


def _parse_coverage(raw: Any, path: str) -> CoverageBlock:
    m = _as_map(raw, path)
    percent = m.get("percent")
    if percent is not None and (isinstance(percent, bool) or not isinstance(percent, (int, float))):
        raise SchemaError(f"{path}.percent", "expected a number")
    return CoverageBlock(
        tools_defined=_as_int(m["tools_defined"], f"{path}.tools_defined", minimum=0)
        if m.get("tools_defined") is not None else None,
        estimated_total=_as_int(m["estimated_total"], f"{path}.estimated_total", minimum=0)
        if m.get("estimated_total") is not None else None,
        percent=float(percent) if percent is not None else None,
        focus=_as_str(m.get("focus", ""), f"{path}.focus"),
        missing=_as_str(m.get("missing", ""), f"{path}.missing"),
        last_reviewed=_as_str(m.get("last_reviewed", ""), f"{path}.last_reviewed"),
    )


def _parse_statuses(raw: Any, path: str) -> frozenset[int]:
    if raw is None:
        return frozenset()
    if not isinstance(raw, list):
        raise SchemaError(path, "expected a list of status codes")
    return frozenset(_as_int(s, path) for s in raw)


def _parse_error_policy(raw: Any, path: str = "error_policy") -> ErrorPolicy:
    m = _as_map(raw, path)
    retry_raw = _as_map(m.get("retry", {}), f"{path}.retry")
    retry = RetryPolicy(
        max_attempts=_as_int(retry_raw.get("max_attempts", 3), f"{path}.retry.max_attempts", minimum=1),
        base_delay=_as_duration(retry_raw.get("base_delay", 0.5), f"{path}.retry.base_delay"),
        multiplier=float(retry_raw.get("multiplier", 2.0)),
        max_delay=_as_duration(retry_raw.get("max_delay", 30), f"{path}.retry.max_delay"),
    )
    if retry.multiplier < 1:
        raise SchemaError(f"{path}.retry.multiplier", "must be >= 1")
    return ErrorPolicy(
        message_path=_as_str(m.get("message_path", "$.message"), f"{path}.message_path"),
        code_path=_as_str(m["code_path"], f"{path}.code_path") if "code_path" in m else None,
        terminal_statuses=_parse_statuses(m.get("terminal_statuses"), f"{path}.terminal_statuses"),
        retryable_statuses=_parse_statuses(m.get("retryable_statuses"), f"{path}.retryable_statuses"),
        retry=retry,
    )


def _parse_rate_limit(raw: Any, path: str = "rate_limit") -> RateLimitPolicy:
    m = _as_map(raw, path)
    threshold = _as_int(m.get("pause_threshold", 1), f"{path}.pause_threshold")
    if threshold < 0:
        raise SchemaError(f"{path}.pause_threshold", "must be >= 0")
    return RateLimitPolicy(
        remaining_header=_as_str(m.get("remaining_header", "X-RateLimit-Remaining"),
                                 f"{path}.remaining_header"),
        retry_after_header=_as_str(m.get("retry_after_header", "Retry-After"),
                                   f"{path}.retry_after_header"),
        pause_threshold=threshold,
        shared_per_credential=_as_bool(m.get("shared_per_credential", True),
                                       f"{path}.shared_per_credential"),
    )


def _parse_defaults(raw: Any, path: str = "defaults") -> ToolDefaults:
    m = _as_map(raw, path)
    return ToolDefaults(
        pagination=_parse_pagination(m["pagination"], f"{path}.pagination")
        if "pagination" in m else None,
        timeout=_as_duration(m["timeout"], f"{path}.timeout") if "timeout" in m else None,
        max_items=_as_int(m["max_items"], f"{path}.max_items", minimum=1)
        if m.get("max_items") is not None else None,
        allow_jq_override=_as_bool(m["allow_jq_override"], f"{path}.allow_jq_override")
        if "allow_jq_override" in m else None,
    )


def _parse_hints(raw: Any, path: str = "hints") -> tuple[tuple[str, tuple[tuple[str, str], ...]], ...]:
    m = _as_map(raw, path)
    out = []
    for tool_name, block in m.items():
        block_map = _as_map(block, f"{path}.{tool_name}")
        rendered = tuple(sorted((str(k), str(v).strip()) for k, v in block_map.items()))
        out.append((str(tool_name), rendered))
    return tuple(sorted(out))


# --- operations ---------------------------------------------------------------


def parse_document(yaml_text: str) -> DadlDocument:
    """Parse one ``.dadl`` YAML text into a validated document model.

    Underscore-prefixed keys are stripped after YAML alias expansion; custom
    tags are rejected.  Structural violations raise :class:`SchemaError`
    naming the YAML path; malformed YAML raises :class:`YamlError`.
    """
    try:
        raw = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise YamlError(f"not valid YAML: {exc}") from None
    if raw is None:
        raise SchemaError("", "document is empty")
    if not isinstance(raw, dict):
        raise SchemaError("", f"document root must be a map, got {type(raw).__name__}")
    raw = _strip_underscore_keys(raw)

    backend = _parse_backend(_require(raw, "backend", ""))
    auth = _parse_auth(_require(raw, "auth", ""))
    tools_raw = _require(raw, "tools", "")
    if isinstance(tools_raw, list):
        raise SchemaError("tools", "tools must be a map keyed by tool name, not a list")
    tools_map = _as_map(tools_raw, "tools")
    tools = tuple((str(name), _parse_tool(spec, f"tools.{name}")) for name, spec in tools_map.items())

    composites: tuple[tuple[str, CompositeDef], ...] = ()
    if raw.get("composites") is not None:
        comp_map = _as_map(raw["composites"], "composites")
        composites = tuple(
            (str(name), _parse_composite(spec, f"composites.{name}"))
            for name, spec in comp_map.items())

    types: tuple[tuple[str, Any], ...] = ()
    if raw.get("types") is not None:
        types = tuple(sorted((str(k), _freeze(v)) for k, v in _as_map(raw["types"], "types").items()))

    credits_raw = raw.get("credits", [])
    if not isinstance(credits_raw, list):
        raise SchemaError("credits", "expected a list of strings")

    declared_cc = None
    if "contains_code" in raw:
        declared_cc = _as_bool(raw["contains_code"], "contains_code")

    return DadlDocument(
        backend=backend,
        auth=auth,
        tools=tools,
        spec_url=_as_str(raw.get("spec", ""), "spec"),
        credits=tuple(_as_str(c, "credits") for c in credits_raw),
        source_name=_as_str(raw.get("source_name", ""), "source_name"),
        source_url=_as_str(raw.get("source_url", ""), "source_url"),
        date=_as_str(raw.get("date", ""), "date"),
        defaults=_parse_defaults(raw["defaults"]) if raw.get("defaults") is not None else None,
        types=types,
        composites=composites,
        hints=_parse_hints(raw["hints"]) if raw.get("hints") is not None else (),
        coverage=_parse_coverage(raw["coverage"], "coverage") if raw.get("coverage") is not None else None,
        error_policy=_parse_error_policy(raw["error_policy"]) if raw.get("error_policy") is not None else None,
        rate_limit=_parse_rate_limit(raw["rate_limit"]) if raw.get("rate_limit") is not None else None,
        declared_contains_code=declared_cc,
    )


def _freeze(value: Any) -> Any:
    """Hashable, order-stable form for opaque fragments (kept JSON-equivalent)."""
    if isinstance(value, dict):
        return tuple(sorted((str(k), _freeze(v)) for k, v in value.items()))
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        if all(isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], str) for v in value):
            return {k: _thaw(v) for k, v in value}
        return [_thaw(v) for v in value]
    return value


def validate(document: DadlDocument) -> ValidationReport:
    """Semantic validation.  Returns a report; never raises.

    Errors: suspected literal credentials, path/param placeholder mismatches,
    overlapping terminal/retryable status sets, composite timeouts above the
    120 s bound, bad or colliding names, composites referencing undefined
    tools.  Warnings: missing access labels, coverage inconsistencies, large
    example payloads on untransformed tools.
    """
    report = ValidationReport()
    err = report.errors.append
    warn = report.warnings.append

    for ref in _auth_refs_with_paths(document.auth):
        if "/" not in ref[1].ref:
            err(Finding(ref[0], "literal_credential",
                        f"literal credential suspected: {ref[1].ref!r} has no resolver namespace "
                        "(references look like namespace/key)"))

    tool_names = set(document.tool_map())
    composite_names = set(document.composite_map())
    overlap = tool_names & composite_names
    for name in sorted(overlap):
        err(Finding(f"composites.{name}", "name_collision",
                    f"{name!r} is defined both as a tool and a composite"))

    for name, tool in document.tools:
        path_prefix = f"tools.{name}"
        if not valid_name(name):
            err(Finding(path_prefix, "bad_name",
                        f"tool name {name!r} must match [a-z][a-z0-9_]*"))
        placeholders = set(tool.path_placeholders())
        declared_path_params = {
            pname for pname, pdef in tool.params
            if (pdef.location or _infer_location(pname, tool)) == "path"
        }
        for missing in sorted(placeholders - set(tool.param_map())):
            err(Finding(f"{path_prefix}.path", "placeholder_without_param",
                        f"path placeholder {{{missing}}} has no matching param"))
        for extra in sorted(declared_path_params - placeholders):
            err(Finding(f"{path_prefix}.params.{extra}", "path_param_without_placeholder",
                        f"param {extra!r} has location \"path\" but no {{{extra}}} in the path"))
        if tool.access is None:
            warn(Finding(path_prefix, "missing_access",
                         f"tool {name!r} declares no access label; policy engines will "
                         "deny it under non-wildcard rules"))
        if tool.transform is None and tool.result_path is None:
            for i, example in enumerate(tool.examples):
                if example.has_response and json_bytes(example.response) > 5 * 1024:
                    warn(Finding(f"{path_prefix}.examples[{i}]", "large_response_untransformed",
                                 f"example payload exceeds 5 KB and tool {name!r} declares no "
                                 "transform; consider a projection"))
                    break

    for name, comp in document.composites:
        path_prefix = f"composites.{name}"
        if not valid_name(name):
            err(Finding(path_prefix, "bad_name",
                        f"composite name {name!r} must match [a-z][a-z0-9_]*"))
        if comp.timeout > MAX_COMPOSITE_TIMEOUT:
            err(Finding(f"{path_prefix}.timeout", "composite_timeout_bound",
                        f"composite timeout {format_duration(comp.timeout)} exceeds the "
                        f"{format_duration(MAX_COMPOSITE_TIMEOUT)} maximum"))
        for referenced in sorted(comp.referenced_tools()):
            if referenced in composite_names:
                err(Finding(f"{path_prefix}.code", "composite_calls_composite",
                            f"composite {name!r} calls composite {referenced!r}; composites "
                            "may only call primitive tools"))
            elif referenced not in tool_names:
                err(Finding(f"{path_prefix}.code", "closure_violation",
                            f"composite {name!r} references undefined tool {referenced!r}"))

    if document.error_policy is not None:
        ep = document.error_policy
        both = ep.terminal_statuses & ep.retryable_statuses
        if both:
            err(Finding("error_policy", "status_sets_overlap",
                        f"statuses {sorted(both)} appear as both terminal and retryable"))

    cov = document.coverage
    if cov is not None:
        if cov.tools_defined is not None and cov.estimated_total not in (None, 0):
            if cov.tools_defined > cov.estimated_total:
                err(Finding("coverage", "coverage_inverted",
                            "tools_defined exceeds estimated_total"))
            elif cov.percent is not None:
                computed = 100.0 * cov.tools_defined / cov.estimated_total
                if abs(computed - cov.percent) > 1.0:
                    warn(Finding("coverage.percent", "coverage_percent_mismatch",
                                 f"declared percent {cov.percent} differs from computed "
                                 f"{computed:.1f} by more than 1"))
        if cov.tools_defined is not None and cov.tools_defined != len(document.tools):
            warn(Finding("coverage.tools_defined", "coverage_count_mismatch",
                         f"coverage declares {cov.tools_defined} tools but the document "
                         f"defines {len(document.tools)}"))

    if document.declared_contains_code is not None and \
            document.declared_contains_code != document.contains_code:
        warn(Finding("contains_code", "contains_code_mismatch",
                     f"declared contains_code={document.declared_contains_code} but the "
                     f"document {'has' if document.contains_code else 'has no'} composites"))

    for meta_field in ("source_name", "date"):
        if not getattr(document, meta_field):
            warn(Finding(meta_field, "missing_metadata", f"{meta_field} is empty"))

    return report


def _auth_refs_with_paths(auth: AuthConfig) -> list[tuple[str, CredentialRef]]:
    if isinstance(auth, BearerAuth):
        return [("auth.credential", auth.credential)]
    if isinstance(auth, BasicAuth):
        return [("auth.username", auth.username), ("auth.password", auth.password)]
    if isinstance(auth, OAuth2ClientCredentials):
        return [("auth.client_id", auth.client_id), ("auth.client_secret", auth.client_secret)]
    if isinstance(auth, SessionAuth):
        return [(f"auth.login.body.{k}", v) for k, v in auth.login.body
                if isinstance(v, CredentialRef)]
    return [("auth.credential", auth.credential)]


def _infer_location(name: str, tool: ToolDef) -> str:
    if name in tool.path_placeholders():
        return "path"
    if tool.method in ("GET", "HEAD", "DELETE"):
        return "query"
    return "body"


def effective_tool(document: DadlDocument, tool_name: str) -> ResolvedTool:
    """Resolve one tool to the merged view the HTTP engine executes.

    Deterministic: same document and name always yield an identical value.
    """
    tools = document.tool_map()
    if tool_name not in tools:
        raise UnknownTool(f"no tool {tool_name!r} in backend {document.backend.name!r}")
    tool = tools[tool_name]
    defaults = document.defaults or ToolDefaults()

    pagination: PaginationConfig | None
    if tool.pagination is not None:
        pagination = None if tool.pagination.disabled else tool.pagination
    elif defaults.pagination is not None:
        pagination = None if defaults.pagination.disabled else defaults.pagination
    else:
        pagination = None

    if tool.allow_jq_override is not None:
        allow_override = tool.allow_jq_override
    elif defaults.allow_jq_override is not None:
        allow_override = defaults.allow_jq_override
    else:
        allow_override = False

    description_with_hints = tool.description
    hints = document.hints_for(tool_name)
    if hints:
        lines = "\n".join(f"- {k}: {v}" for k, v in sorted(hints.items()))
        description_with_hints = f"{tool.description}\n\nHints:\n{lines}"

    resolved_params = tuple(
        (pname, pdef if pdef.location else
         ParamDef(type=pdef.type, required=pdef.required, default=pdef.default,
                  has_default=pdef.has_default, location=_infer_location(pname, tool),
                  description=pdef.description))
        for pname, pdef in tool.params)

    return ResolvedTool(
        backend_name=document.backend.name,
        tool_name=tool_name,
        method=tool.method,
        path=tool.path,
        base_url=document.backend.base_url,
        params=resolved_params,
        pagination=pagination,
        result_path=tool.result_path,
        transform=tool.transform,
        max_items=tool.max_items if tool.max_items is not None else defaults.max_items,
        allow_jq_override=allow_override,
        timeout=tool.timeout if tool.timeout is not None
        else (defaults.timeout if defaults.timeout is not None else DEFAULT_TOOL_TIMEOUT),
        access=tool.access,
        description=tool.description,
        description_with_hints=description_with_hints,
        error_policy=document.error_policy or ErrorPolicy(),
        rate_limit=document.rate_limit,
        credential_refs=tuple(r.ref for r in document.auth.refs()),
    )


def static_closure(document: DadlDocument) -> EndpointSurface:
    """The set of (method, path-template) pairs any tool in the document can
    address, plus per-composite statically referenced tool names.

    Raises :class:`ClosureViolation` when a composite references a name that
    is not a primitive tool of the document.
    """
    by_pair: dict[tuple[str, str], set[str]] = {}
    for name, tool in document.tools:
        by_pair.setdefault((tool.method, tool.path), set()).add(name)
    entries = frozenset(
        EndpointEntry(method=m, path_template=p, tool_names=frozenset(names))
        for (m, p), names in by_pair.items())

    tool_names = set(document.tool_map())
    composite_names = set(document.composite_map())
    reachable: list[tuple[str, frozenset[str]]] = []
    for name, comp in sorted(document.composites):
        refs = comp.referenced_tools()
        bad = sorted(refs - tool_names)
        if bad:
            kind = "composite" if set(bad) & composite_names else "tool"
            raise ClosureViolation(
                f"composite {name!r} references undefined {kind}(s): {', '.join(bad)}")
        reachable.append((name, frozenset(refs)))

    return EndpointSurface(
        entries=entries,
        includes_composites=document.contains_code,
        composite_reachable=tuple(reachable),
    )


def coverage_report(documents: list[DadlDocument]) -> CoverageReport:
    """Summarize declared vs actual coverage per backend, with totals."""
    summaries = []
    total_tools = 0
    total_estimate = 0
    for doc in documents:
        actual = len(doc.tools)
        total_tools += actual
        cov = doc.coverage
        reported = None
        discrepancy = False
        if cov is not None:
            if cov.tools_defined is not None and cov.tools_defined != actual:
                discrepancy = True
            if cov.tools_defined is not None and cov.estimated_total:
                reported = round(100.0 * cov.tools_defined / cov.estimated_total)
                total_estimate += cov.estimated_total
        summaries.append(CoverageSummary(
            backend=doc.backend.name,
            actual_tools=actual,
            declared=cov,
            discrepancy=discrepancy,
            reported_percent=reported,
        ))
    return CoverageReport(
        summaries=tuple(summaries),
        total_backends=len(documents),
        total_tools=total_tools,
        total_declared_estimate=total_estimate,
    )


# --- serialization ------------------------------------------------------------


def serialize_document(document: DadlDocument) -> str:
    """Render a document back to canonical YAML (plumbing for round-trips)."""
    root: dict[str, Any] = {}
    if document.spec_url:
        root["spec"] = document.spec_url
    if document.credits:
        root["credits"] = list(document.credits)
    if document.source_name:
        root["source_name"] = document.source_name
    if document.source_url:
        root["source_url"] = document.source_url
    if document.date:
        root["date"] = document.date
    b = document.backend
    root["backend"] = {
        "name": b.name, "type": b.type, "version": b.version,
        "base_url": b.base_url, "description": b.description,
    }
    root["auth"] = _auth_to_yaml(document.auth)
    if document.defaults is not None:
        d: dict[str, Any] = {}
        if document.defaults.pagination is not None:
            d["pagination"] = _pagination_to_yaml(document.defaults.pagination)
        if document.defaults.timeout is not None:
            d["timeout"] = format_duration(document.defaults.timeout)
        if document.defaults.max_items is not None:
            d["max_items"] = document.defaults.max_items
        if document.defaults.allow_jq_override is not None:
            d["allow_jq_override"] = document.defaults.allow_jq_override
        root["defaults"] = d
    if document.types:
        root["types"] = {k: _thaw(v) for k, v in document.types}
    root["tools"] = {name: _tool_to_yaml(tool) for name, tool in document.tools}
    if document.composites:
        root["composites"] = {name: _composite_to_yaml(c) for name, c in document.composites}
    if document.hints:
        root["hints"] = {tool: dict(entries) for tool, entries in document.hints}
    if document.coverage is not None:
        cov = document.coverage
        block = {}
        if cov.tools_defined is not None:
            block["tools_defined"] = cov.tools_defined
        if cov.estimated_total is not None:
            block["estimated_total"] = cov.estimated_total
        if cov.percent is not None:
            block["percent"] = cov.percent
        if cov.focus:
            block["focus"] = cov.focus
        if cov.missing:
            block["missing"] = cov.missing
        if cov.last_reviewed:
            block["last_reviewed"] = cov.last_reviewed
        root["coverage"] = block
    if document.error_policy is not None:
        ep = document.error_policy
        root["error_policy"] = {
            "message_path": ep.message_path,
            **({"code_path": ep.code_path} if ep.code_path else {}),
            "terminal_statuses": sorted(ep.terminal_statuses),
            "retryable_statuses": sorted(ep.retryable_statuses),
            "retry": {
                "max_attempts": ep.retry.max_attempts,
                "base_delay": format_duration(ep.retry.base_delay),
                "multiplier": ep.retry.multiplier,
                "max_delay": format_duration(ep.retry.max_delay),
            },
        }
    if document.rate_limit is not None:
        rl = document.rate_limit
        root["rate_limit"] = {
            "remaining_header": rl.remaining_header,
            "retry_after_header": rl.retry_after_header,
            "pause_threshold": rl.pause_threshold,
            "shared_per_credential": rl.shared_per_credential,
        }
    if document.declared_contains_code is not None:
        root["contains_code"] = document.declared_contains_code
    return yaml.safe_dump(root, sort_keys=False, allow_unicode=True, default_flow_style=False)


def _auth_to_yaml(auth: AuthConfig) -> dict[str, Any]:
    if isinstance(auth, BearerAuth):
        out: dict[str, Any] = {"type": "bearer", "credential": auth.credential.ref}
        if auth.header_name != "Authorization":
            out["header_name"] = auth.header_name
        if auth.prefix != "Bearer ":
            out["prefix"] = auth.prefix
        return out
    if isinstance(auth, BasicAuth):
        return {"type": "basic", "username": auth.username.ref, "password": auth.password.ref}
    if isinstance(auth, OAuth2ClientCredentials):
        return {
            "type": "oauth2_client_credentials",
            "token_url": auth.token_url,
            "client_id": auth.client_id.ref,
            "client_secret": auth.client_secret.ref,
            "scopes": list(auth.scopes),
            "refresh_margin": format_duration(auth.refresh_margin),
        }
    if isinstance(auth, SessionAuth):
        body = {}
        for key, value in auth.login.body:
            body[key] = {"credential": value.ref} if isinstance(value, CredentialRef) else value
        return {
            "type": "session",
            "login": {"method": auth.login.method, "path": auth.login.path, "body": body},
            "token_extract": auth.token_extract,
            "token_header": auth.token_header,
            "relogin_on": list(auth.relogin_on),
        }
    return {
        "type": "api_key",
        "credential": auth.credential.ref,
        "placement": auth.placement,
        "name": auth.name,
    }


def _pagination_to_yaml(cfg: PaginationConfig) -> Any:
    if cfg.disabled:
        return "none"
    out: dict[str, Any] = {"strategy": cfg.strategy}
    if cfg.request_params:
        out["request_params"] = dict(cfg.request_params)
    if cfg.response_paths:
        out["response_paths"] = dict(cfg.response_paths)
    out["page_size"] = cfg.page_size
    out["max_pages"] = cfg.max_pages
    out["behavior"] = cfg.behavior
    return out


def _param_to_yaml(p: ParamDef) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if p.type != "any":
        out["type"] = p.type if isinstance(p.type, str) else _thaw(p.type)
    if p.required:
        out["required"] = True
    if p.has_default:
        out["default"] = p.default
    if p.location:
        out["location"] = p.location
    if p.description:
        out["description"] = p.description
    return out


def _tool_to_yaml(tool: ToolDef) -> dict[str, Any]:
    out: dict[str, Any] = {
        "method": tool.method,
        "path": tool.path,
        "description": tool.description,
    }
    if tool.access is not None:
        out["access"] = tool.access.value
    if tool.params:
        out["params"] = {name: _param_to_yaml(p) for name, p in tool.params}
    if tool.pagination is not None:
        out["pagination"] = _pagination_to_yaml(tool.pagination)
    if tool.result_path is not None:
        out["result_path"] = tool.result_path
    if tool.transform is not None:
        out["transform"] = tool.transform
    if tool.max_items is not None:
        out["max_items"] = tool.max_items
    if tool.allow_jq_override is not None:
        out["allow_jq_override"] = tool.allow_jq_override
    if tool.timeout is not None:
        out["timeout"] = format_duration(tool.timeout)
    if tool.examples:
        out["examples"] = [
            {
                **({"params": dict(e.params)} if e.params else {}),
                **({"note": e.note} if e.note else {}),
                **({"response": e.response} if e.has_response else {}),
            }
            for e in tool.examples
        ]
    return out


def _composite_to_yaml(comp: CompositeDef) -> dict[str, Any]:
    out: dict[str, Any] = {"description": comp.description}
    if comp.params:
        out["params"] = {name: _param_to_yaml(p) for name, p in comp.params}
    out["timeout"] = format_duration(comp.timeout)
    if comp.max_api_calls != DEFAULT_MAX_API_CALLS:
        out["max_api_calls"] = comp.max_api_calls
    if comp.access is not None:
        out["access"] = comp.access.value
    out["code"] = comp.code
    return out


# --- document JSON-Schema (toolctl schema) ------------------------------------


def document_json_schema() -> dict[str, Any]:
    """JSON-Schema describing the on-disk ``.dadl`` grammar (v0.1 profile)."""
    credential_ref = {"type": "string", "pattern": r"^\S+/\S+$",
                      "description": "logical credential reference, namespace/key"}
    jsonpath = {"type": "string", "description": "JSONPath (root, child, index, wildcard subset)"}
    duration = {"type": ["string", "number"], "description": 'duration, e.g. "30s", "500ms", 60'}
    param = {
        "type": "object",
        "properties": {
            "type": {"oneOf": [
                {"enum": ["string", "integer", "number", "boolean", "object", "array", "any"]},
                {"type": "object"},
            ]},
            "required": {"type": "boolean", "default": False},
            "default": {},
            "location": {"enum": list(PARAM_LOCATIONS)},
            "description": {"type": "string"},
        },
        "additionalProperties": False,
    }
    pagination = {
        "oneOf": [
            {"type": "null"},
            {"const": "none"},
            {
                "type": "object",
                "required": ["strategy"],
                "properties": {
                    "strategy": {"enum": list(PAGINATION_STRATEGIES)},
                    "request_params": {"type": "object", "additionalProperties": {"type": "string"}},
                    "response_paths": {"type": "object", "additionalProperties": jsonpath},
                    "page_size": {"type": "integer", "minimum": 1, "default": DEFAULT_PAGE_SIZE},
                    "max_pages": {"type": "integer", "minimum": 1, "default": DEFAULT_MAX_PAGES},
                    "behavior": {"enum": ["auto", "expose"], "default": "auto"},
                },
                "additionalProperties": False,
            },
        ]
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "DADL document (v0.1 profile)",
        "type": "object",
        "required": ["backend", "auth", "tools"],
        "properties": {
            "spec": {"type": "string"},
            "credits": {"type": "array", "items": {"type": "string"}},
            "source_name": {"type": "string"},
            "source_url": {"type": "string"},
            "date": {"type": "string", "format": "date"},
            "backend": {
                "type": "object",
                "required": ["name", "type", "version", "base_url"],
                "properties": {
                    "name": {"type": "string"},
                    "type": {"const": "rest"},
                    "version": {"type": "string"},
                    "base_url": {"type": "string", "format": "uri",
                                 "description": "absolute http(s) URL, no query string"},
                    "description": {"type": "string"},
                },
                "additionalProperties": False,
            },
            "auth": {
                "oneOf": [
                    {"type": "object", "required": ["type", "credential"],
                     "properties": {"type": {"const": "bearer"}, "credential": credential_ref,
                                    "header_name": {"type": "string", "default": "Authorization"},
                                    "prefix": {"type": "string", "default": "Bearer "}},
                     "additionalProperties": False},
                    {"type": "object", "required": ["type", "username", "password"],
                     "properties": {"type": {"const": "basic"}, "username": credential_ref,
                                    "password": credential_ref},
                     "additionalProperties": False},
                    {"type": "object",
                     "required": ["type", "token_url", "client_id", "client_secret"],
                     "properties": {"type": {"const": "oauth2_client_credentials"},
                                    "token_url": {"type": "string", "format": "uri"},
                                    "client_id": credential_ref,
                                    "client_secret": credential_ref,
                                    "scopes": {"type": "array", "items": {"type": "string"}},
                                    "refresh_margin": duration},
                     "additionalProperties": False},
                    {"type": "object",
                     "required": ["type", "login", "token_extract", "token_header"],
                     "properties": {"type": {"const": "session"},
                                    "login": {"type": "object",
                                              "required": ["method", "path"],
                                              "properties": {"method": {"type": "string"},
                                                             "path": {"type": "string"},
                                                             "body": {"type": "object"}}},
                                    "token_extract": jsonpath,
                                    "token_header": {"type": "string"},
                                    "relogin_on": {"type": "array", "items": {"type": "integer"},
                                                   "default": [401]}},
                     "additionalProperties": False},
                    {"type": "object", "required": ["type", "credential", "placement", "name"],
                     "properties": {"type": {"const": "api_key"}, "credential": credential_ref,
                                    "placement": {"enum": ["header", "query"]},
                                    "name": {"type": "string"}},
                     "additionalProperties": False},
                ]
            },
            "defaults": {
                "type": "object",
                "properties": {
                    "pagination": pagination,
                    "timeout": duration,
                    "max_items": {"type": "integer", "minimum": 1},
                    "allow_jq_override": {"type": "boolean"},
                },
                "additionalProperties": False,
            },
            "types": {"type": "object"},
            "tools": {
                "type": "object",
                "description": "map keyed by tool name (never a list)",
                "propertyNames": {"pattern": "^[a-z][a-z0-9_]*$"},
                "additionalProperties": {
                    "type": "object",
                    "required": ["method", "path", "description"],
                    "properties": {
                        "method": {"enum": list(HTTP_METHODS)},
                        "path": {"type": "string", "pattern": "^/"},
                        "description": {"type": "string"},
                        "access": {"type": "string",
                                   "description": "read|write|admin|dangerous or custom"},
                        "params": {"type": "object", "additionalProperties": param},
                        "pagination": pagination,
                        "result_path": jsonpath,
                        "transform": {"type": "string", "description": "jq filter (subset)"},
                        "max_items": {"type": "integer", "minimum": 1},
                        "allow_jq_override": {"type": "boolean", "default": False},
                        "timeout": duration,
                        "examples": {"type": "array", "items": {"type": "object"}},
                    },
                    "additionalProperties": False,
                },
            },
            "composites": {
                "type": "object",
                "propertyNames": {"pattern": "^[a-z][a-z0-9_]*$"},
                "additionalProperties": {
                    "type": "object",
                    "required": ["description", "code"],
                    "properties": {
                        "description": {"type": "string"},
                        "params": {"type": "object", "additionalProperties": param},
                        "timeout": duration,
                        "max_api_calls": {"type": "integer", "minimum": 1, "default": 50},
                        "access": {"type": "string"},
                        "code": {"type": "string"},
                    },
                    "additionalProperties": False,
                },
            },
            "hints": {
                "type": "object",
                "additionalProperties": {"type": "object",
                                         "additionalProperties": {"type": "string"}},
            },
            "coverage": {
                "type": "object",
                "properties": {
                    "tools_defined": {"type": "integer", "minimum": 0},
                    "estimated_total": {"type": "integer", "minimum": 0},
                    "percent": {"type": "number"},
                    "focus": {"type": "string"},
                    "missing": {"type": "string"},
                    "last_reviewed": {"type": "string", "format": "date"},
                },
                "additionalProperties": False,
            },
            "error_policy": {
                "type": "object",
                "required": ["message_path"],
                "properties": {
                    "message_path": jsonpath,
                    "code_path": jsonpath,
                    "terminal_statuses": {"type": "array", "items": {"type": "integer"}},
                    "retryable_statuses": {"type": "array", "items": {"type": "integer"}},
                    "retry": {"type": "object",
                              "properties": {"max_attempts": {"type": "integer", "minimum": 1},
                                             "base_delay": duration,
                                             "multiplier": {"type": "number", "minimum": 1},
                                             "max_delay": duration}},
                },
                "additionalProperties": False,
            },
            "rate_limit": {
                "type": "object",
                "properties": {
                    "remaining_header": {"type": "string", "default": "X-RateLimit-Remaining"},
                    "retry_after_header": {"type": "string", "default": "Retry-After"},
                    "pause_threshold": {"type": "integer", "minimum": 0, "default": 1},
                    "shared_per_credential": {"type": "boolean", "default": True},
                },
                "additionalProperties": False,
            },
            "contains_code": {"type": "boolean"},
        },
        "additionalProperties": False,
    }
