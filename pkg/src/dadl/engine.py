"""HTTP execution for resolved tools.

One engine serves one document.  ``execute_tool`` takes an
:class:`~dadl.authz.ExecutionContext` minted by the gatekeeper; there is no
way to reach the wire without one.  The engine owns everything between the
context and the socket: parameter validation, URL construction, credential
injection, token/session lifecycles, pagination, retries with jittered
backoff, redirect policy, proactive rate-limit pausing, and response shaping.

Time is injectable (``sleep``, ``monotonic``, ``rng``) so retry and refresh
behavior is testable without wall-clock waits.
"""

from __future__ import annotations

import base64
import random
import re
import threading
import time
from dataclasses import dataclass, field
from email.utils import parsedate_to_datetime
from typing import Any, Mapping
from urllib.parse import quote, urlsplit

import requests

from . import jsonpath, transform
from .authz import ExecutionContext
from .credentials import CredentialResolver
from .errors import (
    AuthzDenied,
    CredentialResolution,
    LoginFailed,
    MalformedLinkHeader,
    MissingRequiredParam,
    PaginationError,
    PathInjection,
    RetriesExhausted,
    TokenEndpointError,
    TokenExtractEmpty,
    TypeMismatch,
    UnknownParam,
    UnknownTool,
    UpstreamTerminal,
)
from .model import (
    ApiKeyAuth,
    BasicAuth,
    BearerAuth,
    DadlDocument,
    ErrorPolicy,
    OAuth2ClientCredentials,
    PaginationConfig,
    ResolvedTool,
    RetryPolicy,
    SessionAuth,
    effective_tool,
)
from .errors import CredentialError

CURSOR_PARAM = "_cursor"  # reserved caller parameter for exposed pagination
MAX_REDIRECTS = 3
_REDIRECT_STATUSES = {301, 302, 303, 307, 308}


@dataclass
class ToolResult:
    value: Any
    truncated: bool = False
    warnings: list[str] = field(default_factory=list)
    next_cursor: str | None = None
    pages: int = 1
    requests: int = 0
    status: int | None = None
    bytes_in: int = 0       # raw upstream payload bytes, summed over pages
    bytes_out: int = 0      # shaped result, canonical JSON


@dataclass
class PreparedRequest:
    method: str
    url: str
    headers: dict[str, str]
    query: dict[str, Any]
    json_body: Any
    timeout: float


def classify_response(status: int, policy: ErrorPolicy) -> str:
    """success | retryable | terminal.  429 is always retryable: backing off
    is the only correct reaction to a quota message regardless of policy."""
    if 200 <= status < 300:
        return "success"
    if status == 429:
        return "retryable"
    if status in policy.retryable_statuses:
        return "retryable"
    return "terminal"


def backoff_bound(retry: RetryPolicy, attempt: int) -> float:
    """Upper bound of the sleep before retry ``attempt`` (1-based)."""
    return min(retry.base_delay * (retry.multiplier ** (attempt - 1)), retry.max_delay)


def backoff_delay(retry: RetryPolicy, attempt: int, retry_after: float | None,
                  rng: random.Random) -> float:
    """Actual sleep: the server's Retry-After verbatim when present, otherwise
    full jitter in [0, bound]."""
    if retry_after is not None:
        return retry_after
    return rng.uniform(0.0, backoff_bound(retry, attempt))


def parse_retry_after(value: str | None) -> float | None:
    if not value:
        return None
    value = value.strip()
    if re.fullmatch(r"\d+(\.\d+)?", value):
        return float(value)
    try:
        when = parsedate_to_datetime(value)
    except (TypeError, ValueError):
        return None
    delta = when.timestamp() - time.time()
    return max(0.0, delta)


_LINK_SEGMENT_RE = re.compile(r'<([^>]*)>\s*((?:;[^,<]*)*)')


def parse_link_next(header: str) -> str | None:
    """Extract the rel="next" target from an RFC 8288 Link header."""
    found_any = False
    for match in _LINK_SEGMENT_RE.finditer(header):
        found_any = True
        url, params = match.group(1), match.group(2)
        rel = re.search(r'rel\s*=\s*"?([^";]+)"?', params)
        if rel and "next" in rel.group(1).split():
            return url
    if not found_any and header.strip():
        raise MalformedLinkHeader(f"cannot parse Link header: {header[:120]!r}")
    return None


# --- parameter handling -------------------------------------------------------

_SCALAR_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "object": lambda v: isinstance(v, dict),
    "array": lambda v: isinstance(v, list),
    "any": lambda v: True,
}

_PATH_FORBIDDEN = re.compile(r"[/?#\\]|%2f|%5c|\.\.", re.IGNORECASE)


def bind_params(tool: ResolvedTool, params: Mapping[str, Any] | None) -> dict[str, Any]:
    """Apply declared defaults and check names/types.  The reserved pagination
    cursor is handled by the caller and ignored here."""
    given = dict(params or {})
    given.pop(CURSOR_PARAM, None)
    declared = tool.param_map()
    for name in given:
        if name not in declared:
            raise UnknownParam(f"{tool.tool_name} has no parameter {name!r}")
    bound: dict[str, Any] = {}
    for name, spec in declared.items():
        if name in given:
            value = given[name]
        elif spec.has_default:
            value = spec.default
        elif spec.required:
            raise MissingRequiredParam(f"{tool.tool_name} requires parameter {name!r}")
        else:
            continue
        if isinstance(spec.type, str):
            check = _SCALAR_CHECKS.get(spec.type, _SCALAR_CHECKS["any"])
            if value is not None and not check(value):
                raise TypeMismatch(
                    f"parameter {name!r} of {tool.tool_name} expects {spec.type}, "
                    f"got {type(value).__name__}")
        bound[name] = value
    return bound


def _query_str(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def build_request(tool: ResolvedTool, bound: Mapping[str, Any],
                  page_params: Mapping[str, str] | None = None,
                  url_override: str | None = None) -> PreparedRequest:
    """Construct the wire request (no credentials yet).

    Path parameters are rejected if their rendered form could change the
    route: separators, encoded separators, or traversal sequences raise
    :class:`PathInjection` instead of being escaped into a surprise.
    """
    path = tool.path
    query: dict[str, str] = {}
    body: dict[str, Any] | None = None
    headers: dict[str, str] = {"Accept": "application/json"}
    for name, spec in tool.params:
        if name not in bound:
            continue
        value = bound[name]
        location = spec.location or "query"
        if location == "path":
            rendered = _query_str(value)
            if not rendered or _PATH_FORBIDDEN.search(rendered):
                raise PathInjection(
                    f"value for path parameter {name!r} would alter the route: {rendered!r}")
            path = path.replace("{" + name + "}", quote(rendered, safe=""))
        elif location == "query":
            # lists pass through so the client encodes repeated keys
            query[name] = value if isinstance(value, list) else _query_str(value)
        elif location == "header":
            headers[name] = _query_str(value)
        else:
            body = body or {}
            body[name] = value
    for key, value in (page_params or {}).items():
        query[key] = value
    url = url_override if url_override is not None else tool.base_url + path
    return PreparedRequest(
        method=tool.method,
        url=url,
        headers=headers,
        query=query,
        json_body=body,
        timeout=tool.timeout,
    )


# --- authentication strategies ------------------------------------------------


class _BearerStrategy:
    def __init__(self, auth: BearerAuth, resolver: CredentialResolver):
        self.auth = auth
        self.resolver = resolver

    def apply(self, engine: "HttpEngine", inv: "_Invocation",
              request: PreparedRequest) -> None:
        token = self.resolver.resolve(self.auth.credential).reveal()
        request.headers[self.auth.header_name] = f"{self.auth.prefix}{token}"

    def on_auth_failure(self, engine, inv, status) -> bool:
        return False


class _BasicStrategy:
    def __init__(self, auth: BasicAuth, resolver: CredentialResolver):
        self.auth = auth
        self.resolver = resolver

    def apply(self, engine, inv, request: PreparedRequest) -> None:
        user = self.resolver.resolve(self.auth.username).reveal()
        password = self.resolver.resolve(self.auth.password).reveal()
        blob = base64.b64encode(f"{user}:{password}".encode()).decode()
        request.headers["Authorization"] = f"Basic {blob}"

    def on_auth_failure(self, engine, inv, status) -> bool:
        return False


class _ApiKeyStrategy:
    def __init__(self, auth: ApiKeyAuth, resolver: CredentialResolver):
        self.auth = auth
        self.resolver = resolver

    def apply(self, engine, inv, request: PreparedRequest) -> None:
        value = self.resolver.resolve(self.auth.credential).reveal()
        if self.auth.placement == "header":
            request.headers[self.auth.name] = value
        else:
            request.query[self.auth.name] = value

    def on_auth_failure(self, engine, inv, status) -> bool:
        return False


class _OAuthStrategy:
    """Client-credentials tokens with proactive refresh and a single-flight
    fetch: concurrent invocations needing a token block on one lock while the
    first caller talks to the token endpoint."""

    def __init__(self, auth: OAuth2ClientCredentials, resolver: CredentialResolver):
        self.auth = auth
        self.resolver = resolver
        self._lock = threading.Lock()
        self._token: str | None = None
        self._expires_at: float = 0.0

    def apply(self, engine, inv, request: PreparedRequest) -> None:
        request.headers["Authorization"] = f"Bearer {self._get_token(engine, inv)}"

    def _get_token(self, engine: "HttpEngine", inv: "_Invocation",
                   force: bool = False) -> str:
        with self._lock:
            now = engine.monotonic()
            if force:
                self._token = None
            if self._token is not None and now < self._expires_at - self.auth.refresh_margin:
                return self._token
            form = {
                "grant_type": "client_credentials",
                "client_id": self.resolver.resolve(self.auth.client_id).reveal(),
                "client_secret": self.resolver.resolve(self.auth.client_secret).reveal(),
            }
            if self.auth.scopes:
                form["scope"] = " ".join(self.auth.scopes)
            started = engine.monotonic()
            try:
                response = engine.session.post(
                    self.auth.token_url, data=form, timeout=inv.tool.timeout)
            except requests.RequestException as exc:
                raise TokenEndpointError(None, f"token endpoint unreachable: {exc}") from None
            inv.count_request(
                method="POST", path=urlsplit(self.auth.token_url).path,
                status=response.status_code,
                duration_ms=(engine.monotonic() - started) * 1000.0,
                bytes_in=len(response.content), outcome="token_fetch")
            if response.status_code < 200 or response.status_code >= 300:
                raise TokenEndpointError(
                    response.status_code,
                    f"token endpoint answered {response.status_code}")
            payload = response.json()
            token = payload.get("access_token")
            if not token:
                raise TokenEndpointError(response.status_code,
                                         "token endpoint response has no access_token")
            self._token = token
            self._expires_at = engine.monotonic() + float(payload.get("expires_in", 3600))
            return token

    def on_auth_failure(self, engine, inv, status) -> bool:
        if status != 401 or inv.reauthed:
            return False
        inv.reauthed = True
        self._get_token(engine, inv, force=True)
        return True


class _SessionStrategy:
    """Login-call sessions: lazily logs in, re-logs in at most once per
    invocation when the upstream answers with a relogin status."""

    def __init__(self, auth: SessionAuth, resolver: CredentialResolver):
        self.auth = auth
        self.resolver = resolver
        self._lock = threading.Lock()
        self._token: str | None = None
        self._generation = 0

    def apply(self, engine, inv, request: PreparedRequest) -> None:
        with self._lock:
            token, generation = self._token, self._generation
        if token is None:
            token, generation = self._login(engine, inv, generation)
        inv.auth_generation = generation
        request.headers[self.auth.token_header] = token

    def _login(self, engine: "HttpEngine", inv: "_Invocation",
               seen_generation: int) -> tuple[str, int]:
        with self._lock:
            if self._token is not None and self._generation != seen_generation:
                return self._token, self._generation  # another thread already did it
            body = {}
            for key, value in self.auth.login.body:
                if hasattr(value, "ref"):
                    body[key] = self.resolver.resolve(value).reveal()
                else:
                    body[key] = value
            url = inv.tool.base_url + self.auth.login.path
            started = engine.monotonic()
            try:
                response = engine.session.request(
                    self.auth.login.method, url, json=body, timeout=inv.tool.timeout)
            except requests.RequestException as exc:
                raise LoginFailed(None, f"login call failed: {exc}") from None
            inv.count_request(
                method=self.auth.login.method, path=self.auth.login.path,
                status=response.status_code,
                duration_ms=(engine.monotonic() - started) * 1000.0,
                bytes_in=len(response.content), outcome="login")
            if response.status_code < 200 or response.status_code >= 300:
                raise LoginFailed(response.status_code,
                                  f"login answered {response.status_code}")
            try:
                payload = response.json()
            except ValueError:
                raise LoginFailed(response.status_code, "login response is not JSON") from None
            token, matched = jsonpath.evaluate(payload, self.auth.token_extract)
            if not matched or not token:
                raise TokenExtractEmpty(
                    f"login response has nothing at {self.auth.token_extract!r}")
            self._token = str(token)
            self._generation += 1
            return self._token, self._generation

    def on_auth_failure(self, engine, inv, status) -> bool:
        if status not in self.auth.relogin_on or inv.relogged:
            return False
        inv.relogged = True
        token, generation = self._login(engine, inv, inv.auth_generation)
        inv.auth_generation = generation
        inv.pending_headers[self.auth.token_header] = token
        return True


def _make_strategy(document: DadlDocument, resolver: CredentialResolver):
    auth = document.auth
    if isinstance(auth, BearerAuth):
        return _BearerStrategy(auth, resolver)
    if isinstance(auth, BasicAuth):
        return _BasicStrategy(auth, resolver)
    if isinstance(auth, ApiKeyAuth):
        return _ApiKeyStrategy(auth, resolver)
    if isinstance(auth, OAuth2ClientCredentials):
        return _OAuthStrategy(auth, resolver)
    return _SessionStrategy(auth, resolver)


# --- proactive rate gate ------------------------------------------------------


class RateGate:
    """Keeps concurrent invocations from sending a request the quota cannot
    absorb.  Tracks the last advertised remaining count minus requests in
    flight; when the prediction dips below the pause threshold, callers wait
    for either an in-flight completion or the advertised reset."""

    def __init__(self, pause_threshold: int, *, monotonic=time.monotonic):
        self.pause_threshold = pause_threshold
        self.monotonic = monotonic
        self._cv = threading.Condition()
        self._remaining: int | None = None
        self._in_flight = 0
        self._resume_at: float | None = None

    def acquire(self) -> None:
        with self._cv:
            while True:
                now = self.monotonic()
                if self._resume_at is not None:
                    if now < self._resume_at:
                        self._cv.wait(min(self._resume_at - now, 0.05))
                        continue
                    self._resume_at = None
                    self._remaining = None
                if self._remaining is None:
                    if self._in_flight == 0:
                        # first request probes the quota before fan-out
                        self._in_flight += 1
                        return
                elif self._remaining - self._in_flight >= self.pause_threshold:
                    self._in_flight += 1
                    return
                self._cv.wait(0.05)

    def release(self, remaining: int | None, retry_after: float | None,
                status: int | None) -> None:
        with self._cv:
            self._in_flight = max(0, self._in_flight - 1)
            if status == 429:
                self._remaining = 0
                self._resume_at = self.monotonic() + (retry_after if retry_after else 1.0)
            elif remaining is not None:
                self._remaining = remaining
                if remaining < self.pause_threshold:
                    self._resume_at = self.monotonic() + (retry_after if retry_after else 1.0)
            self._cv.notify_all()


# --- engine -------------------------------------------------------------------


@dataclass
class _Invocation:
    tool: ResolvedTool
    ctx: ExecutionContext
    requests_made: int = 0
    bytes_in: int = 0
    last_status: int | None = None
    reauthed: bool = False
    relogged: bool = False
    auth_generation: int = 0
    pending_headers: dict[str, str] = field(default_factory=dict)

    def count_request(self, **kwargs) -> None:
        self.requests_made += 1
        self.bytes_in += kwargs.get("bytes_in") or 0
        self.last_status = kwargs.get("status")
        self.ctx.log_request(attempt=kwargs.pop("attempt", 1), **kwargs)


class HttpEngine:
    def __init__(self, document: DadlDocument, resolver: CredentialResolver, *,
                 session: requests.Session | None = None,
                 sleep=time.sleep, monotonic=time.monotonic,
                 rng: random.Random | None = None):
        self.document = document
        self.resolver = resolver
        self.sleep = sleep
        self.monotonic = monotonic
        self.rng = rng if rng is not None else random.Random()
        if session is None:
            session = requests.Session()
            adapter = requests.adapters.HTTPAdapter(pool_connections=4, pool_maxsize=32)
            session.mount("http://", adapter)
            session.mount("https://", adapter)
        self.session = session
        self.strategy = _make_strategy(document, resolver)
        self._resolved: dict[str, ResolvedTool] = {}
        self._gates: dict[tuple, RateGate] = {}
        self._gates_lock = threading.Lock()

    # --- public ---------------------------------------------------------------

    def resolved(self, tool_name: str) -> ResolvedTool:
        if tool_name not in self._resolved:
            self._resolved[tool_name] = effective_tool(self.document, tool_name)
        return self._resolved[tool_name]

    def execute_tool(self, tool_name: str, params: Mapping[str, Any] | None,
                     ctx: ExecutionContext, jq_override: str | None = None) -> ToolResult:
        if tool_name not in self.document.tool_map():
            raise UnknownTool(f"no tool {tool_name!r} in backend {self.document.backend.name!r}")
        tool = self.resolved(tool_name)
        self._require_context(ctx, tool)
        bound = bind_params(tool, params)
        cursor_in = (params or {}).get(CURSOR_PARAM)
        if cursor_in is not None and not self._exposes_cursor(tool):
            raise UnknownParam(
                f"{tool_name} does not expose pagination; {CURSOR_PARAM!r} is not accepted")
        inv = _Invocation(tool=tool, ctx=ctx)

        pagination = tool.pagination
        if pagination is None:
            body, pages, truncated, next_cursor = self._single_page(inv, tool, bound), 1, False, None
        elif pagination.behavior == "auto":
            body, pages, truncated = self._paginate_auto(inv, tool, pagination, bound)
            next_cursor = None
        else:
            body, next_cursor = self._paginate_expose(inv, tool, pagination, bound, cursor_in)
            pages, truncated = 1, False

        shaped = transform.run_for_tool(body, tool, jq_override)
        return ToolResult(
            value=shaped.value,
            truncated=truncated or shaped.truncated,
            warnings=shaped.warnings,
            next_cursor=next_cursor,
            pages=pages,
            requests=inv.requests_made,
            status=inv.last_status,
            bytes_in=inv.bytes_in,
            bytes_out=shaped.output_bytes,
        )

    # --- internals ------------------------------------------------------------

    def _require_context(self, ctx: ExecutionContext, tool: ResolvedTool) -> None:
        if ctx is None or not isinstance(ctx, ExecutionContext):
            raise AuthzDenied("tool execution requires an authorization context")
        if not ctx.decision.allowed:
            raise AuthzDenied("execution context carries a deny decision")
        if ctx.backend != self.document.backend.name:
            raise AuthzDenied(
                f"context was minted for backend {ctx.backend!r}, "
                f"not {self.document.backend.name!r}")

    def _exposes_cursor(self, tool: ResolvedTool) -> bool:
        return tool.pagination is not None and tool.pagination.behavior == "expose"

    def _gate_for(self, tool: ResolvedTool) -> RateGate | None:
        policy = tool.rate_limit
        if policy is None:
            return None
        if policy.shared_per_credential:
            key = ("cred", tool.credential_refs)
        else:
            key = ("tool", tool.tool_name)
        with self._gates_lock:
            if key not in self._gates:
                self._gates[key] = RateGate(policy.pause_threshold, monotonic=self.monotonic)
            return self._gates[key]

    def _single_page(self, inv: _Invocation, tool: ResolvedTool,
                     bound: Mapping[str, Any]) -> Any:
        response = self._perform(inv, build_request(tool, bound))
        return self._json_body(response)

    def _json_body(self, response: requests.Response) -> Any:
        if not response.content:
            return None
        try:
            return response.json()
        except ValueError:
            raise UpstreamTerminal(
                response.status_code,
                f"upstream returned a non-JSON body ({response.headers.get('Content-Type')})",
            ) from None

    # pagination ---------------------------------------------------------------

    def _page_request_params(self, cfg: PaginationConfig, state: dict) -> dict[str, str]:
        out: dict[str, str] = {}
        size_param = cfg.request_param("size") or cfg.request_param("limit")
        if cfg.strategy == "offset":
            out[cfg.request_param("offset")] = str(state["offset"])
            if size_param:
                out[size_param] = str(cfg.page_size)
        elif cfg.strategy == "page":
            out[cfg.request_param("page")] = str(state["page"])
            if size_param:
                out[size_param] = str(cfg.page_size)
        elif cfg.strategy == "cursor":
            if state.get("cursor"):
                out[cfg.request_param("cursor")] = state["cursor"]
            if size_param:
                out[size_param] = str(cfg.page_size)
        return out

    def _extract_items(self, cfg: PaginationConfig, body: Any) -> list:
        items_path = cfg.response_path("items")
        if items_path:
            value, matched = jsonpath.evaluate(body, items_path)
            if not matched:
                return []
            if not isinstance(value, list):
                raise PaginationError(
                    f"items path {items_path!r} produced {type(value).__name__}, not a list")
            return value
        if isinstance(body, list):
            return body
        raise PaginationError(
            "paginated response is not a list and no items path is declared")

    def _check_next_url(self, url: str, tool: ResolvedTool, expected_path: str) -> str:
        """Next-page URLs are fetched with credentials attached, so they must
        stay on the backend origin and on the same path they came from."""
        base = urlsplit(tool.base_url)
        nxt = urlsplit(url)
        if (nxt.scheme, nxt.netloc) != (base.scheme, base.netloc):
            raise MalformedLinkHeader(
                f"next link {url!r} leaves origin {base.scheme}://{base.netloc}")
        if nxt.path != expected_path:
            raise MalformedLinkHeader(
                f"next link path {nxt.path!r} differs from {expected_path!r}")
        return url

    def _paginate_auto(self, inv: _Invocation, tool: ResolvedTool,
                       cfg: PaginationConfig, bound: Mapping[str, Any]):
        items: list = []
        state: dict[str, Any] = {"offset": 0, "page": 1, "cursor": None, "url": None}
        pages = 0
        truncated = False
        while True:
            request = build_request(tool, bound,
                                    page_params=self._page_request_params(cfg, state),
                                    url_override=state["url"])
            response = self._perform(inv, request)
            body = self._json_body(response)
            page_items = self._extract_items(cfg, body)
            items.extend(page_items)
            pages += 1
            has_next, state = self._advance(cfg, tool, state, body, page_items, response)
            if not has_next:
                break
            if pages >= cfg.max_pages:
                truncated = True
                break
        return items, pages, truncated

    def _advance(self, cfg: PaginationConfig, tool: ResolvedTool, state: dict,
                 body: Any, page_items: list, response: requests.Response):
        if cfg.strategy == "offset":
            if len(page_items) < cfg.page_size:
                return False, state
            state = dict(state, offset=state["offset"] + cfg.page_size)
            return True, state
        if cfg.strategy == "page":
            if len(page_items) < cfg.page_size:
                return False, state
            state = dict(state, page=state["page"] + 1)
            return True, state
        if cfg.strategy == "cursor":
            token, matched = jsonpath.evaluate(body, cfg.response_path("next_cursor"))
            if not matched or token in (None, ""):
                return False, state
            return True, dict(state, cursor=str(token))
        # link_header
        header = response.headers.get("Link")
        if not header:
            return False, state
        nxt = parse_link_next(header)
        if nxt is None:
            return False, state
        current_path = urlsplit(response.url).path
        return True, dict(state, url=self._check_next_url(nxt, tool, current_path))

    def _paginate_expose(self, inv: _Invocation, tool: ResolvedTool,
                         cfg: PaginationConfig, bound: Mapping[str, Any],
                         cursor_in: Any):
        state: dict[str, Any] = {"offset": 0, "page": 1, "cursor": None, "url": None}
        if cursor_in is not None:
            cursor_text = str(cursor_in)
            if cfg.strategy == "offset":
                try:
                    state["offset"] = int(cursor_text)
                except ValueError:
                    raise PaginationError(f"bad {CURSOR_PARAM}: {cursor_text!r}") from None
            elif cfg.strategy == "page":
                try:
                    state["page"] = int(cursor_text)
                except ValueError:
                    raise PaginationError(f"bad {CURSOR_PARAM}: {cursor_text!r}") from None
            elif cfg.strategy == "cursor":
                state["cursor"] = cursor_text
            else:
                probe = build_request(tool, bound)
                state["url"] = self._check_next_url(
                    cursor_text, tool, urlsplit(probe.url).path)

        request = build_request(tool, bound,
                                page_params=self._page_request_params(cfg, state),
                                url_override=state["url"])
        response = self._perform(inv, request)
        body = self._json_body(response)
        page_items = self._extract_items(cfg, body)
        has_next, nxt_state = self._advance(cfg, tool, state, body, page_items, response)
        next_cursor: str | None = None
        if has_next:
            if cfg.strategy == "offset":
                next_cursor = str(nxt_state["offset"])
            elif cfg.strategy == "page":
                next_cursor = str(nxt_state["page"])
            elif cfg.strategy == "cursor":
                next_cursor = nxt_state["cursor"]
            else:
                next_cursor = nxt_state["url"]
        return page_items, next_cursor

    # wire ---------------------------------------------------------------------

    def _perform(self, inv: _Invocation, request: PreparedRequest) -> requests.Response:
        """One logical request: auth, redirects, retries, rate pausing."""
        policy = inv.tool.error_policy
        attempt = 1
        redirect_hops = 0
        while True:
            try:
                self.strategy.apply(self, inv, request)
            except CredentialError:
                raise
            except (TokenEndpointError, LoginFailed, TokenExtractEmpty):
                raise
            except Exception as exc:
                raise CredentialResolution(f"cannot prepare credentials: {exc}") from exc
            request.headers.update(inv.pending_headers)
            inv.pending_headers.clear()

            gate = self._gate_for(inv.tool)
            if gate is not None:
                gate.acquire()
            started = self.monotonic()
            try:
                response = self.session.request(
                    request.method, request.url, params=request.query,
                    headers=request.headers, json=request.json_body,
                    timeout=request.timeout, allow_redirects=False)
            except requests.RequestException as exc:
                if gate is not None:
                    gate.release(None, None, None)
                inv.count_request(method=request.method, path=urlsplit(request.url).path,
                                  status=None, attempt=attempt,
                                  duration_ms=(self.monotonic() - started) * 1000.0,
                                  outcome=f"network_error:{type(exc).__name__}")
                if attempt >= policy.retry.max_attempts:
                    raise RetriesExhausted(None, attempt) from exc
                self.sleep(backoff_delay(policy.retry, attempt, None, self.rng))
                attempt += 1
                continue
            retry_after = parse_retry_after(
                response.headers.get(self._retry_after_header(inv.tool)))
            if gate is not None:
                gate.release(self._remaining_from(inv.tool, response), retry_after,
                             response.status_code)
            inv.count_request(method=request.method, path=urlsplit(request.url).path,
                              status=response.status_code, attempt=attempt,
                              duration_ms=(self.monotonic() - started) * 1000.0,
                              bytes_in=len(response.content), outcome="response")

            status = response.status_code
            if status in _REDIRECT_STATUSES:
                redirect_hops += 1
                if redirect_hops > MAX_REDIRECTS:
                    raise UpstreamTerminal(status, f"more than {MAX_REDIRECTS} redirects")
                request = self._redirect(inv, request, response)
                continue

            verdict = classify_response(status, policy)
            if verdict == "success":
                return response
            if self.strategy.on_auth_failure(self, inv, status):
                continue
            if verdict == "retryable":
                if attempt >= policy.retry.max_attempts:
                    raise RetriesExhausted(status, attempt)
                self.sleep(backoff_delay(policy.retry, attempt, retry_after, self.rng))
                attempt += 1
                continue
            raise UpstreamTerminal(status, self._error_message(inv.tool, response))

    def _redirect(self, inv: _Invocation, request: PreparedRequest,
                  response: requests.Response) -> PreparedRequest:
        location = response.headers.get("Location")
        if not location:
            raise UpstreamTerminal(response.status_code, "redirect without Location")
        base = urlsplit(inv.tool.base_url)
        if location.startswith("/"):
            location = f"{base.scheme}://{base.netloc}{location}"
        target = urlsplit(location)
        if (target.scheme, target.netloc) != (base.scheme, base.netloc):
            raise UpstreamTerminal(
                response.status_code,
                f"cross-origin redirect to {target.scheme}://{target.netloc} refused")
        method = request.method
        body = request.json_body
        if response.status_code == 303 or (
                response.status_code in (301, 302) and method not in ("GET", "HEAD")):
            method, body = "GET", None
        return PreparedRequest(
            method=method, url=location, headers=dict(request.headers),
            query={}, json_body=body, timeout=request.timeout)

    def _retry_after_header(self, tool: ResolvedTool) -> str:
        if tool.rate_limit is not None:
            return tool.rate_limit.retry_after_header
        return "Retry-After"

    def _remaining_from(self, tool: ResolvedTool, response: requests.Response) -> int | None:
        if tool.rate_limit is None:
            return None
        raw = response.headers.get(tool.rate_limit.remaining_header)
        if raw is None:
            return None
        try:
            return int(raw)
        except ValueError:
            return None

    def _error_message(self, tool: ResolvedTool, response: requests.Response) -> str:
        try:
            body = response.json()
        except ValueError:
            body = None
        if body is not None:
            message, matched = jsonpath.evaluate(body, tool.error_policy.message_path)
            if matched and isinstance(message, str) and message:
                return message
        text = response.text.strip()
        return text[:200] if text else f"upstream answered {response.status_code}"
