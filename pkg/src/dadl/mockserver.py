"""A local HTTP upstream for conformance tests and `toolctl measure` runs.

Routes are concrete (method, path) pairs mapped to small handler callables.
Pagination, auth checks, scripted failures, and rate limiting are implemented
here from first principles, independent of the client engine, so the two
sides of every conformance test are derived separately.

Everything records into an append-only request log; tests assert against the
log rather than instrumenting the client.
"""

from __future__ import annotations

import base64
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable
from urllib.parse import parse_qsl, urlsplit


@dataclass
class Request:
    n: int                 # global arrival order, 1-based
    route_n: int           # arrival order on this route, 1-based
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: Any


@dataclass
class Response:
    status: int = 200
    body: Any = None
    headers: dict[str, str] = field(default_factory=dict)
    raw: bytes | None = None  # overrides body when set (malformed payload tests)


Handler = Callable[[Request, "MockUpstream"], Response]


class MockUpstream:
    """Threaded HTTP server bound to an ephemeral localhost port."""

    def __init__(self):
        self.routes: dict[tuple[str, str], Handler] = {}
        self.route_counts: dict[tuple[str, str], int] = {}
        self.log: list[Request] = []
        self.auth_check: Callable[[Request], Response | None] | None = None
        self.rate_limiter: RateLimiter | None = None
        self._lock = threading.Lock()
        self._counter = 0

        upstream = self

        class _Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _run(self):
                upstream._dispatch(self)

            do_GET = do_POST = do_PUT = do_PATCH = do_DELETE = do_HEAD = _run

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    # --- lifecycle ------------------------------------------------------------

    def start(self) -> "MockUpstream":
        self._thread.start()
        return self

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self) -> "MockUpstream":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    # --- wiring ---------------------------------------------------------------

    def route(self, method: str, path: str, handler: Handler) -> None:
        key = (method.upper(), path)
        self.routes[key] = handler
        self.route_counts.setdefault(key, 0)

    def json(self, method: str, path: str, body: Any, status: int = 200,
             headers: dict[str, str] | None = None) -> None:
        self.route(method, path, static(body, status=status, headers=headers))

    def requests_for(self, path: str) -> list[Request]:
        return [r for r in self.log if r.path == path]

    def count(self, path: str | None = None) -> int:
        if path is None:
            return len(self.log)
        return len(self.requests_for(path))

    # --- dispatch -------------------------------------------------------------

    def _dispatch(self, h: BaseHTTPRequestHandler) -> None:
        split = urlsplit(h.path)
        method = h.command.upper()
        key = (method, split.path)
        length = int(h.headers.get("Content-Length") or 0)
        raw_body = h.rfile.read(length) if length else b""
        try:
            body = json.loads(raw_body) if raw_body else None
        except ValueError:
            body = raw_body.decode("utf-8", "replace")

        with self._lock:
            self._counter += 1
            self.route_counts[key] = self.route_counts.get(key, 0) + 1
            request = Request(
                n=self._counter,
                route_n=self.route_counts[key],
                method=method,
                path=split.path,
                query=dict(parse_qsl(split.query)),
                headers={k.lower(): v for k, v in h.headers.items()},
                body=body,
            )
            self.log.append(request)

        response = self._respond(request, key)
        payload = response.raw if response.raw is not None else (
            b"" if response.body is None
            else json.dumps(response.body).encode())
        try:
            h.send_response(response.status)
            for name, value in response.headers.items():
                h.send_header(name, value)
            if "Content-Type" not in response.headers and response.raw is None:
                h.send_header("Content-Type", "application/json")
            h.send_header("Content-Length", str(len(payload)))
            h.end_headers()
            if method != "HEAD":
                h.wfile.write(payload)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _respond(self, request: Request, key: tuple[str, str]) -> Response:
        if self.rate_limiter is not None:
            limited = self.rate_limiter.admit(request)
            if limited is not None:
                return limited
        handler = self.routes.get(key)
        if handler is None:
            return Response(404, {"message": f"no route for {key[0]} {key[1]}"})
        if self.auth_check is not None and not getattr(handler, "skip_auth", False):
            rejection = self.auth_check(request)
            if rejection is not None:
                return self._finish(rejection)
        return self._finish(handler(request, self))

    def _finish(self, response: Response) -> Response:
        if self.rate_limiter is not None:
            self.rate_limiter.stamp(response)
        return response


# --- handler factories --------------------------------------------------------


def static(body: Any, status: int = 200, headers: dict[str, str] | None = None) -> Handler:
    def handle(request: Request, upstream: MockUpstream) -> Response:
        return Response(status, body, dict(headers or {}))
    return handle


def raw_bytes(payload: bytes, status: int = 200,
              content_type: str = "text/plain") -> Handler:
    def handle(request: Request, upstream: MockUpstream) -> Response:
        return Response(status, None, {"Content-Type": content_type}, raw=payload)
    return handle


def sequence(responses: list[Response]) -> Handler:
    """The nth request on the route gets responses[n-1]; the last one sticks."""
    def handle(request: Request, upstream: MockUpstream) -> Response:
        idx = min(request.route_n, len(responses)) - 1
        return responses[idx]
    return handle


def scripted(script: list[dict], inner: Handler) -> Handler:
    """Inject failures by arrival order: each script entry is
    ``{"on_request_n": k, "status": s}`` with optional body/headers/raw.
    Requests not named in the script fall through to the inner handler."""
    by_n = {entry["on_request_n"]: entry for entry in script}

    def handle(request: Request, upstream: MockUpstream) -> Response:
        entry = by_n.get(request.route_n)
        if entry is None:
            return inner(request, upstream)
        return Response(
            entry["status"],
            entry.get("body", {"message": f"scripted failure {entry['status']}"}),
            dict(entry.get("headers", {})),
            raw=entry.get("raw"),
        )
    return handle


def echo() -> Handler:
    """Reflects the request back; used to assert what actually went on the wire."""
    def handle(request: Request, upstream: MockUpstream) -> Response:
        return Response(200, {
            "method": request.method,
            "path": request.path,
            "query": request.query,
            "body": request.body,
        })
    return handle


# --- pagination (server side, written independently of the client) ------------


def cursor_token(index: int) -> str:
    return base64.urlsafe_b64encode(f"idx:{index}".encode()).decode()


def _decode_cursor(token: str) -> int:
    text = base64.urlsafe_b64decode(token.encode()).decode()
    if not text.startswith("idx:"):
        raise ValueError(f"bad cursor {token!r}")
    return int(text[4:])


def paginated_offset(items: list, *, offset_param: str = "offset",
                     size_param: str | None = "limit", page_size: int = 3,
                     items_key: str | None = "items") -> Handler:
    def handle(request: Request, upstream: MockUpstream) -> Response:
        start = int(request.query.get(offset_param, 0))
        size = int(request.query.get(size_param, page_size)) if size_param else page_size
        chunk = items[start:start + size]
        body = chunk if items_key is None else {items_key: chunk, "total": len(items)}
        return Response(200, body)
    return handle


def paginated_page(items: list, *, page_param: str = "page", page_size: int = 3,
                   items_key: str | None = "items", first_page: int = 1) -> Handler:
    def handle(request: Request, upstream: MockUpstream) -> Response:
        page = int(request.query.get(page_param, first_page))
        start = (page - first_page) * page_size
        chunk = items[start:start + page_size]
        body = chunk if items_key is None else {items_key: chunk}
        return Response(200, body)
    return handle


def paginated_cursor(items: list, *, cursor_param: str = "cursor", page_size: int = 3,
                     items_key: str = "items", next_key: str = "next_cursor") -> Handler:
    def handle(request: Request, upstream: MockUpstream) -> Response:
        start = 0
        token = request.query.get(cursor_param)
        if token:
            start = _decode_cursor(token)
        chunk = items[start:start + page_size]
        body = {items_key: chunk}
        if start + page_size < len(items):
            body[next_key] = cursor_token(start + page_size)
        return Response(200, body)
    return handle


def paginated_link(items: list, path: str, *, page_param: str = "page",
                   page_size: int = 3, items_key: str | None = None) -> Handler:
    """RFC 8288 style: absolute Link header with rel="next" while more remain."""
    def handle(request: Request, upstream: MockUpstream) -> Response:
        page = int(request.query.get(page_param, 1))
        start = (page - 1) * page_size
        chunk = items[start:start + page_size]
        headers = {}
        if start + page_size < len(items):
            nxt = f"{upstream.base_url}{path}?{page_param}={page + 1}"
            headers["Link"] = f'<{nxt}>; rel="next"'
        body = chunk if items_key is None else {items_key: chunk}
        return Response(200, body, headers)
    return handle


# --- auth simulators ----------------------------------------------------------


def require_bearer(token: str, header: str = "authorization",
                   prefix: str = "Bearer ") -> Callable[[Request], Response | None]:
    def check(request: Request) -> Response | None:
        if request.headers.get(header.lower()) != f"{prefix}{token}":
            return Response(401, {"message": "bad or missing bearer token"})
        return None
    return check


def require_basic(expected_b64: str) -> Callable[[Request], Response | None]:
    def check(request: Request) -> Response | None:
        if request.headers.get("authorization") != f"Basic {expected_b64}":
            return Response(401, {"message": "bad basic credentials"})
        return None
    return check


def require_api_key(name: str, value: str, placement: str) -> Callable[[Request], Response | None]:
    def check(request: Request) -> Response | None:
        if placement == "header":
            got = request.headers.get(name.lower())
        else:
            got = request.query.get(name)
        if got != value:
            return Response(401, {"message": "bad or missing api key"})
        return None
    return check


class OAuthSim:
    """Client-credentials token endpoint plus bearer validation.

    Tracks how many tokens were minted so tests can assert on single-flight
    behavior; ``revoke_all`` forces the next API call to 401.
    """

    def __init__(self, client_id: str, client_secret: str, *, expires_in: int = 3600,
                 token_path: str = "/oauth/token"):
        self.client_id = client_id
        self.client_secret = client_secret
        self.expires_in = expires_in
        self.token_path = token_path
        self.token_fetches = 0
        self.valid_tokens: set[str] = set()
        self.scopes_seen: list[str] = []
        self._lock = threading.Lock()

    def install(self, upstream: MockUpstream) -> None:
        def token_endpoint(request: Request, server: MockUpstream) -> Response:
            return self._token_endpoint(request, server)
        token_endpoint.skip_auth = True
        upstream.route("POST", self.token_path, token_endpoint)
        upstream.auth_check = self._check

    def _token_endpoint(self, request: Request, upstream: MockUpstream) -> Response:
        form = request.body
        if isinstance(form, str):
            form = dict(parse_qsl(form))
        if not isinstance(form, dict) or form.get("grant_type") != "client_credentials" \
                or form.get("client_id") != self.client_id \
                or form.get("client_secret") != self.client_secret:
            return Response(401, {"error": "invalid_client"})
        with self._lock:
            self.token_fetches += 1
            token = f"at-{uuid.uuid4().hex[:10]}"
            self.valid_tokens.add(token)
            if form.get("scope"):
                self.scopes_seen.append(form["scope"])
        return Response(200, {"access_token": token, "token_type": "Bearer",
                              "expires_in": self.expires_in})

    def _check(self, request: Request) -> Response | None:
        auth = request.headers.get("authorization", "")
        if not auth.startswith("Bearer ") or auth[7:] not in self.valid_tokens:
            return Response(401, {"message": "invalid or expired access token"})
        return None

    def revoke_all(self) -> None:
        with self._lock:
            self.valid_tokens.clear()


class SessionSim:
    """Login endpoint issuing opaque session tokens checked on a header.

    ``expire_all`` simulates a server-side session purge so the next request
    comes back 401 and the client has to log in again.
    """

    def __init__(self, username: str, password: str, *, login_path: str = "/login",
                 token_field: str = "token", header: str = "X-Auth-Token"):
        self.username = username
        self.password = password
        self.login_path = login_path
        self.token_field = token_field
        self.header = header.lower()
        self.login_count = 0
        self.active: set[str] = set()
        self._lock = threading.Lock()

    def install(self, upstream: MockUpstream) -> None:
        def login(request: Request, server: MockUpstream) -> Response:
            return self._login(request, server)
        login.skip_auth = True
        upstream.route("POST", self.login_path, login)
        upstream.auth_check = self._check

    def _login(self, request: Request, upstream: MockUpstream) -> Response:
        body = request.body or {}
        if not isinstance(body, dict) or body.get("username") != self.username \
                or body.get("password") != self.password:
            return Response(403, {"message": "bad login"})
        with self._lock:
            self.login_count += 1
            token = f"sess-{uuid.uuid4().hex[:10]}"
            self.active.add(token)
        return Response(200, {self.token_field: token})

    def _check(self, request: Request) -> Response | None:
        if request.headers.get(self.header) not in self.active:
            return Response(401, {"message": "session expired"})
        return None

    def expire_all(self) -> None:
        with self._lock:
            self.active.clear()


# --- rate limiting ------------------------------------------------------------


class RateLimiter:
    """Fixed quota with a reset window.

    Requests arriving while the quota reads exhausted are counted in
    ``over_quota`` (the number a well-behaved client must keep at zero) and
    answered 429 with Retry-After.  After the window passes, the quota refills.
    """

    def __init__(self, limit: int, *, reset_seconds: float = 1.0,
                 remaining_header: str = "X-RateLimit-Remaining",
                 retry_after_header: str = "Retry-After",
                 clock: Callable[[], float] = time.monotonic):
        self.limit = limit
        self.reset_seconds = reset_seconds
        self.remaining_header = remaining_header
        self.retry_after_header = retry_after_header
        self.clock = clock
        self.remaining = limit
        self.over_quota = 0
        self.exhausted_at: float | None = None
        self._last_remaining = limit
        self._lock = threading.Lock()

    def admit(self, request: Request) -> Response | None:
        with self._lock:
            now = self.clock()
            if self.exhausted_at is not None:
                if now - self.exhausted_at >= self.reset_seconds:
                    self.remaining = self.limit
                    self.exhausted_at = None
                else:
                    self.over_quota += 1
                    wait = self.reset_seconds - (now - self.exhausted_at)
                    self._last_remaining = 0
                    return Response(429, {"message": "rate limit exceeded"}, {
                        self.remaining_header: "0",
                        self.retry_after_header: str(max(1, int(wait + 0.999))),
                    })
            self.remaining -= 1
            self._last_remaining = self.remaining
            if self.remaining <= 0:
                self.exhausted_at = now
            return None

    def stamp(self, response: Response) -> None:
        with self._lock:
            response.headers.setdefault(self.remaining_header, str(max(0, self._last_remaining)))
            if self.exhausted_at is not None:
                wait = self.reset_seconds - (self.clock() - self.exhausted_at)
                response.headers.setdefault(self.retry_after_header,
                                            str(max(1, int(wait + 0.999))))


# --- canned datasets ----------------------------------------------------------


DEVICES = [
    {"id": "d1", "name": "Living Room Lamp"},
    {"id": "d2", "name": "Heater"},
]

DEVICE_STATUS = [
    {"id": "d1", "relay_on": True, "power_w": 12.5},
    {"id": "d2", "relay_on": False, "power_w": 0.0},
]

HN_ITEMS = {
    10: {"id": 10, "type": "story", "title": "Show: a tiny database",
         "by": "ada", "kids": [11, 12, 13], "score": 98},
    11: {"id": 11, "type": "comment", "by": "sam", "text": "Neat idea."},
    12: {"id": 12, "type": "comment", "deleted": True},
    13: {"id": 13, "type": "comment", "by": "kim", "text": "How does it scale?"},
    14: {"id": 14, "type": "story", "title": "No comments here", "by": "lee", "score": 5},
}


def search_hit(i: int, pad: int = 900) -> dict:
    """A search hit with bulky engine metadata, for projection measurements."""
    return {
        "objectID": f"obj-{i}",
        "title": f"Result {i}",
        "url": f"https://example.com/r/{i}",
        "_highlightResult": {"title": {"value": f"<em>Result {i}</em>", "pad": "h" * pad}},
        "_rankingInfo": {"nbTypos": 0, "userScore": i, "pad": "r" * pad},
        "_tags": [f"tag-{j}" for j in range(10)],
    }
