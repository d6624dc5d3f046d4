"""Exception taxonomy shared across the DADL runtime.

Every error raised by the runtime derives from :class:`DadlError` so callers
can catch one base.  Errors never embed secret material; anything derived
from upstream bodies is truncated before inclusion.
"""

from __future__ import annotations


class DadlError(Exception):
    """Base class for all runtime errors."""


# --- document parsing / validation -------------------------------------------

class YamlError(DadlError):
    """The input is not well-formed YAML (or uses a rejected custom tag)."""


class SchemaError(DadlError):
    """The YAML is well-formed but violates the document grammar.

    ``path`` is a dotted YAML path naming the offending node, e.g.
    ``"tools.list_items.method"``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message


class UnknownTool(DadlError):
    """A tool name was looked up that the document/catalog does not define."""


class ClosureViolation(DadlError):
    """A composite references a name outside the document's primitive tools."""


# --- credential resolution ---------------------------------------------------

class CredentialError(DadlError):
    """Base for credential resolution failures."""


class UnknownNamespace(CredentialError):
    """No configured backend matches the reference's namespace prefix."""


class MissingSecret(CredentialError):
    """The backend matched but holds no value for the key."""


class FilePermissionError(CredentialError):
    """Secrets file is group- or world-readable."""


# --- request construction ----------------------------------------------------

class RequestError(DadlError):
    """Base for errors raised while assembling an HTTP request plan."""


class MissingRequiredParam(RequestError):
    pass


class TypeMismatch(RequestError):
    pass


class UnknownParam(RequestError):
    pass


class PathInjection(RequestError):
    """A path parameter value would alter the URL structure."""


# --- authentication ----------------------------------------------------------

class AuthError(DadlError):
    """Base for authentication failures."""


class CredentialResolution(AuthError):
    """A credential reference needed for auth could not be resolved."""


class TokenEndpointError(AuthError):
    """OAuth2 token endpoint failed (non-2xx, unreachable, or bad payload)."""

    def __init__(self, status: int | None, message: str | None = None):
        super().__init__(message or f"token endpoint returned status {status}")
        self.status = status


class LoginFailed(AuthError):
    """Session login call failed (non-2xx, unreachable, or bad payload)."""

    def __init__(self, status: int | None, message: str | None = None):
        super().__init__(message or f"login call returned status {status}")
        self.status = status


class TokenExtractEmpty(AuthError):
    """The configured token-extraction path matched nothing in the login body."""


# --- execution ---------------------------------------------------------------

class UpstreamTerminal(DadlError):
    """Upstream returned a status classified terminal.

    ``message`` is extracted via the document's error policy when possible.
    """

    def __init__(self, status: int, message: str = ""):
        detail = f"upstream returned terminal status {status}"
        if message:
            detail += f": {message}"
        super().__init__(detail)
        self.status = status
        self.upstream_message = message


class RetriesExhausted(DadlError):
    """All retry attempts for one request were consumed."""

    def __init__(self, status: int | None, attempts: int):
        last = status if status is not None else "network error"
        super().__init__(f"gave up after {attempts} attempts (last: {last})")
        self.status = status
        self.attempts = attempts


class MalformedLinkHeader(DadlError):
    """Link header present but unparseable, or its next URL escapes the backend."""


class PaginationError(DadlError):
    """Page content cannot be accumulated (non-array page without items path)."""


# --- transform pipeline ------------------------------------------------------

class InvalidPath(DadlError):
    """JSONPath expression has a syntax error or uses an unsupported feature."""


class JqError(DadlError):
    """Base for jq filter errors."""


class JqSyntaxError(JqError):
    """Filter text does not parse at all."""


class JqUnsupportedError(JqError):
    """Filter parses as jq but uses a construct outside the supported subset."""


class JqRuntimeError(JqError):
    """Filter failed while evaluating (e.g. indexing a number)."""


class OverrideForbidden(DadlError):
    """A caller-supplied jq override was passed but the tool does not allow it."""


# --- authorization / audit ---------------------------------------------------

class AuthzDenied(DadlError):
    """Invocation denied by policy.  Carries the decision reason."""

    def __init__(self, reason: str):
        super().__init__(f"denied: {reason}")
        self.reason = reason


class SinkUnavailable(DadlError):
    """Audit sink could not be written."""


# --- script sandbox ----------------------------------------------------------

class SandboxError(DadlError):
    """Base for sandbox failures that abort a script (not catchable in-script)."""


class ScriptTimeout(SandboxError):
    """Script exceeded its wall-clock limit and was killed."""


class CallCapExceeded(SandboxError):
    """Script attempted more api calls than its cap permits."""


class OutputTooLarge(SandboxError):
    """Serialized script result exceeds the output byte limit."""


class UnsupportedConstruct(SandboxError):
    """Script uses a language feature outside the supported subset."""


class StaticCheckFailed(SandboxError):
    """Forbidden tokens were found by the pre-execution scan."""

    def __init__(self, tokens: list[str]):
        super().__init__(f"forbidden tokens: {', '.join(sorted(set(tokens)))}")
        self.tokens = tokens


class ScriptError(DadlError):
    """Script raised or hit a runtime fault; message is sanitized."""
