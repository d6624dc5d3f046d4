"""Access control and audit.

Every invocation passes through the :class:`Gatekeeper` before any HTTP is
built: it evaluates the caller's policy against the tool's access label,
writes an audit record either way, and only hands back the
:class:`ExecutionContext` the engine requires when the decision is allow.
Constructing a context any other way is deliberately awkward; the context is
the proof that authorization happened.

Labels: read < write < admin < dangerous.  Granting a well-known label grants
everything below it; custom labels have no ordering and match only exactly.
Tools without a label are denied unless the policy carries a wildcard.
"""

from __future__ import annotations

import hashlib
import io
import json
import sys
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Mapping, TextIO

import yaml

from .errors import AuthzDenied, SchemaError, SinkUnavailable
from .model import AccessLabel, WELL_KNOWN_ACCESS
from .util import canonical_json

_RANK = {label: i for i, label in enumerate(WELL_KNOWN_ACCESS)}


@dataclass(frozen=True)
class Principal:
    id: str
    roles: tuple[str, ...] = ()

    def effective_roles(self) -> tuple[str, ...]:
        return self.roles if self.roles else (self.id,)


@dataclass(frozen=True)
class PolicyRule:
    role: str
    allow: tuple[str, ...]


@dataclass(frozen=True)
class Policy:
    rules: tuple[PolicyRule, ...]
    principals: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def resolve_principal(self, principal_id: str) -> Principal:
        mapping = dict(self.principals)
        return Principal(principal_id, tuple(mapping.get(principal_id, ())))

    def granted_labels(self, principal: Principal) -> set[str]:
        roles = set(principal.effective_roles())
        granted: set[str] = set()
        for rule in self.rules:
            if rule.role == "*" or rule.role in roles:
                granted.update(rule.allow)
        return granted


ALLOW_ALL = Policy(rules=(PolicyRule(role="*", allow=("*",)),))


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str
    label: str | None = None


def authorize(principal: Principal, access: AccessLabel | None, policy: Policy) -> Decision:
    """Evaluate one principal against one tool label.  Pure; no I/O."""
    granted = policy.granted_labels(principal)
    if access is None:
        if "*" in granted:
            return Decision(True, "wildcard grant covers unlabeled tool", None)
        return Decision(
            False, "tool has no access label and the policy has no wildcard grant", None)
    if "*" in granted:
        return Decision(True, "wildcard grant", access.value)
    if access.value in granted:
        return Decision(True, f"label {access.value!r} granted directly", access.value)
    if access.well_known:
        need = _RANK[access.value]
        for have in granted:
            if have in _RANK and _RANK[have] >= need:
                return Decision(
                    True, f"label {access.value!r} covered by grant {have!r}", access.value)
    return Decision(
        False,
        f"principal {principal.id!r} holds no grant covering label {access.value!r}",
        access.value,
    )


def strictest_label(labels: list[AccessLabel | None]) -> AccessLabel | None:
    """The most restrictive label in a set, for summarizing a composite's
    reachable tools.  Custom labels are treated as stricter than any
    well-known one since their risk is unknown; ties break lexicographically.
    """
    present = [l for l in labels if l is not None]
    if not present:
        return None
    customs = sorted(l.value for l in present if not l.well_known)
    if customs:
        return AccessLabel(customs[-1])
    return AccessLabel(max((l.value for l in present), key=lambda v: _RANK[v]))


def load_policy(text: str) -> Policy:
    """Parse a policy file.  Either a bare list of rules or a map with
    ``rules`` and optional ``principals`` (principal id to role list)."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("policy", f"not valid YAML: {exc}") from None
    if raw is None:
        raise SchemaError("policy", "policy file is empty")
    if isinstance(raw, list):
        raw = {"rules": raw}
    if not isinstance(raw, dict) or "rules" not in raw:
        raise SchemaError("policy", "expected a list of rules or a map with a rules key")
    rules = []
    for i, entry in enumerate(raw["rules"]):
        if not isinstance(entry, dict) or "role" not in entry or "allow" not in entry:
            raise SchemaError(f"policy.rules[{i}]", "each rule needs role and allow")
        allow = entry["allow"]
        if isinstance(allow, str):
            allow = [allow]
        if not isinstance(allow, list):
            raise SchemaError(f"policy.rules[{i}].allow", "expected a label list")
        rules.append(PolicyRule(role=str(entry["role"]), allow=tuple(str(a) for a in allow)))
    principals: list[tuple[str, tuple[str, ...]]] = []
    for pid, roles in (raw.get("principals") or {}).items():
        if isinstance(roles, str):
            roles = [roles]
        if not isinstance(roles, list):
            raise SchemaError(f"policy.principals.{pid}", "expected a role list")
        principals.append((str(pid), tuple(str(r) for r in roles)))
    return Policy(rules=tuple(rules), principals=tuple(sorted(principals)))


# --- audit --------------------------------------------------------------------


class MemorySink:
    """Collects records in memory; the default for tests."""

    def __init__(self):
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def emit(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)

    def flush(self) -> None:
        pass

    def serialized(self) -> str:
        with self._lock:
            return "\n".join(canonical_json(r) for r in self.records)


class StreamSink:
    def __init__(self, stream: TextIO | None = None):
        self.stream = stream if stream is not None else sys.stderr
        self._lock = threading.Lock()

    def emit(self, record: dict) -> None:
        line = canonical_json(record)
        with self._lock:
            self.stream.write(line + "\n")

    def flush(self) -> None:
        with self._lock:
            self.stream.flush()


class FileSink:
    """Append-only NDJSON file, flushed per record so a crash loses nothing."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._fh: io.TextIOWrapper | None = None

    def emit(self, record: dict) -> None:
        line = canonical_json(record)
        with self._lock:
            if self._fh is None:
                self._fh = open(self.path, "a", encoding="utf-8")
            self._fh.write(line + "\n")
            self._fh.flush()

    def flush(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


class AuditLog:
    """Serializes records and pushes them at a sink.

    When ``strict`` is set a failing sink aborts the invocation with
    :class:`SinkUnavailable`; otherwise the record falls back to stderr so it
    is degraded but never silently dropped.
    """

    def __init__(self, sink=None, *, strict: bool = False, clock=time.time):
        self.sink = sink if sink is not None else MemorySink()
        self.strict = strict
        self.clock = clock
        self._fallback = StreamSink(sys.stderr)

    def emit(self, record: dict) -> None:
        payload = {k: v for k, v in record.items() if v is not None}
        try:
            self.sink.emit(payload)
        except SinkUnavailable:
            raise
        except Exception as exc:
            if self.strict:
                raise SinkUnavailable(f"audit sink failed: {exc}") from exc
            payload_fallback = dict(payload)
            payload_fallback["audit_degraded"] = True
            self._fallback.emit(payload_fallback)


def params_digest(params: Mapping[str, Any] | None) -> str | None:
    if not params:
        return None
    try:
        blob = canonical_json(params)
    except TypeError:
        blob = repr(sorted(params.keys()))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# --- execution contexts -------------------------------------------------------


@dataclass
class ExecutionContext:
    """Proof of authorization, created only by the gatekeeper.  Carries the
    identifiers the engine needs to attribute requests in the audit trail."""

    principal: Principal
    backend: str
    tool: str
    kind: str  # "tool" | "script"
    decision: Decision
    invocation_id: str
    parent_id: str | None
    audit: AuditLog
    started: float
    param_names: tuple[str, ...] = ()
    params_hash: str | None = None
    request_count: int = field(default=0)

    def log_request(self, *, method: str, path: str, status: int | None,
                    attempt: int, duration_ms: float | None = None,
                    bytes_in: int | None = None, outcome: str | None = None) -> None:
        self.request_count += 1
        self.audit.emit({
            "ts": self.audit.clock(),
            "id": uuid.uuid4().hex[:12],
            "parent": self.invocation_id,
            "kind": "request",
            "principal": self.principal.id,
            "backend": self.backend,
            "tool": self.tool,
            "method": method,
            "path": path,
            "status": status,
            "attempt": attempt,
            "duration_ms": round(duration_ms, 3) if duration_ms is not None else None,
            "bytes_in": bytes_in,
            "outcome": outcome,
        })


class Gatekeeper:
    """The single entry point for invoking anything.

    ``begin`` authorizes and returns a context (or records the denial and
    raises :class:`AuthzDenied`); ``finish`` closes the context with the
    invocation-level record.
    """

    def __init__(self, policy: Policy | None = None, audit: AuditLog | None = None):
        self.policy = policy if policy is not None else ALLOW_ALL
        self.audit = audit if audit is not None else AuditLog()

    def check(self, principal: Principal, access: AccessLabel | None) -> Decision:
        return authorize(principal, access, self.policy)

    def begin(self, principal: Principal, *, backend: str, tool: str,
              access: AccessLabel | None, kind: str = "tool",
              params: Mapping[str, Any] | None = None,
              parent: ExecutionContext | None = None) -> ExecutionContext:
        decision = authorize(principal, access, self.policy)
        ctx = ExecutionContext(
            principal=principal,
            backend=backend,
            tool=tool,
            kind=kind,
            decision=decision,
            invocation_id=uuid.uuid4().hex[:12],
            parent_id=parent.invocation_id if parent is not None else None,
            audit=self.audit,
            started=self.audit.clock(),
            param_names=tuple(sorted(params.keys())) if params else (),
            params_hash=params_digest(params),
        )
        if not decision.allowed:
            self._emit_invocation(ctx, outcome="deny", error=decision.reason)
            raise AuthzDenied(decision.reason)
        return ctx

    def finish(self, ctx: ExecutionContext, *, ok: bool, bytes_in: int | None = None,
               bytes_out: int | None = None, truncated: bool | None = None,
               api_calls: int | None = None, error: str | None = None,
               warnings: list[str] | None = None) -> None:
        self._emit_invocation(
            ctx,
            outcome="ok" if ok else "error",
            bytes_in=bytes_in,
            bytes_out=bytes_out,
            truncated=truncated,
            api_calls=api_calls,
            error=error,
            warnings=warnings,
        )

    def _emit_invocation(self, ctx: ExecutionContext, *, outcome: str,
                         bytes_in: int | None = None, bytes_out: int | None = None,
                         truncated: bool | None = None, api_calls: int | None = None,
                         error: str | None = None, warnings: list[str] | None = None) -> None:
        self.audit.emit({
            "ts": self.audit.clock(),
            "id": ctx.invocation_id,
            "parent": ctx.parent_id,
            "kind": ctx.kind,
            "principal": ctx.principal.id,
            "backend": ctx.backend,
            "tool": ctx.tool,
            "access": ctx.decision.label,
            "decision": "deny" if outcome == "deny" else "allow",
            "outcome": outcome,
            "param_names": list(ctx.param_names) or None,
            "params_sha256": ctx.params_hash,
            "duration_ms": round((self.audit.clock() - ctx.started) * 1000.0, 3),
            "requests": ctx.request_count or None,
            "bytes_in": bytes_in,
            "bytes_out": bytes_out,
            "truncated": truncated,
            "api_calls": api_calls,
            "error": error,
            "warnings": warnings or None,
        })


def sink_from_spec(spec: str):
    """Build a sink from a CLI-style spec: "memory", "stderr", or a file path."""
    if spec == "memory":
        return MemorySink()
    if spec == "stderr":
        return StreamSink(sys.stderr)
    return FileSink(spec)


def scan_for_leaks(serialized: str, secrets: list[str]) -> list[str]:
    """Return every secret string that appears in serialized audit output.
    Empty means clean; used by tests and doubles as an operator check."""
    found = []
    for secret in secrets:
        if secret and secret in serialized:
            found.append(secret)
    # also catch JSON-escaped forms
    for secret in secrets:
        escaped = json.dumps(secret)[1:-1]
        if escaped != secret and escaped in serialized and secret not in found:
            found.append(secret)
    return found
