"""Central credential resolution.

Documents carry only logical references like ``vault/my-api-token``; this
module turns them into secret values at request time.  The namespace prefix
picks the source: ``env/`` reads the process environment, any other namespace
reads a section of the operator's secrets file, and an in-memory mapping can
shadow both (tests, one-off overrides).

Secrets never travel through reprs or exception messages: ``resolve`` hands
back a :class:`SecretValue` whose string forms are redacted, and every error
raised here names only the reference, never a value.
"""

from __future__ import annotations

import hmac
import os
import pathlib
import stat
from typing import Any, Mapping

import yaml

from .errors import FilePermissionError, MissingSecret, UnknownNamespace
from .model import CredentialRef, DadlDocument


class SecretValue:
    """A resolved secret.  Call :meth:`reveal` to get the raw string; repr,
    str, and f-string forms show only the reference."""

    __slots__ = ("ref", "_value")

    def __init__(self, ref: str, value: str):
        self.ref = ref
        self._value = value

    def reveal(self) -> str:
        return self._value

    def __repr__(self) -> str:
        return f"<secret {self.ref}>"

    __str__ = __repr__

    def __eq__(self, other: object) -> bool:
        if isinstance(other, SecretValue):
            return hmac.compare_digest(self._value, other._value)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((SecretValue, self.ref))


def _ref_text(ref: str | CredentialRef) -> str:
    return ref.ref if isinstance(ref, CredentialRef) else ref


def list_refs(document: DadlDocument) -> list[str]:
    """All credential references a document's auth block names, in declaration
    order, deduplicated."""
    seen: list[str] = []
    for ref in document.auth.refs():
        if ref.ref not in seen:
            seen.append(ref.ref)
    return seen


class CredentialResolver:
    """Resolves references against env, a secrets file, and static overrides.

    The secrets file is YAML: top-level namespaces mapping key to value.  It
    must not be group or world readable.  The parsed content is cached and
    re-read when the file's mtime changes, so rotations take effect without a
    restart.
    """

    def __init__(self, secrets_file: str | os.PathLike | None = None, *,
                 env: Mapping[str, str] | None = None,
                 static: Mapping[str, str] | None = None):
        self._path = pathlib.Path(secrets_file) if secrets_file is not None else None
        self._env = env if env is not None else os.environ
        self._static = dict(static) if static else {}
        self._cache: dict[str, dict[str, str]] | None = None
        self._cached_mtime: float | None = None

    def resolve(self, ref: str | CredentialRef) -> SecretValue:
        text = _ref_text(ref)
        if "/" not in text:
            raise UnknownNamespace(
                f"credential reference {text!r} has no namespace prefix (expected namespace/key)")
        namespace, key = text.split("/", 1)

        if text in self._static:
            return SecretValue(text, self._static[text])

        if namespace == "env":
            if key in self._env:
                return SecretValue(text, self._env[key])
            sections = self._file_sections()
            if sections is not None and key in sections.get("env", {}):
                return SecretValue(text, sections["env"][key])
            raise MissingSecret(f"environment variable {key!r} is not set (for {text!r})")

        sections = self._file_sections()
        if sections is None:
            raise UnknownNamespace(
                f"no source for namespace {namespace!r} (no secrets file configured)")
        if namespace not in sections:
            raise UnknownNamespace(
                f"secrets file has no {namespace!r} section (for {text!r})")
        if key not in sections[namespace]:
            raise MissingSecret(f"no key {key!r} under namespace {namespace!r}")
        return SecretValue(text, sections[namespace][key])

    def preflight(self, document: DadlDocument) -> list[str]:
        """Resolve every reference the document names, returning the refs.
        Raises on the first failure; used to fail fast before any HTTP."""
        refs = list_refs(document)
        for ref in refs:
            self.resolve(ref)
        return refs

    # --- secrets file ---------------------------------------------------------

    def _file_sections(self) -> dict[str, dict[str, str]] | None:
        if self._path is None:
            return None
        try:
            st_result = self._path.stat()
        except FileNotFoundError:
            raise MissingSecret(f"secrets file {str(self._path)!r} does not exist") from None
        if stat.S_IMODE(st_result.st_mode) & 0o077:
            raise FilePermissionError(
                f"secrets file {str(self._path)!r} is group or world accessible; "
                f"expected mode 0600")
        if self._cache is None or st_result.st_mtime != self._cached_mtime:
            self._cache = self._parse_file()
            self._cached_mtime = st_result.st_mtime
        return self._cache

    def _parse_file(self) -> dict[str, dict[str, str]]:
        try:
            raw = yaml.safe_load(self._path.read_text())
        except yaml.YAMLError:
            raise MissingSecret(f"secrets file {str(self._path)!r} is not valid YAML") from None
        if raw is None:
            return {}
        if not isinstance(raw, dict):
            raise MissingSecret(
                f"secrets file {str(self._path)!r} must map namespaces to key/value sections")
        sections: dict[str, dict[str, str]] = {}
        for namespace, block in raw.items():
            if not isinstance(block, dict):
                raise MissingSecret(
                    f"namespace {namespace!r} in {str(self._path)!r} is not a map")
            sections[str(namespace)] = {str(k): _coerce(v) for k, v in block.items()}
        return sections


def _coerce(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    raise MissingSecret("secret values must be scalars")
