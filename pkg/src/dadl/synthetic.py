"""Seeded registry-scale catalogs for context-cost measurement.

Real tool registries are private, so scaling measurements run against
generated stand-ins.  Documents are emitted as YAML and go through the
normal parser, which keeps the generator honest: whatever it produces is a
valid document, not a hand-built shortcut.

The knobs below are calibrated against the byte oracle in the tests so one
generated tool costs roughly what a registry tool does: about 72 chars4
tokens of flat per-tool advertisement and about 330 bytes of interface
text.  Change them and the context-cost windows will move.
"""

from __future__ import annotations

import random

import yaml

from .gateway import Catalog
from .model import DadlDocument, parse_document

# Mean description length ~52 chars, params per tool ~1.6, a short hint on
# a sixth of tools.  These three drive almost all of the per-tool cost.
DESC_MEAN, DESC_SPREAD, DESC_MIN, DESC_MAX = 52, 16, 32, 140
PARAM_COUNT_WEIGHTS = {0: 15, 1: 29, 2: 30, 3: 16, 4: 7, 5: 3}
PARAM_DESC_CHANCE = 0.40
HINT_CHANCE = 0.17

_SERVICES = [
    "ticketflow", "paystream", "meshdns", "cratehub", "signalbox",
    "wikidesk", "stackmon", "relayform", "geofleet", "parcelbay",
    "chatgrid", "voxnote", "buildyard", "lockstep", "heatmapper",
    "querypond", "mailrace", "shelfware", "tracefog", "pixelvault",
]

_VERBS = [
    "list", "get", "create", "update", "delete", "search", "archive",
    "restore", "export", "import", "tag", "assign", "merge", "clone",
    "approve", "sync",
]

_NOUNS = [
    "ticket", "invoice", "zone", "record", "webhook", "member", "project",
    "report", "channel", "device", "deployment", "snapshot", "release",
    "alert", "policy", "queue", "segment", "token", "workspace", "label",
]

_MODIFIERS = ["bulk", "draft", "stale", "pinned", "remote", "shared",
              "legacy", "active"]

_PARAM_NAMES = [
    "id", "name", "state", "page_size", "filter", "q", "owner", "labels",
    "since", "until", "limit", "sort", "format", "include_archived",
    "team", "region", "kind", "verbose", "tag", "depth",
]

_PARAM_TYPES = ["string", "string", "string", "integer", "integer",
                "boolean", "array"]

_ACCESS = ["read", "read", "read", "read", "read", "read", "write",
           "write", "write", "admin", "dangerous"]

_PHRASES = [
    "matching the given filters",
    "for the authenticated account",
    "within the current workspace",
    "including archived entries when asked",
    "ordered by most recent activity",
    "together with its related metadata",
    "subject to plan limits",
    "as seen by the caller's team",
    "with soft-deleted items excluded",
    "at the requested level of detail",
]

_HINTS = [
    "responses are cached upstream for about a minute",
    "rate limited more tightly than the rest of the service",
    "pass the narrowest filter you can, payloads get large",
    "requires the workspace feature flag to be enabled",
    "identifiers here are opaque strings, do not parse them",
]

_PARAM_BLURBS = [
    "narrows the result set",
    "opaque identifier from a previous call",
    "upper bound on returned items",
    "free-text match against names",
    "restricts to one lifecycle state",
    "ISO 8601 timestamp lower bound",
]


def _description(rng: random.Random, verb: str, noun: str) -> str:
    length = int(rng.gauss(DESC_MEAN, DESC_SPREAD))
    length = max(DESC_MIN, min(DESC_MAX, length))
    head = {
        "list": f"List {noun}s",
        "get": f"Fetch one {noun}",
        "create": f"Create a {noun}",
        "update": f"Update an existing {noun}",
        "delete": f"Delete a {noun}",
        "search": f"Search {noun}s",
    }.get(verb, f"{verb.capitalize()} {noun}s")
    text = head
    while len(text) < length:
        text += " " + rng.choice(_PHRASES)
    return text.rstrip() + "."


def _params(rng: random.Random, placeholders: list) -> dict:
    count = rng.choices(list(PARAM_COUNT_WEIGHTS),
                        weights=list(PARAM_COUNT_WEIGHTS.values()))[0]
    names = [p for p in _PARAM_NAMES if p not in placeholders]
    chosen = placeholders + rng.sample(names, min(count, len(names)))
    params = {}
    for pname in chosen:
        spec: dict = {"type": "string" if pname in placeholders
                      else rng.choice(_PARAM_TYPES)}
        if pname in placeholders:
            spec["required"] = True
        elif rng.random() < 0.3:
            spec["required"] = True
        if rng.random() < PARAM_DESC_CHANCE:
            spec["description"] = rng.choice(_PARAM_BLURBS)
        params[pname] = spec
    return params


def _backend_source(rng: random.Random, service: str, n_tools: int) -> dict:
    tools: dict = {}
    attempts = 0
    while len(tools) < n_tools:
        verb = rng.choice(_VERBS)
        noun = rng.choice(_NOUNS)
        name = f"{verb}_{noun}"
        if name in tools:
            name = f"{verb}_{rng.choice(_MODIFIERS)}_{noun}"
        attempts += 1
        if name in tools:
            if attempts > n_tools * 60:
                raise RuntimeError(
                    f"cannot find {n_tools} distinct tool names")
            continue
        by_id = verb in ("get", "update", "delete") or rng.random() < 0.1
        path = f"/{noun}s/{{id}}" if by_id else f"/{noun}s"
        method = {"create": "POST", "update": "PATCH",
                  "delete": "DELETE"}.get(verb, "GET")
        tools[name] = {
            "method": method,
            "path": path,
            "description": _description(rng, verb, noun),
            "access": rng.choice(_ACCESS),
            "params": _params(rng, ["id"] if by_id else []),
        }
    hints = {
        name: {"usage": rng.choice(_HINTS)}
        for name in tools if rng.random() < HINT_CHANCE
    }
    doc = {
        "backend": {
            "name": service,
            "type": "rest",
            "version": "1",
            "base_url": f"https://{service}.example.test/api",
            "description": f"Synthetic stand-in for a {service} deployment.",
        },
        "auth": {
            "type": "bearer",
            "credential": f"env/{service.upper()}_TOKEN",
        },
        "tools": tools,
    }
    if hints:
        doc["hints"] = hints
    return doc


def _sizes(rng: random.Random, total: int, backends: int) -> list:
    """Uneven backend sizes, every backend at least one tool."""
    weights = [rng.lognormvariate(0.0, 0.9) for _ in range(backends)]
    scale = total / sum(weights)
    sizes = [max(1, round(w * scale)) for w in weights]
    # rounding drift lands on the largest backends
    order = sorted(range(backends), key=lambda i: -sizes[i])
    i = 0
    while sum(sizes) != total:
        idx = order[i % backends]
        if sum(sizes) < total:
            sizes[idx] += 1
        elif sizes[idx] > 1:
            sizes[idx] -= 1
        i += 1
    return sizes


def synthetic_yaml(total_tools: int = 1833, backends=None, *,
                   seed: int = 1833) -> dict:
    """Generated documents as YAML text, keyed by backend name."""
    if total_tools < 0:
        raise ValueError("total_tools must be nonnegative")
    if backends is None:
        backends = min(len(_SERVICES), max(1, round(total_tools / 92)))
    if total_tools == 0:
        return {}
    if backends > len(_SERVICES):
        raise ValueError(f"at most {len(_SERVICES)} backends")
    if backends > total_tools:
        backends = total_tools
    rng = random.Random(seed)
    sizes = _sizes(rng, total_tools, backends)
    out = {}
    for service, n_tools in zip(_SERVICES, sizes):
        source = _backend_source(rng, service, n_tools)
        out[service] = yaml.safe_dump(
            source, sort_keys=False, allow_unicode=True, width=100)
    return out


def synthetic_documents(total_tools: int = 1833, backends=None, *,
                        seed: int = 1833) -> dict:
    """Same catalogs, parsed through the normal document pipeline."""
    docs: dict[str, DadlDocument] = {}
    for name, text in synthetic_yaml(total_tools, backends, seed=seed).items():
        docs[name] = parse_document(text)
    return docs


def synthetic_catalog(total_tools: int = 1833, backends=None, *,
                      seed: int = 1833, generation: int = 0) -> Catalog:
    return Catalog(synthetic_documents(total_tools, backends, seed=seed),
                   generation=generation)
