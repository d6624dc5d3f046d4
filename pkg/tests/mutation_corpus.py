"""Corpus of deliberately broken documents, one seeded violation each.

Each case carries the stage expected to flag it: "yaml" (not parseable),
"schema" (parse_document raises SchemaError whose path contains `match`),
or "validate" (parses, but validate() reports an error with code == match).
Shared between the model tests and the conformance gate.
"""

_META = """\
spec: dadl/v0.1
credits: ["Jane Doe <jane@example.com>"]
source_name: "My API Docs"
source_url: "https://docs.example.com/api"
date: "2026-03-26"
"""

_BACKEND = """\
backend:
  name: my-api
  type: rest
  version: "1.0"
  base_url: "https://api.example.com/v1"
"""

_AUTH = """\
auth:
  type: bearer
  credential: vault/my-api-token
"""

_TOOLS = """\
tools:
  list_items:
    method: GET
    path: /items
    access: read
    description: "List all items"
  get_item:
    method: GET
    path: /items/{item_id}
    access: read
    description: "Fetch one item"
    params:
      item_id: {type: string, required: true}
"""


def _doc(backend=_BACKEND, auth=_AUTH, tools=_TOOLS, extra=""):
    parts = [_META, backend, auth, tools]
    if extra:
        parts.append(extra)
    return "\n".join(p.rstrip("\n") for p in parts if p) + "\n"


# (name, yaml_text, stage, match)
CASES = [
    ("missing_backend", _doc(backend=""), "schema", "backend"),
    ("missing_backend_name", _doc(backend="""\
backend:
  type: rest
  version: "1.0"
  base_url: "https://api.example.com/v1"
"""), "schema", "backend.name"),
    ("missing_base_url", _doc(backend="""\
backend:
  name: my-api
  type: rest
  version: "1.0"
"""), "schema", "backend.base_url"),
    ("backend_type_not_rest", _doc(backend="""\
backend:
  name: my-api
  type: graphql
  version: "1.0"
  base_url: "https://api.example.com/v1"
"""), "schema", "backend.type"),
    ("base_url_relative", _doc(backend="""\
backend:
  name: my-api
  type: rest
  version: "1.0"
  base_url: "/v1"
"""), "schema", "backend.base_url"),
    ("base_url_with_query", _doc(backend="""\
backend:
  name: my-api
  type: rest
  version: "1.0"
  base_url: "https://api.example.com/v1?key=abc"
"""), "schema", "backend.base_url"),
    ("missing_auth", _doc(auth=""), "schema", "auth"),
    ("unknown_auth_scheme", _doc(auth="""\
auth:
  type: digest
  credential: vault/my-api-token
"""), "schema", "auth.type"),
    ("bearer_missing_credential", _doc(auth="auth:\n  type: bearer\n"), "schema",
     "auth.credential"),
    ("missing_tools", _doc(tools=""), "schema", "tools"),
    ("tools_as_list", _doc(tools="""\
tools:
  - name: list_items
    method: GET
    path: /items
    description: "List all items"
"""), "schema", "tools"),
    ("tool_missing_method", _doc(tools="""\
tools:
  list_items:
    path: /items
    access: read
    description: "List all items"
"""), "schema", "tools.list_items.method"),
    ("tool_missing_description", _doc(tools="""\
tools:
  list_items:
    method: GET
    path: /items
    access: read
"""), "schema", "tools.list_items.description"),
    ("tool_unknown_method", _doc(tools="""\
tools:
  list_items:
    method: FETCH
    path: /items
    access: read
    description: "List all items"
"""), "schema", "tools.list_items.method"),
    ("tool_path_no_slash", _doc(tools="""\
tools:
  list_items:
    method: GET
    path: items
    access: read
    description: "List all items"
"""), "schema", "tools.list_items.path"),
    ("cursor_without_next_path", _doc(tools="""\
tools:
  list_items:
    method: GET
    path: /items
    access: read
    description: "List all items"
    pagination:
      strategy: cursor
      request_params: {cursor: cursor}
"""), "schema", "pagination"),
    ("pagination_none_with_fields", _doc(tools="""\
tools:
  list_items:
    method: GET
    path: /items
    access: read
    description: "List all items"
    pagination:
      strategy: none
      page_size: 5
"""), "schema", "pagination"),
    ("composite_empty_code", _doc(extra="""\
composites:
  summarize:
    description: "Stub"
    code: "   "
"""), "schema", "composites.summarize.code"),
    ("bad_yaml", _META + "backend: [unclosed\n", "yaml", ""),
    ("custom_tag", _doc(extra="extra: !!python/object:os.system {}\n"), "yaml", ""),
    ("literal_secret", _doc(auth="""\
auth:
  type: bearer
  credential: sk-live-3b2a1c9d8e7f
"""), "validate", "literal_credential"),
    ("basic_literal_password", _doc(auth="""\
auth:
  type: basic
  username: env/API_USER
  password: hunter2
"""), "validate", "literal_credential"),
    ("composite_timeout_overrun", _doc(extra="""\
composites:
  slow_join:
    description: "Joins two listings"
    timeout: 150s
    code: |
      const a = await api.list_items();
      return a;
"""), "validate", "composite_timeout_bound"),
    ("placeholder_without_param", _doc(tools="""\
tools:
  get_item:
    method: GET
    path: /items/{item_id}
    access: read
    description: "Fetch one item"
"""), "validate", "placeholder_without_param"),
    ("path_param_without_placeholder", _doc(tools="""\
tools:
  get_item:
    method: GET
    path: /items
    access: read
    description: "Fetch one item"
    params:
      item_id: {type: string, required: true, location: path}
"""), "validate", "path_param_without_placeholder"),
    ("status_sets_overlap", _doc(extra="""\
error_policy:
  message_path: "$.message"
  terminal_statuses: [400, 500]
  retryable_statuses: [500, 503]
"""), "validate", "status_sets_overlap"),
    ("bad_tool_name", _doc(tools="""\
tools:
  ListItems:
    method: GET
    path: /items
    access: read
    description: "List all items"
"""), "validate", "bad_name"),
    ("tool_composite_collision", _doc(extra="""\
composites:
  list_items:
    description: "Shadows the primitive"
    code: |
      return await api.get_item({ item_id: "a" });
"""), "validate", "name_collision"),
    ("composite_undefined_tool", _doc(extra="""\
composites:
  broken_join:
    description: "References a tool that does not exist"
    code: |
      return await api.list_widgets();
"""), "validate", "closure_violation"),
    ("composite_calls_composite", _doc(extra="""\
composites:
  inner:
    description: "Fine on its own"
    code: |
      return await api.list_items();
  outer:
    description: "Illegally layers on inner"
    code: |
      return await api.inner();
"""), "validate", "composite_calls_composite"),
]

assert len(CASES) >= 20
assert len({name for name, *_ in CASES}) == len(CASES)
