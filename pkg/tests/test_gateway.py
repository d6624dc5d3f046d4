"""Gateway behavior: catalog addressing, search ranking, interface text,
catalog-spanning execute with per-call authorization, reload atomicity, and
the two wire transports."""

import io
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest
import requests

from dadl.authz import AuditLog, Gatekeeper, MemorySink, Policy, PolicyRule, Principal
from dadl.credentials import CredentialResolver
from dadl.errors import (
    CallCapExceeded,
    OverrideForbidden,
    SchemaError,
    ScriptError,
    UnknownTool,
)
from dadl.gateway import (
    Catalog,
    Gateway,
    GatewaySession,
    advertisement_surface,
    flat_advertisement,
    generate_interface,
    load_library,
    measure_context,
    serve_http,
    serve_stdio,
)
from dadl.mockserver import MockUpstream, Response, SessionSim
from dadl.model import parse_document
from dadl.sandbox import SandboxLimits
from dadl.util import chars4_tokens

FIXTURES = Path(__file__).parent / "fixtures"

HUB_USER = "hubadmin"
HUB_PASSWORD = "hub-secret-pw-7731"

GH_DOC = """
backend:
  name: githome
  type: rest
  version: "3"
  base_url: __BASE__
auth:
  type: bearer
  credential: static/gh
tools:
  list_repository_issues:
    method: GET
    path: /repos/{owner}/{repo}/issues
    description: List issues for a repository.
    access: read
    params:
      owner: {type: string, required: true}
      repo: {type: string, required: true}
      state: {type: string}
      labels: {type: string}
  create_issue:
    method: POST
    path: /repos/{owner}/{repo}/issues
    description: Open a new issue.
    access: write
    params:
      owner: {type: string, required: true}
      repo: {type: string, required: true}
      title: {type: string, required: true}
  delete_repository:
    method: DELETE
    path: /repos/{owner}/{repo}
    description: Permanently delete a repository.
    access: dangerous
    params:
      owner: {type: string, required: true}
      repo: {type: string, required: true}
"""

NOTES_DOC = """
backend:
  name: notebin
  type: rest
  version: "1"
  base_url: __BASE__
auth:
  type: bearer
  credential: static/notes
tools:
  list_items:
    method: GET
    path: /notes
    description: List saved notes.
    access: read
  pin_note:
    method: POST
    path: /notes/{id}/pin
    description: Pin a note to the top of the board.
    access: write
    params:
      id: {type: string, required: true}
"""

CLIPS_DOC = """
backend:
  name: clipshelf
  type: rest
  version: "1"
  base_url: __BASE__
auth:
  type: bearer
  credential: static/clips
tools:
  list_items:
    method: GET
    path: /clips
    description: List stored clips.
    access: read
"""

# the three issues behind the filter oracle: only number 2 is unassigned
ISSUES = [
    {"number": 1, "title": "Crash on boot", "html_url": "https://g/1",
     "assignee": {"login": "ana"}},
    {"number": 2, "title": "Leak in parser", "html_url": "https://g/2",
     "assignee": None},
    {"number": 3, "title": "Docs typo", "html_url": "https://g/3",
     "assignee": {"login": "bo"}},
]

FILTER_SNIPPET = """
const issues = await api.list_repository_issues({
  owner: "Dunke1Cloud",
  repo: "ToolMesh",
  state: "open",
  labels: "bug",
});
return issues.filter(i => !i.assignee).map(i => ({
  number: i.number, title: i.title, url: i.html_url,
}));
"""

ADMIN = Principal(id="ops", roles=("admin",))
READER = Principal(id="viewer", roles=("reader",))
POLICY = Policy(rules=(PolicyRule(role="admin", allow=("*",)),
                       PolicyRule(role="reader", allow=("read",))))


def doc(text, base="https://unused.example.test"):
    return parse_document(text.replace("__BASE__", base))


def make_gateway(up, *docs_text, policy=POLICY, **kwargs):
    documents = [doc(t, up.base_url) for t in docs_text]
    resolver = CredentialResolver(static={
        "static/gh": "gh-token-1", "static/notes": "notes-token-1",
        "static/clips": "clips-token-1"})
    sink = MemorySink()
    gk = Gatekeeper(policy, AuditLog(sink))
    gw = Gateway(documents, resolver=resolver, gatekeeper=gk, **kwargs)
    return gw, sink


@pytest.fixture()
def gh():
    with MockUpstream() as up:
        up.json("GET", "/repos/Dunke1Cloud/ToolMesh/issues", ISSUES)
        yield up


def records(sink, kind=None):
    out = [json.loads(line) for line in sink.serialized().splitlines()]
    if kind is not None:
        out = [r for r in out if r.get("kind") == kind]
    return out


class TestCatalog:
    def test_entries_sorted_by_backend_then_name(self):
        cat = Catalog([doc(NOTES_DOC), doc(GH_DOC)])
        names = [(e.backend, e.name) for e in cat.entries]
        assert names == sorted(names)
        assert names[0][0] == "githome"

    def test_tool_count_spans_backends(self):
        cat = Catalog([doc(GH_DOC), doc(NOTES_DOC)])
        assert cat.tool_count == 5

    def test_bare_resolution_when_unique(self):
        cat = Catalog([doc(GH_DOC), doc(NOTES_DOC)])
        assert cat.resolve("pin_note").backend == "notebin"
        assert cat.call_name(cat.resolve("pin_note")) == "pin_note"

    def test_qualified_resolution_always_works(self):
        cat = Catalog([doc(GH_DOC), doc(NOTES_DOC)])
        entry = cat.resolve("githome.create_issue")
        assert entry.name == "create_issue"

    def test_ambiguous_bare_name_lists_owners(self):
        cat = Catalog([doc(NOTES_DOC), doc(CLIPS_DOC)])
        with pytest.raises(UnknownTool) as err:
            cat.resolve("list_items")
        assert "clipshelf.list_items" in str(err.value)
        assert "notebin.list_items" in str(err.value)

    def test_ambiguous_names_get_dotted_call_names(self):
        cat = Catalog([doc(NOTES_DOC), doc(CLIPS_DOC)])
        entry = cat.resolve("notebin.list_items")
        assert cat.call_name(entry) == "notebin.list_items"

    def test_unknown_name(self):
        cat = Catalog([doc(GH_DOC)])
        with pytest.raises(UnknownTool):
            cat.resolve("no_such_tool")

    def test_duplicate_backend_rejected(self):
        with pytest.raises(SchemaError):
            Catalog([doc(GH_DOC), doc(GH_DOC)])

    def test_mapping_key_must_match_backend_name(self):
        with pytest.raises(SchemaError):
            Catalog({"wrong": doc(GH_DOC)})

    def test_generation_carried(self):
        assert Catalog([], generation=7).generation == 7


class TestSignatures:
    def test_fields(self):
        cat = Catalog([doc(GH_DOC)])
        sig = cat.signature(cat.resolve("create_issue"))
        assert sig.qualified == "githome.create_issue"
        assert sig.call_name == "create_issue"
        assert sig.access == "write"
        assert sig.backend == "githome"
        assert "title: string (required)" in sig.params

    def test_description_single_line_capped_at_200(self):
        long = "backend: {name: b, type: rest, version: '1', base_url: 'http://u.test'}\n" \
               "auth: {type: bearer, credential: static/x}\n" \
               "tools:\n  t:\n    method: GET\n    path: /t\n" \
               "    description: " + "word " * 120
        cat = Catalog([parse_document(long)])
        sig = cat.signature(cat.resolve("t"))
        assert "\n" not in sig.description
        assert len(sig.description) <= 200
        assert sig.description.endswith("…")

    def test_render_stays_under_512_bytes(self):
        params = "\n".join(
            f"      very_long_parameter_name_number_{i:02d}: "
            "{type: string, required: true}" for i in range(30))
        text = ("backend: {name: big, type: rest, version: '1', base_url: 'http://u.test'}\n"
                "auth: {type: bearer, credential: static/x}\n"
                "tools:\n  wide_tool:\n    method: GET\n    path: /w\n"
                "    description: A tool with far too many parameters.\n"
                "    params:\n" + params)
        cat = Catalog([parse_document(text)])
        rendered = cat.signature(cat.resolve("wide_tool")).render()
        assert len(rendered.encode("utf-8")) <= 512

    def test_render_readable_form(self):
        cat = Catalog([doc(GH_DOC)])
        rendered = cat.signature(cat.resolve("delete_repository")).render()
        assert rendered.startswith("delete_repository [dangerous] (githome):")
        assert "params:" in rendered


class TestSearch:
    def scoring_catalog(self):
        alpha = parse_document(
            "backend: {name: alpha, type: rest, version: '1', base_url: 'http://u.test'}\n"
            "auth: {type: bearer, credential: static/x}\n"
            "tools:\n"
            "  sync_records:\n    method: POST\n    path: /sync\n"
            "    description: Copy records into the warehouse nightly.\n")
        beta = parse_document(
            "backend: {name: beta, type: rest, version: '1', base_url: 'http://u.test'}\n"
            "auth: {type: bearer, credential: static/x}\n"
            "tools:\n"
            "  archive_records:\n    method: POST\n    path: /archive\n"
            "    description: Move records to cold storage.\n"
            "  purge_cache:\n    method: DELETE\n    path: /cache\n"
            "    description: Drop the archive cache.\n")
        return Catalog([alpha, beta])

    def test_hand_scored_ranking(self):
        # archive records: archive_records 3+3 name + 1 desc = 7;
        # sync_records 3 name + 1 desc = 4; purge_cache 1 desc = 1
        hits = self.scoring_catalog().search("archive records")
        assert [h.qualified for h in hits] == [
            "beta.archive_records", "alpha.sync_records", "beta.purge_cache"]

    def test_tie_breaks_lexicographically(self):
        # "records" scores 4 on both; alpha.sync_records sorts first
        hits = self.scoring_catalog().search("records")
        assert [h.qualified for h in hits] == [
            "alpha.sync_records", "beta.archive_records"]

    def test_k_limits_results(self):
        assert len(self.scoring_catalog().search("archive records", k=1)) == 1
        assert self.scoring_catalog().search("archive records", k=0) == []

    def test_backend_name_counts_once(self):
        # "beta" matches the backend term of both beta tools, weight 1
        hits = self.scoring_catalog().search("beta")
        assert {h.qualified for h in hits} == {
            "beta.archive_records", "beta.purge_cache"}

    def test_no_match_is_empty(self):
        assert self.scoring_catalog().search("zeppelin") == []
        assert self.scoring_catalog().search("   ") == []

    def test_case_insensitive(self):
        hits = self.scoring_catalog().search("ARCHIVE Records")
        assert hits[0].qualified == "beta.archive_records"

    def test_listing_style_query_finds_tool(self):
        cat = Catalog([doc(GH_DOC)])
        hits = cat.search("list repositories")
        assert hits and hits[0].qualified == "githome.list_repository_issues"

    def test_hints_are_searchable(self):
        text = ("backend: {name: h, type: rest, version: '1', base_url: 'http://u.test'}\n"
                "auth: {type: bearer, credential: static/x}\n"
                "tools:\n  get_report:\n    method: GET\n    path: /r\n"
                "    description: Fetch the report.\n"
                "hints:\n  get_report:\n"
                "    quota: mention the griffin flag to bypass sampling\n")
        hits = Catalog([parse_document(text)]).search("griffin")
        assert [h.qualified for h in hits] == ["h.get_report"]

    def test_composites_searchable(self):
        with MockUpstream() as up:
            devices = (FIXTURES / "devices.dadl").read_text().replace(
                "https://hub.example.internal/api", up.base_url)
        cat = Catalog([parse_document(devices)])
        hits = cat.search("named status")
        assert hits[0].qualified == "devicehub.get_named_status"


class TestInterface:
    def test_every_tool_exactly_once(self):
        cat = Catalog([doc(GH_DOC), doc(NOTES_DOC), doc(CLIPS_DOC)])
        text = generate_interface(cat)
        for entry in cat.entries:
            method = f"  {cat.call_name(entry)}(params:"
            assert text.count(method) == 1

    def test_search_signature_is_extract_of_interface(self):
        cat = Catalog([doc(GH_DOC), doc(NOTES_DOC)])
        text = generate_interface(cat)
        for sig in cat.search("list issues notes", k=10):
            assert sig.interface in text

    def test_doc_comment_carries_description_and_access(self):
        cat = Catalog([doc(GH_DOC)])
        text = generate_interface(cat)
        assert "   * Permanently delete a repository." in text
        assert "   * @access dangerous" in text
        assert "   * @backend githome" in text

    def test_empty_params_render_as_empty_object(self):
        cat = Catalog([doc(NOTES_DOC)])
        assert "list_items(params: {}): Promise<unknown>;" in generate_interface(cat)

    def test_required_and_optional_param_types(self):
        cat = Catalog([doc(GH_DOC)])
        block = cat.signature(cat.resolve("list_repository_issues")).interface
        assert "owner: string" in block
        assert "state?: string" in block

    def test_ambiguous_methods_render_dotted(self):
        cat = Catalog([doc(NOTES_DOC), doc(CLIPS_DOC)])
        text = generate_interface(cat)
        assert "  notebin.list_items(params:" in text
        assert "  clipshelf.list_items(params:" in text
        assert "\n  list_items(params:" not in text

    def test_schema_fragment_param_types(self):
        text = ("backend: {name: f, type: rest, version: '1', base_url: 'http://u.test'}\n"
                "auth: {type: bearer, credential: static/x}\n"
                "tools:\n  find:\n    method: GET\n    path: /f\n"
                "    description: Search with typed filters.\n"
                "    params:\n"
                "      created_after: {type: {type: string, format: date-time}}\n"
                "      state: {type: {type: string, enum: [open, closed]}}\n")
        cat = Catalog([parse_document(text)])
        block = cat.signature(cat.resolve("find")).interface
        assert "created_after?: string" in block
        # enum fragments lose structure in parsing; typed as unknown, never wrong
        assert "state?: unknown" in block

    def test_composite_marked(self):
        with MockUpstream() as up:
            devices = (FIXTURES / "devices.dadl").read_text().replace(
                "https://hub.example.internal/api", up.base_url)
        text = generate_interface(Catalog([parse_document(devices)]))
        assert "@composite" in text

    def test_returns_note_present(self):
        cat = Catalog([doc(GH_DOC)])
        block = cat.signature(cat.resolve("create_issue")).interface
        assert "@returns JSON from POST /repos/{owner}/{repo}/issues" in block

    def test_deterministic(self):
        a = generate_interface(Catalog([doc(GH_DOC), doc(NOTES_DOC)]))
        b = generate_interface(Catalog([doc(NOTES_DOC), doc(GH_DOC)]))
        assert a == b


class TestExecute:
    def test_filter_snippet_hand_oracle(self, gh):
        gw, sink = make_gateway(gh, GH_DOC)
        res = gw.execute(FILTER_SNIPPET, ADMIN)
        assert res.value == [
            {"number": 2, "title": "Leak in parser", "url": "https://g/2"}]
        assert res.api_calls == 1
        assert res.requests == 1

    def test_pure_script_leaves_single_record(self, gh):
        gw, sink = make_gateway(gh, GH_DOC)
        res = gw.execute("return 1+1", ADMIN)
        assert res.value == 2
        assert res.api_calls == 0
        invocations = records(sink, "script")
        assert len(invocations) == 1
        assert records(sink, "tool") == []

    def test_calls_chain_to_script_record(self, gh):
        gw, sink = make_gateway(gh, GH_DOC)
        gw.execute(FILTER_SNIPPET, ADMIN)
        script = records(sink, "script")[0]
        tool = records(sink, "tool")[0]
        assert tool["parent"] == script["id"]
        assert script.get("parent") is None

    def test_cross_backend_join(self, gh):
        gh.json("GET", "/notes", [{"id": "n1", "text": "ship it"}])
        gw, sink = make_gateway(gh, GH_DOC, NOTES_DOC)
        script = """
const [issues, notes] = await Promise.all([
  api.list_repository_issues({owner: "Dunke1Cloud", repo: "ToolMesh"}),
  api.notebin.list_items({}),
]);
return {open_issues: issues.length, notes: notes.map(n => n.text)};
"""
        res = gw.execute(script, ADMIN)
        assert res.value == {"open_issues": 3, "notes": ["ship it"]}
        script_id = records(sink, "script")[0]["id"]
        assert all(r["parent"] == script_id for r in records(sink, "tool"))

    def test_denial_is_catchable_and_audited(self, gh):
        gw, sink = make_gateway(gh, GH_DOC)
        script = """
let denied = null;
try {
  await api.delete_repository({owner: "victim", repo: "repo"});
} catch (e) {
  denied = {name: e.name, message: e.message};
}
const issues = await api.list_repository_issues({owner: "Dunke1Cloud", repo: "ToolMesh"});
return {denied: denied, still_ran: issues.length};
"""
        res = gw.execute(script, READER)
        assert res.value["denied"]["name"] == "AuthzDenied"
        assert "dangerous" in res.value["denied"]["message"]
        assert res.value["still_ran"] == 3
        assert gh.count("/repos/victim/repo") == 0
        denies = [r for r in records(sink, "tool") if r["decision"] == "deny"]
        assert len(denies) == 1
        assert denies[0]["tool"] == "delete_repository"

    def test_uncaught_denial_fails_script(self, gh):
        gw, sink = make_gateway(gh, GH_DOC)
        with pytest.raises(ScriptError) as err:
            gw.execute(
                'await api.delete_repository({owner: "a", repo: "b"});'
                "return 1;", READER)
        assert "AuthzDenied" in str(err.value)
        assert records(sink, "script")[0]["outcome"] == "error"

    def test_param_errors_catchable_by_name(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        script = """
try {
  await api.list_repository_issues({owner: "o"});
  return "no error";
} catch (e) {
  return e.name;
}
"""
        assert gw.execute(script, ADMIN).value == "MissingRequiredParam"

    def test_missing_tool_is_catchable_type_error(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        script = """
try {
  await api.launch_rockets({});
} catch (e) {
  return e.name;
}
"""
        assert gw.execute(script, ADMIN).value == "TypeError"

    def test_call_cap_is_not_catchable(self, gh):
        gw, _ = make_gateway(gh, GH_DOC,
                             limits=SandboxLimits(max_api_calls=2))
        script = """
try {
  for (const i of [1, 2, 3]) {
    await api.list_repository_issues({owner: "Dunke1Cloud", repo: "ToolMesh"});
  }
} catch (e) {
  return "swallowed";
}
return "done";
"""
        with pytest.raises(CallCapExceeded):
            gw.execute(script, ADMIN)

    def test_jq_override_applied_to_result(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        res = gw.execute(FILTER_SNIPPET, ADMIN, jq_override=".[0].number")
        assert res.value == 2

    def test_jq_override_can_be_disabled(self, gh):
        gw, sink = make_gateway(gh, GH_DOC, allow_jq_override=False)
        with pytest.raises(OverrideForbidden):
            gw.execute("return 1", ADMIN, jq_override=".")
        assert records(sink) == []  # refused before anything began

    def test_per_call_limits_override(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        with pytest.raises(CallCapExceeded):
            gw.execute(
                'await api.list_repository_issues({owner: "Dunke1Cloud", repo: "ToolMesh"});'
                "return 1;",
                ADMIN, limits=SandboxLimits(max_api_calls=0))

    def test_script_body_not_in_audit(self, gh):
        gw, sink = make_gateway(gh, GH_DOC)
        gw.execute('return "canary-payload-string";', ADMIN)
        serialized = sink.serialized()
        assert "canary-payload-string" not in serialized
        assert records(sink, "script")[0]["param_names"] == ["script"]


class TestNestedComposite:
    @pytest.fixture()
    def hub(self):
        with MockUpstream() as up:
            SessionSim(HUB_USER, HUB_PASSWORD).install(up)
            up.json("GET", "/devices", [
                {"id": 1, "name": "living room lamp"},
                {"id": 2, "name": "heater"},
            ])
            up.json("GET", "/devices/status", [
                {"id": 1, "relay_on": True, "power_w": 9.5},
                {"id": 2, "relay_on": False, "power_w": 0},
                {"id": 3, "relay_on": True, "power_w": 41.2},
            ])
            yield up

    def hub_gateway(self, up):
        text = (FIXTURES / "devices.dadl").read_text().replace(
            "https://hub.example.internal/api", up.base_url)
        resolver = CredentialResolver(env={"HUB_USER": HUB_USER,
                                           "HUB_PASSWORD": HUB_PASSWORD})
        sink = MemorySink()
        gk = Gatekeeper(POLICY, AuditLog(sink))
        return Gateway([parse_document(text)], resolver=resolver,
                       gatekeeper=gk), sink

    def test_composite_callable_from_script(self, hub):
        gw, sink = self.hub_gateway(hub)
        res = gw.execute(
            "const rows = await api.get_named_status({only_on: true});"
            "return rows.map(r => r.name);", ADMIN)
        # joined names for relays that are on; id 3 has no name entry
        assert res.value == ["living room lamp", 3]

    def test_nested_audit_parentage(self, hub):
        gw, sink = self.hub_gateway(hub)
        gw.execute("return await api.get_named_status({});", ADMIN)
        scripts = records(sink, "script")
        outer = next(r for r in scripts if r["tool"] == "execute")
        inner = next(r for r in scripts if r["tool"] == "get_named_status")
        assert inner["parent"] == outer["id"]
        tools = records(sink, "tool")
        assert len(tools) == 2
        assert all(r["parent"] == inner["id"] for r in tools)

    def test_read_only_principal_can_run_read_composite(self, hub):
        gw, _ = self.hub_gateway(hub)
        res = gw.execute("return (await api.get_named_status({})).length;",
                         READER)
        assert res.value == 3


class TestAdvertisement:
    def test_constant_across_catalogs(self, gh):
        empty, _ = make_gateway(gh)
        one, _ = make_gateway(gh, NOTES_DOC)
        three, _ = make_gateway(gh, GH_DOC, NOTES_DOC, CLIPS_DOC)
        texts = {g.advertisement_surface() for g in (empty, one, three)}
        assert len(texts) == 1
        assert texts == {advertisement_surface()}

    def test_token_budget(self):
        tokens = chars4_tokens(advertisement_surface())
        assert 700 <= tokens <= 1300

    def test_two_tools_advertised(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        tools = gw.advertised_tools()
        assert [t["name"] for t in tools] == ["search", "execute"]
        assert tools[0]["inputSchema"]["required"] == ["query"]
        assert tools[1]["inputSchema"]["required"] == ["script"]

    def test_surface_never_names_catalog_tools(self, gh):
        gw, _ = make_gateway(gh, GH_DOC, NOTES_DOC)
        surface = gw.advertisement_surface()
        assert "list_repository_issues" not in surface
        assert "notebin" not in surface


class TestMeasure:
    def test_empty_catalog_convention(self):
        report = measure_context(Catalog([]))
        assert report.catalog_tool_count == 0
        assert report.flat_advertisement_tokens == 0
        assert report.reduction_ratio == 0.0
        assert report.codemode_surface_tokens > 0

    def test_flat_tokens_match_rendering(self, gh):
        gw, _ = make_gateway(gh, GH_DOC, NOTES_DOC)
        cat = gw.catalog
        report = gw.measure()
        assert report.flat_advertisement_tokens == chars4_tokens(
            flat_advertisement(cat))
        assert report.reduction_ratio == pytest.approx(
            report.flat_advertisement_tokens / report.codemode_surface_tokens)

    def test_flat_rendering_covers_every_tool(self, gh):
        gw, _ = make_gateway(gh, GH_DOC, NOTES_DOC)
        flat = flat_advertisement(gw.catalog)
        for entry in gw.catalog.entries:
            assert json.dumps(gw.catalog.call_name(entry)) in flat

    def test_custom_tokenizer(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        report = gw.measure(tokenizer_mode=len)
        assert report.codemode_surface_tokens == len(advertisement_surface())

    def test_bad_tokenizer_mode(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        with pytest.raises(ValueError):
            gw.measure(tokenizer_mode="words")


class TestHotReload:
    def test_additive_reload_found_by_search(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        assert gw.search("notes") == []
        new_docs = [doc(GH_DOC, gh.base_url), doc(NOTES_DOC, gh.base_url)]
        cat = gw.hot_reload(new_docs)
        assert cat.generation == 1
        assert gw.search("saved notes")[0].qualified == "notebin.list_items"

    def test_reload_from_directory(self, gh, tmp_path):
        (tmp_path / "gh.dadl").write_text(
            GH_DOC.replace("__BASE__", gh.base_url))
        (tmp_path / "notes.dadl").write_text(
            NOTES_DOC.replace("__BASE__", gh.base_url))
        gw, _ = make_gateway(gh)
        cat = gw.hot_reload(tmp_path)
        assert set(cat.documents) == {"githome", "notebin"}
        assert load_library(tmp_path).keys() == cat.documents.keys()

    def test_invalid_file_rejects_whole_reload(self, gh, tmp_path):
        (tmp_path / "ok.dadl").write_text(
            NOTES_DOC.replace("__BASE__", gh.base_url))
        (tmp_path / "broken.dadl").write_text("backend: {name: x}\n")
        gw, _ = make_gateway(gh, GH_DOC)
        before = gw.catalog
        with pytest.raises(SchemaError) as err:
            gw.hot_reload(tmp_path)
        assert "broken.dadl" in str(err.value)
        assert gw.catalog is before
        assert gw.catalog.generation == 0

    def test_midflight_execution_finishes_on_old_generation(self):
        with MockUpstream() as up:
            def slow(request, upstream):
                time.sleep(0.4)
                return Response(body=[1, 2, 3])

            up.route("GET", "/notes", slow)
            gw, _ = make_gateway(up, NOTES_DOC)
            with ThreadPoolExecutor(max_workers=1) as pool:
                running = pool.submit(
                    gw.execute, "return (await api.list_items({})).length;",
                    ADMIN)
                time.sleep(0.15)
                gw.hot_reload([])  # backend deleted mid-flight
                assert running.result(timeout=5).value == 3
        assert gw.catalog.generation == 1
        with pytest.raises(ScriptError):
            gw.execute("return (await api.list_items({})).length;", ADMIN)

    def test_reload_single_file_path(self, gh, tmp_path):
        path = tmp_path / "solo.dadl"
        path.write_text(CLIPS_DOC.replace("__BASE__", gh.base_url))
        gw, _ = make_gateway(gh, GH_DOC)
        cat = gw.hot_reload(path)
        assert list(cat.documents) == ["clipshelf"]


def rpc(method, params=None, id=1):
    msg = {"jsonrpc": "2.0", "method": method}
    if id is not None:
        msg["id"] = id
    if params is not None:
        msg["params"] = params
    return json.dumps(msg)


class TestStdioTransport:
    def run_session(self, gw, lines):
        out = io.StringIO()
        serve_stdio(gw, rfile=io.StringIO("\n".join(lines) + "\n"), wfile=out)
        return [json.loads(l) for l in out.getvalue().splitlines()]

    def test_conversation(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [
            rpc("initialize", {"principal": {"id": "ops", "roles": ["admin"]}}, id=1),
            rpc("tools/list", id=2),
            rpc("tools/call", {"name": "search",
                               "arguments": {"query": "issues"}}, id=3),
            rpc("tools/call", {"name": "execute",
                               "arguments": {"script": FILTER_SNIPPET}}, id=4),
        ])
        assert [r["id"] for r in replies] == [1, 2, 3, 4]
        assert replies[0]["result"]["principal"] == "ops"
        tools = replies[1]["result"]["tools"]
        assert [t["name"] for t in tools] == ["search", "execute"]
        assert replies[2]["result"]["results"][0]["name"] == "list_repository_issues"
        assert replies[3]["result"]["value"] == [
            {"number": 2, "title": "Leak in parser", "url": "https://g/2"}]

    def test_list_tools_constant_for_any_catalog(self, gh):
        for texts in ([], [GH_DOC], [GH_DOC, NOTES_DOC, CLIPS_DOC]):
            gw, _ = make_gateway(gh, *texts)
            replies = self.run_session(gw, [rpc("tools/list")])
            assert len(replies[0]["result"]["tools"]) == 2

    def test_parse_error(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, ["{this is not json"])
        assert replies[0]["error"]["code"] == -32700
        assert replies[0]["id"] is None

    def test_unknown_method(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [rpc("prompts/list")])
        assert replies[0]["error"]["code"] == -32601

    def test_execute_requires_principal(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [
            rpc("tools/call", {"name": "execute",
                               "arguments": {"script": "return 1"}})])
        assert replies[0]["error"]["code"] == -32001

    def test_search_needs_no_principal(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [
            rpc("tools/call", {"name": "search", "arguments": {"query": "issues"}})])
        assert replies[0]["result"]["results"]

    def test_notifications_produce_no_reply(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [
            rpc("initialize", {"principal": "ops"}, id=None),
            rpc("tools/list", id=5),
        ])
        assert [r["id"] for r in replies] == [5]

    def test_unknown_tool_name(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [
            rpc("tools/call", {"name": "list_repository_issues",
                               "arguments": {}})])
        assert replies[0]["error"]["code"] == -32602
        assert "search and execute" in replies[0]["error"]["message"]

    def test_invalid_arguments(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        replies = self.run_session(gw, [
            rpc("tools/call", {"name": "search", "arguments": {"query": ""}}),
            rpc("tools/call", {"name": "execute", "arguments": {}}),
        ])
        assert all(r["error"]["code"] == -32602 for r in replies)

    def test_preset_principal_skips_handshake(self, gh):
        gw, _ = make_gateway(gh, GH_DOC)
        out = io.StringIO()
        serve_stdio(
            gw, rfile=io.StringIO(rpc("tools/call", {
                "name": "execute", "arguments": {"script": "return 7"}}) + "\n"),
            wfile=out, principal=ADMIN)
        assert json.loads(out.getvalue())["result"]["value"] == 7


HTTP_POLICY = Policy(
    rules=(PolicyRule(role="admin", allow=("*",)),
           PolicyRule(role="reader", allow=("read",))),
    principals=(("tok-admin-1", ("admin",)), ("tok-reader-1", ("reader",))),
)


class TestHttpTransport:
    @pytest.fixture()
    def server(self, gh):
        gw, sink = make_gateway(gh, GH_DOC, policy=HTTP_POLICY)
        srv = serve_http(gw)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        host, port = srv.server_address
        yield f"http://{host}:{port}", sink
        srv.shutdown()
        srv.server_close()

    def post(self, url, payload, token=None):
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        return requests.post(url, data=payload, headers=headers, timeout=10)

    def test_tools_list(self, server):
        url, _ = server
        body = self.post(url, rpc("tools/list")).json()
        assert [t["name"] for t in body["result"]["tools"]] == ["search", "execute"]

    def test_bearer_principal_executes(self, server):
        url, _ = server
        body = self.post(url, rpc("tools/call", {
            "name": "execute",
            "arguments": {"script": FILTER_SNIPPET}}), token="tok-admin-1").json()
        assert body["result"]["value"][0]["number"] == 2

    def test_no_bearer_no_execute(self, server):
        url, _ = server
        body = self.post(url, rpc("tools/call", {
            "name": "execute", "arguments": {"script": "return 1"}})).json()
        assert body["error"]["code"] == -32001

    def test_reader_token_denied_on_write(self, server):
        url, _ = server
        script = 'await api.delete_repository({owner: "a", repo: "b"}); return 1;'
        body = self.post(url, rpc("tools/call", {
            "name": "execute", "arguments": {"script": script}}),
            token="tok-reader-1").json()
        assert body["error"]["code"] == -32000
        assert "AuthzDenied" in body["error"]["message"]

    def test_malformed_body(self, server):
        url, _ = server
        body = self.post(url, "{oops").json()
        assert body["error"]["code"] == -32700

    def test_notification_gets_204(self, server):
        url, _ = server
        response = self.post(url, rpc("ping", id=None))
        assert response.status_code == 204


class TestExposeNative:
    def test_native_tools_listed_and_callable(self, gh):
        gw, _ = make_gateway(gh, GH_DOC, expose_native=True)
        names = [t["name"] for t in gw.advertised_tools()]
        assert names[:2] == ["search", "execute"]
        assert "list_repository_issues" in names
        session = GatewaySession(gw, principal=ADMIN)
        reply = session.handle(json.loads(rpc("tools/call", {
            "name": "list_repository_issues",
            "arguments": {"owner": "Dunke1Cloud", "repo": "ToolMesh"}})))
        assert len(reply["result"]["value"]) == 3

    def test_native_denial_maps_to_rpc_error(self, gh):
        gw, _ = make_gateway(gh, GH_DOC, expose_native=True)
        session = GatewaySession(gw, principal=READER)
        reply = session.handle(json.loads(rpc("tools/call", {
            "name": "delete_repository",
            "arguments": {"owner": "a", "repo": "b"}})))
        assert reply["error"]["data"]["error"] == "AuthzDenied"
        assert gh.count("/repos/a/b") == 0

    def test_native_advertisement_scales_with_catalog(self, gh):
        lean, _ = make_gateway(gh, GH_DOC, expose_native=True)
        wide, _ = make_gateway(gh, GH_DOC, NOTES_DOC, expose_native=True)
        assert len(wide.advertised_tools()) > len(lean.advertised_tools())
