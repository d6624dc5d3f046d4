import json
import threading

import pytest

from dadl.authz import (
    ALLOW_ALL,
    AuditLog,
    FileSink,
    Gatekeeper,
    MemorySink,
    Policy,
    PolicyRule,
    Principal,
    authorize,
    load_policy,
    scan_for_leaks,
    strictest_label,
)
from dadl.credentials import SecretValue
from dadl.errors import AuthzDenied, SchemaError, SinkUnavailable
from dadl.model import AccessLabel


def _policy(*labels):
    return Policy(rules=(PolicyRule(role="r", allow=tuple(labels)),))


P = Principal("r")


class TestAuthorize:
    def test_exact_grant(self):
        assert authorize(P, AccessLabel("read"), _policy("read")).allowed

    def test_higher_grant_covers_lower(self):
        assert authorize(P, AccessLabel("read"), _policy("write")).allowed
        assert authorize(P, AccessLabel("write"), _policy("admin")).allowed
        assert authorize(P, AccessLabel("admin"), _policy("dangerous")).allowed

    def test_lower_grant_does_not_cover_higher(self):
        assert not authorize(P, AccessLabel("write"), _policy("read")).allowed
        assert not authorize(P, AccessLabel("dangerous"), _policy("admin")).allowed

    def test_custom_label_exact_only(self):
        assert authorize(P, AccessLabel("billing"), _policy("billing")).allowed
        assert not authorize(P, AccessLabel("billing"), _policy("dangerous")).allowed
        # and a custom grant covers nothing else
        assert not authorize(P, AccessLabel("read"), _policy("billing")).allowed

    def test_unlabeled_denied_without_wildcard(self):
        decision = authorize(P, None, _policy("dangerous"))
        assert not decision.allowed
        assert "no access label" in decision.reason

    def test_wildcard_covers_everything(self):
        assert authorize(P, None, _policy("*")).allowed
        assert authorize(P, AccessLabel("dangerous"), _policy("*")).allowed
        assert authorize(P, AccessLabel("custom_thing"), _policy("*")).allowed

    def test_unknown_role_gets_nothing(self):
        stranger = Principal("someone-else")
        assert not authorize(stranger, AccessLabel("read"), _policy("read")).allowed

    def test_star_role_matches_any_principal(self):
        stranger = Principal("someone-else")
        assert authorize(stranger, AccessLabel("read"), ALLOW_ALL).allowed

    def test_roles_union_across_rules(self):
        policy = Policy(rules=(
            PolicyRule(role="viewer", allow=("read",)),
            PolicyRule(role="editor", allow=("write",)),
        ))
        both = Principal("u", roles=("viewer", "editor"))
        assert authorize(both, AccessLabel("write"), policy).allowed
        only_viewer = Principal("u", roles=("viewer",))
        assert not authorize(only_viewer, AccessLabel("write"), policy).allowed


class TestStrictestLabel:
    def test_well_known_order(self):
        labels = [AccessLabel("read"), AccessLabel("write")]
        assert strictest_label(labels).value == "write"
        labels.append(AccessLabel("dangerous"))
        assert strictest_label(labels).value == "dangerous"

    def test_none_entries_ignored(self):
        assert strictest_label([None, AccessLabel("read")]).value == "read"
        assert strictest_label([None, None]) is None
        assert strictest_label([]) is None

    def test_custom_dominates(self):
        labels = [AccessLabel("dangerous"), AccessLabel("billing")]
        assert strictest_label(labels).value == "billing"

    def test_custom_tie_breaks_deterministically(self):
        labels = [AccessLabel("zeta"), AccessLabel("alpha")]
        assert strictest_label(labels).value == "zeta"
        assert strictest_label(list(reversed(labels))).value == "zeta"


class TestLoadPolicy:
    def test_bare_rule_list(self):
        policy = load_policy("- role: ops\n  allow: [read, write]\n")
        assert policy.rules == (PolicyRule(role="ops", allow=("read", "write")),)

    def test_full_form_with_principals(self):
        policy = load_policy("""
rules:
  - role: ops
    allow: [read]
principals:
  alice: [ops]
""")
        alice = policy.resolve_principal("alice")
        assert alice.roles == ("ops",)
        assert authorize(alice, AccessLabel("read"), policy).allowed

    def test_unmapped_principal_uses_own_id_as_role(self):
        policy = load_policy("- role: bob\n  allow: [read]\n")
        bob = policy.resolve_principal("bob")
        assert authorize(bob, AccessLabel("read"), policy).allowed

    def test_scalar_allow_is_accepted(self):
        policy = load_policy("- role: ops\n  allow: read\n")
        assert policy.rules[0].allow == ("read",)

    @pytest.mark.parametrize("text", ["", "just a string", "- role: x\n", "- allow: [read]\n"])
    def test_malformed(self, text):
        with pytest.raises(SchemaError):
            load_policy(text)


class TestGatekeeper:
    def make(self, *labels):
        sink = MemorySink()
        gk = Gatekeeper(policy=_policy(*labels), audit=AuditLog(sink))
        return gk, sink

    def test_allow_returns_context(self):
        gk, sink = self.make("read")
        ctx = gk.begin(P, backend="b", tool="t", access=AccessLabel("read"),
                       params={"x": 1})
        assert ctx.decision.allowed
        assert sink.records == []  # nothing emitted until finish
        gk.finish(ctx, ok=True, bytes_out=10)
        (record,) = sink.records
        assert record["kind"] == "tool"
        assert record["decision"] == "allow"
        assert record["outcome"] == "ok"
        assert record["principal"] == "r"
        assert record["param_names"] == ["x"]
        assert "duration_ms" in record

    def test_deny_records_and_raises(self):
        gk, sink = self.make("read")
        with pytest.raises(AuthzDenied) as exc:
            gk.begin(P, backend="b", tool="t", access=AccessLabel("admin"))
        assert "no grant" in str(exc.value)
        (record,) = sink.records
        assert record["decision"] == "deny"
        assert record["outcome"] == "deny"
        assert record["kind"] == "tool"

    def test_request_records_nest_under_invocation(self):
        gk, sink = self.make("read")
        ctx = gk.begin(P, backend="b", tool="t", access=AccessLabel("read"))
        ctx.log_request(method="GET", path="/items", status=200, attempt=1,
                        duration_ms=3.5, bytes_in=100)
        ctx.log_request(method="GET", path="/items", status=200, attempt=1)
        gk.finish(ctx, ok=True)
        kinds = [r["kind"] for r in sink.records]
        assert kinds == ["request", "request", "tool"]
        assert {r.get("parent") for r in sink.records[:2]} == {ctx.invocation_id}
        assert sink.records[2]["requests"] == 2

    def test_script_contexts_parent_children(self):
        gk, sink = self.make("*")
        outer = gk.begin(P, backend="b", tool="combo", access=None, kind="script")
        inner = gk.begin(P, backend="b", tool="t", access=AccessLabel("read"),
                         parent=outer)
        gk.finish(inner, ok=True)
        gk.finish(outer, ok=True, api_calls=1)
        assert sink.records[0]["parent"] == outer.invocation_id
        assert sink.records[0]["kind"] == "tool"
        assert sink.records[1]["kind"] == "script"
        assert sink.records[1]["api_calls"] == 1

    def test_params_never_recorded_verbatim(self):
        gk, sink = self.make("read")
        ctx = gk.begin(P, backend="b", tool="t", access=AccessLabel("read"),
                       params={"query": "super-sensitive-payload"})
        gk.finish(ctx, ok=True)
        assert "super-sensitive-payload" not in sink.serialized()
        assert sink.records[0]["param_names"] == ["query"]
        assert len(sink.records[0]["params_sha256"]) == 12


class TestSinks:
    def test_file_sink_ndjson(self, tmp_path):
        path = tmp_path / "audit.ndjson"
        sink = FileSink(path)
        sink.emit({"kind": "tool", "n": 1})
        sink.emit({"kind": "request", "n": 2})
        sink.close()
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert [l["n"] for l in lines] == [1, 2]

    def test_strict_mode_raises_on_sink_failure(self):
        class Broken:
            def emit(self, record):
                raise OSError("disk full")

        log = AuditLog(Broken(), strict=True)
        with pytest.raises(SinkUnavailable):
            log.emit({"kind": "tool"})

    def test_default_mode_falls_back_to_stderr(self, capsys):
        class Broken:
            def emit(self, record):
                raise OSError("disk full")

        log = AuditLog(Broken(), strict=False)
        log.emit({"kind": "tool", "tool": "t"})
        err = capsys.readouterr().err
        assert '"audit_degraded":true' in err
        assert '"tool":"t"' in err

    def test_memory_sink_thread_safety(self):
        sink = MemorySink()

        def pump():
            for i in range(50):
                sink.emit({"i": i})

        threads = [threading.Thread(target=pump) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(sink.records) == 400


class TestLeakScan:
    def test_detects_plain_and_escaped(self):
        assert scan_for_leaks('{"token":"abc123"}', ["abc123"]) == ["abc123"]
        assert scan_for_leaks('{"note":"say \\"hi\\""}', ['say "hi"']) == ['say "hi"']
        assert scan_for_leaks('{"ok":1}', ["abc123"]) == []

    def test_secret_values_serialize_redacted(self):
        sink = MemorySink()
        log = AuditLog(sink)
        # even if a wrapper object is mistakenly placed in a record, the
        # serialized output shows the reference, not the value
        log.emit({"kind": "tool", "oops": SecretValue("env/T", "raw-secret-xyz")})
        assert "raw-secret-xyz" not in sink.serialized()
        assert "env/T" in sink.serialized()
