"""Sandbox tests: budgets, the static scan, escape attempts, and the two
bundled composites run against stand-in tool bindings."""

import time
from pathlib import Path

import pytest

from dadl.errors import (
    CallCapExceeded,
    OutputTooLarge,
    SandboxError,
    ScriptError,
    ScriptTimeout,
    StaticCheckFailed,
    UnsupportedConstruct,
)
from dadl.es.interp import JsError, undefined
from dadl.model import parse_document
from dadl.sandbox import (
    Sandbox,
    SandboxLimits,
    sanitize_args,
    static_check,
)

FIXTURES = Path(__file__).parent / "fixtures"


def make_sandbox(timeout=5.0, cap=50, out_bytes=1 << 20):
    return Sandbox(SandboxLimits(timeout=timeout, max_api_calls=cap,
                                 max_output_bytes=out_bytes))


def composite_code(fixture, name):
    doc = parse_document((FIXTURES / fixture).read_text())
    return doc.composite_map()[name].code


# --- fixture composites as oracles -------------------------------------------

class TestFixtureComposites:
    """The bundled documents' scripts, run against canned responses.

    Expected outputs are worked out by hand from the canned data, so a
    regression in any evaluator feature these scripts rely on shows up as a
    wrong value rather than a crash.
    """

    def devices_api(self):
        return {
            "list_devices": lambda p: [
                {"id": 1, "name": "living room lamp"},
                {"id": 2, "name": "heater"},
            ],
            "get_all_device_status": lambda p: [
                {"id": 1, "relay_on": True, "power_w": 9.5},
                {"id": 2, "relay_on": False, "power_w": 0},
                {"id": 3, "relay_on": True, "power_w": 40},
            ],
        }

    def test_device_status_join(self):
        code = composite_code("devices.dadl", "get_named_status")
        result = make_sandbox().run(code, api=self.devices_api(),
                                    params={"only_on": False})
        assert result.value == [
            {"id": 1, "relay_on": True, "power_w": 9.5, "name": "living room lamp"},
            {"id": 2, "relay_on": False, "power_w": 0, "name": "heater"},
            # id 3 has no catalog entry; the script falls back to the id
            {"id": 3, "relay_on": True, "power_w": 40, "name": 3},
        ]
        assert result.api_calls == 2

    def test_device_status_filtered(self):
        code = composite_code("devices.dadl", "get_named_status")
        result = make_sandbox().run(code, api=self.devices_api(),
                                    params={"only_on": True})
        assert [d["id"] for d in result.value] == [1, 3]

    def hn_items(self):
        return {
            7: {"id": 7, "title": "Launch", "kids": [71, 72, 73, 74, 75]},
            71: {"id": 71, "text": "first"},
            72: {"id": 72, "text": "gone", "deleted": True},
            73: {"id": 73, "text": "dead one", "dead": True},
            74: {"id": 74, "text": "fourth"},
            75: {"id": 75, "text": "fifth"},
            8: {"id": 8, "title": "Quiet"},
        }

    def hn_api(self):
        items = self.hn_items()
        return {"get_item": lambda p: items.get(p["id"])}

    def test_story_with_comments(self):
        code = composite_code("hackernews.dadl", "get_story_with_comments")
        result = make_sandbox().run(code, api=self.hn_api(),
                                    params={"id": 7, "comment_limit": 4})
        assert result.value["title"] == "Launch"
        # limit keeps 71..74; deleted and dead ones are dropped
        assert [c["id"] for c in result.value["comments"]] == [71, 74]
        assert result.api_calls == 5  # story + 4 kids

    def test_story_without_kids_short_circuits(self):
        code = composite_code("hackernews.dadl", "get_story_with_comments")
        result = make_sandbox().run(code, api=self.hn_api(),
                                    params={"id": 8, "comment_limit": 10})
        assert result.value == {"id": 8, "title": "Quiet", "comments": []}
        assert result.api_calls == 1

    def test_fanout_is_concurrent(self):
        code = composite_code("hackernews.dadl", "get_story_with_comments")
        items = self.hn_items()

        def slow_get(p):
            time.sleep(0.25)
            return items.get(p["id"])

        start = time.monotonic()
        result = make_sandbox().run(code, api={"get_item": slow_get},
                                    params={"id": 7, "comment_limit": 4})
        elapsed = time.monotonic() - start
        assert [c["id"] for c in result.value["comments"]] == [71, 74]
        # story fetch + parallel batch of 4: two rounds, not five
        assert elapsed < 1.0


# --- static scan -------------------------------------------------------------

class TestStaticScan:
    @pytest.mark.parametrize("source,token", [
        ("const r = fetch('http://x')", "fetch"),
        ("require('child_process')", "require"),
        ("import('fs')", "import"),
        ("eval('1 + 1')", "eval"),
        ("const F = Function", "Function"),
        ("const x = new XMLHttpRequest()", "XMLHttpRequest"),
        ("const w = new WebSocket('ws://x')", "WebSocket"),
        ("process.exit(1)", "process"),
        ("globalThis.api", "globalThis"),
        ("// fetch in a comment still counts", "fetch"),
        ("const s = 'contains eval inside'", "eval"),
    ])
    def test_forbidden_tokens(self, source, token):
        with pytest.raises(StaticCheckFailed) as exc:
            static_check(source)
        assert token in exc.value.tokens

    def test_substrings_do_not_trip(self):
        # word boundary: prefetch, evaluation, processing are fine
        static_check("const prefetch = 1; const evaluation = 2; const processing = 3")

    def test_scan_reports_every_token_once(self):
        with pytest.raises(StaticCheckFailed) as exc:
            static_check("fetch(); fetch(); eval()")
        assert exc.value.tokens == ["eval", "fetch"]

    def test_scan_runs_before_parse(self):
        # source is not even valid in the subset, but the scan fires first
        with pytest.raises(StaticCheckFailed):
            make_sandbox().run("class X { eval() {} }")


# --- budgets -----------------------------------------------------------------

class TestCallCap:
    @pytest.mark.parametrize("cap", [1, 3, 7])
    def test_cap_allows_exactly_cap_calls(self, cap):
        sb = make_sandbox(cap=cap)
        calls = []
        api = {"t": lambda p: calls.append(p) or len(calls)}

        script = "\n".join(f"await api.t({{n: {i}}})" for i in range(cap))
        result = sb.run(script + "\nreturn 'done'", api=api)
        assert result.value == "done"
        assert result.api_calls == cap
        assert len(calls) == cap

        calls.clear()
        over = "\n".join(f"await api.t({{n: {i}}})" for i in range(cap + 1))
        with pytest.raises(CallCapExceeded):
            sb.run(over, api=api)
        assert len(calls) == cap  # the overflow call never ran

    def test_concurrent_fanout_cannot_race_past_cap(self):
        sb = make_sandbox(cap=5)
        started = []

        def tool(p):
            started.append(p)
            time.sleep(0.05)
            return p

        script = "return await Promise.all([1,2,3,4,5,6,7,8].map(n => api.t({ n })))"
        with pytest.raises(CallCapExceeded):
            sb.run(script, api={"t": tool})
        assert len(started) <= 5

    def test_cap_not_catchable(self):
        sb = make_sandbox(cap=1)
        script = """
        try {
          await api.t({});
          await api.t({});
        } catch (e) {
          return 'absorbed';
        }
        """
        with pytest.raises(CallCapExceeded):
            sb.run(script, api={"t": lambda p: 1})

    def test_charge_is_at_submission(self):
        # calls that fail upstream still consume budget
        sb = make_sandbox(cap=2)

        def failing(p):
            raise RuntimeError("upstream broke")

        script = """
        try { await api.t({}) } catch (e) { }
        try { await api.t({}) } catch (e) { }
        try { await api.t({}) } catch (e) { }
        return 'done';
        """
        with pytest.raises(CallCapExceeded):
            sb.run(script, api={"t": failing})


class TestTimeout:
    def test_loop_terminated_near_limit(self):
        sb = make_sandbox(timeout=0.5)
        start = time.monotonic()
        with pytest.raises(ScriptTimeout):
            sb.run("while (true) { const x = 1 }")
        assert 0.4 < time.monotonic() - start < 1.5

    def test_timeout_passes_through_catch(self):
        sb = make_sandbox(timeout=0.5)
        with pytest.raises(ScriptTimeout):
            sb.run("try { while (true) { } } catch (e) { return 'no' }")

    def test_timeout_clamped_to_ceiling(self):
        limits = SandboxLimits(timeout=10_000)
        assert limits.effective_timeout() == 120.0

    def test_slow_api_call_bounded_by_deadline(self):
        sb = make_sandbox(timeout=0.5)

        def sleepy(p):
            time.sleep(5)
            return 1

        start = time.monotonic()
        with pytest.raises(ScriptTimeout):
            sb.run("return await api.s({})", api={"s": sleepy})
        assert time.monotonic() - start < 2.0


class TestOutputLimit:
    def test_oversized_result_refused(self):
        sb = make_sandbox(out_bytes=256)
        with pytest.raises(OutputTooLarge, match="limit is 256"):
            sb.run("return 'x'.repeat(500)")

    def test_boundary_is_exact(self):
        sb = make_sandbox(out_bytes=12)
        assert sb.run("return 'aaaaaaaaaa'").value == "a" * 10  # 12 bytes quoted
        with pytest.raises(OutputTooLarge):
            sb.run("return 'aaaaaaaaaaa'")  # 13 bytes quoted

    def test_logs_do_not_count_against_output(self):
        sb = make_sandbox(out_bytes=64)
        result = sb.run("console.log('y'.repeat(500)); return 'small'")
        assert result.value == "small"
        assert len(result.logs[0]) == 500


# --- escape attempts ---------------------------------------------------------

ADVERSARIAL = [
    ("busy loop", "while (true) {}", ScriptTimeout),
    ("busy loop inside catch",
     "try { while (true) {} } catch (e) { return 'held' }", ScriptTimeout),
    ("retry loop around timeout",
     "while (true) { try { while (true) {} } catch (e) {} }", ScriptTimeout),
    ("allocation loop",
     "const a = []; while (true) { a.push('chunk') }", ScriptTimeout),
    ("fanout past call cap",
     "return await Promise.all([1,2,3,4,5,6,7,8,9,10].map(n => api.t({ n })))",
     CallCapExceeded),
    ("sequential past cap under catch",
     "let i = 0; while (i < 20) { try { await api.t({}) } catch (e) {} i += 1 }",
     CallCapExceeded),
    ("fetch", "return fetch('http://169.254.169.254/')", StaticCheckFailed),
    ("require", "const fs = require('fs')", StaticCheckFailed),
    ("dynamic import", "const m = await import('net')", StaticCheckFailed),
    ("eval", "return eval('api')", StaticCheckFailed),
    ("function constructor", "return Function('return 7')()", StaticCheckFailed),
    ("globalThis probe", "return globalThis", StaticCheckFailed),
    ("process probe", "return process.env", StaticCheckFailed),
    ("constructor ladder",
     "return ({}).constructor.constructor('return 1')()", ScriptError),
    ("proto write",
     "const o = {}; o['__pro'+'to__'] = {polluted: 1}; return o", ScriptError),
    ("giant string", "return 'x'.repeat(999999999)", ScriptError),
    ("unbounded recursion", "const f = n => f(n + 1); return f(0)", ScriptError),
]


class TestAdversarial:
    @pytest.mark.parametrize("label,script,expected",
                             ADVERSARIAL, ids=[a[0] for a in ADVERSARIAL])
    def test_contained(self, label, script, expected):
        sb = make_sandbox(timeout=0.5, cap=5)
        api = {"t": lambda p: p}
        with pytest.raises(expected):
            sb.run(script, api=api)

    def test_proto_key_from_upstream_is_inert(self):
        # hostile response bodies can carry these keys; scripts that copy
        # them around must not gain anything
        sb = make_sandbox()
        api = {"t": lambda p: {"__proto__": {"evil": 1}, "ok": 2}}
        result = sb.run("""
        const body = await api.t({});
        const copy = { ...body };
        return { read_blocked: body.__proto__ === undefined, copied: copy };
        """, api=api)
        assert result.value == {"read_blocked": True, "copied": {"ok": 2}}

    def test_api_handles_cannot_leak_through_results(self):
        sb = make_sandbox()
        with pytest.raises(ScriptError, match="function"):
            sb.run("return await api.t({ cb: api.t })", api={"t": lambda p: p})


# --- argument boundary -------------------------------------------------------

class TestSanitizeArgs:
    def test_undefined_object_values_dropped(self):
        assert sanitize_args({"a": 1, "b": undefined}) == {"a": 1}

    def test_undefined_array_slots_become_null(self):
        assert sanitize_args([1, undefined, 2]) == [1, None, 2]

    def test_nested(self):
        value = {"outer": {"keep": 0, "drop": undefined}, "list": [undefined]}
        assert sanitize_args(value) == {"outer": {"keep": 0}, "list": [None]}

    def test_functions_rejected(self):
        with pytest.raises(JsError):
            sanitize_args({"cb": lambda: 1})

    def test_overdeep_nesting_rejected(self):
        value = {}
        node = value
        for _ in range(40):
            node["n"] = {}
            node = node["n"]
        with pytest.raises(JsError, match="deeply"):
            sanitize_args(value)

    def test_call_with_no_args_sends_empty_params(self):
        seen = []
        sb = make_sandbox()
        sb.run("await api.t()", api={"t": lambda p: seen.append(p)})
        assert seen == [{}]

    def test_non_object_argument_rejected(self):
        sb = make_sandbox()
        with pytest.raises(ScriptError, match="object"):
            sb.run("await api.t(42)", api={"t": lambda p: p})


# --- result plumbing ---------------------------------------------------------

class TestResults:
    def test_undefined_becomes_none(self):
        assert make_sandbox().run("const x = 1").value is None
        assert make_sandbox().run("return undefined").value is None

    def test_logs_captured_in_order(self):
        result = make_sandbox().run(
            "console.log('one'); console.warn('two'); console.log('three')")
        assert result.logs == ["one", "[warn] two", "three"]

    def test_api_calls_counted(self):
        sb = make_sandbox()
        r = sb.run("await api.a({}); await api.b({})",
                   api={"a": lambda p: 1, "b": lambda p: 2})
        assert r.api_calls == 2

    def test_nested_api_tree(self):
        sb = make_sandbox()
        api = {"svc": {"inner": lambda p: p.get("v", 0) * 2}}
        r = sb.run("return await api.svc.inner({ v: 21 })", api=api)
        assert r.value == 42

    def test_uncaught_script_throw_becomes_script_error(self):
        with pytest.raises(ScriptError, match="ValidationProblem: odd input"):
            make_sandbox().run(
                "throw { name: 'ValidationProblem', message: 'odd input' }")

    def test_unsupported_construct_not_masked(self):
        with pytest.raises(UnsupportedConstruct):
            make_sandbox().run("const x = `template`")

    def test_parse_error_mentions_line(self):
        with pytest.raises(ScriptError, match="line 2"):
            make_sandbox().run("const ok = 1\nconst = broken")
