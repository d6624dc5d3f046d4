"""Pipeline ordering and gating.

The ordering cases are built so that swapping any two adjacent steps changes
the output, which is how the fixed order stays pinned down.
"""

import pytest

from dadl.errors import JqRuntimeError, OverrideForbidden
from dadl.transform import run_for_tool, run_pipeline
from dadl.model import effective_tool


def make_search_hit(i, pad=900):
    """One raw search hit: a small usable core plus bulky engine metadata."""
    return {
        "objectID": f"obj-{i}",
        "title": f"Result {i}",
        "url": f"https://example.com/r/{i}",
        "_highlightResult": {"title": {"value": f"<em>Result {i}</em>", "pad": "h" * pad}},
        "_rankingInfo": {"nbTypos": 0, "userScore": i, "pad": "r" * pad},
        "_tags": [f"tag-{j}" for j in range(10)],
    }


def test_result_path_runs_before_transform():
    body = {"data": {"hits": [{"id": 1}, {"id": 2}]}}
    got = run_pipeline(body, result_path="$.data.hits", transform="map(.id)")
    assert got.value == [1, 2]


def test_transform_runs_before_max_items():
    items = [{"keep": False}, {"keep": True}, {"keep": True}, {"keep": True}]
    got = run_pipeline(items, transform="map(select(.keep))", max_items=2)
    # truncating first would have kept only one of the keep=True rows
    assert got.value == [{"keep": True}, {"keep": True}]
    assert got.truncated


def test_max_items_runs_before_override():
    items = [1, 2, 3]
    got = run_pipeline(items, max_items=2, allow_jq_override=True, jq_override="length")
    assert got.value == 2


def test_no_match_yields_null_with_warning():
    got = run_pipeline({"a": {"b": 1}}, result_path="$.a.c", transform="map(.x)")
    assert got.value is None
    assert any("matched nothing" in w for w in got.warnings)
    assert not got.truncated


def test_match_produces_no_warning():
    got = run_pipeline({"a": 1}, result_path="$.a")
    assert got.warnings == []


def test_max_items_exact_boundary_is_not_truncation():
    got = run_pipeline([1, 2], max_items=2)
    assert got.value == [1, 2]
    assert not got.truncated


def test_max_items_ignores_non_lists():
    got = run_pipeline({"a": 1}, max_items=1)
    assert got.value == {"a": 1}
    assert not got.truncated


def test_override_forbidden_by_default():
    with pytest.raises(OverrideForbidden):
        run_pipeline([1], jq_override=".")


def test_override_forbidden_raises_before_evaluation():
    # even an override that would crash is rejected up front
    with pytest.raises(OverrideForbidden):
        run_pipeline(5, transform="map(.)", jq_override="map(.)")


def test_override_applies_when_allowed():
    got = run_pipeline([{"a": 1, "b": 2}], allow_jq_override=True,
                       jq_override="map({a})")
    assert got.value == [{"a": 1}]


def test_transform_errors_propagate():
    with pytest.raises(JqRuntimeError):
        run_pipeline({"not": "an array"}, transform="map(.)")


def test_byte_accounting():
    hits = [make_search_hit(i) for i in range(5)]
    body = {"hits": hits, "page": 0}
    got = run_pipeline(body, result_path="$.hits",
                       transform="map(del(._highlightResult, ._rankingInfo, ._tags))")
    raw_mean = got.input_bytes / 5
    out_mean = got.output_bytes / 5
    assert raw_mean > 1500
    assert out_mean <= 300
    assert got.value[0] == {
        "objectID": "obj-0", "title": "Result 0", "url": "https://example.com/r/0"}


def test_run_for_tool_uses_resolved_settings(search_doc):
    tool = effective_tool(search_doc, "search_index")
    hits = [make_search_hit(i) for i in range(12)]
    got = run_for_tool({"hits": hits}, tool)
    assert len(got.value) == 10  # max_items from the document
    assert got.truncated
    assert "_rankingInfo" not in got.value[0]
    with pytest.raises(OverrideForbidden):
        run_for_tool({"hits": hits}, tool, jq_override=".")


def test_run_for_tool_honors_opt_in(search_doc):
    tool = effective_tool(search_doc, "raw_search")
    got = run_for_tool({"hits": [{"objectID": "a", "noise": 1}]}, tool,
                       jq_override="map({objectID})")
    assert got.value == [{"objectID": "a"}]
