"""Response shaping pipeline.

Runs in a fixed order: result_path extraction, declared jq transform,
max_items truncation, then an optional caller-supplied jq override.  The
override is only honored when the tool opts in; otherwise it raises before
anything is evaluated.  Byte counts of the body before and after shaping are
reported so audit records can account for context savings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import jq, jsonpath
from .errors import OverrideForbidden
from .util import json_bytes


@dataclass
class PipelineResult:
    value: Any
    truncated: bool = False
    warnings: list[str] = field(default_factory=list)
    input_bytes: int = 0
    output_bytes: int = 0


def run_pipeline(body: Any, *, result_path: str | None = None,
                 transform: str | None = None, max_items: int | None = None,
                 allow_jq_override: bool = False,
                 jq_override: str | None = None) -> PipelineResult:
    """Shape one upstream response body.

    A result_path that matches nothing yields null with a warning; the later
    steps are skipped since there is no value left to shape.  JSONPath and jq
    faults propagate to the caller.
    """
    if jq_override is not None and not allow_jq_override:
        raise OverrideForbidden(
            "caller-supplied jq override is not allowed for this tool")

    result = PipelineResult(value=body, input_bytes=json_bytes(body))

    matched = True
    if result_path is not None:
        result.value, matched = jsonpath.evaluate(body, result_path)
        if not matched:
            result.warnings.append(f"result_path {result_path!r} matched nothing")

    if matched:
        if transform is not None:
            result.value = jq.apply_filter(result.value, transform)
        if max_items is not None and isinstance(result.value, list) \
                and len(result.value) > max_items:
            result.value = result.value[:max_items]
            result.truncated = True
        if jq_override is not None:
            result.value = jq.apply_filter(result.value, jq_override)

    result.output_bytes = json_bytes(result.value)
    return result


def run_for_tool(body: Any, tool, jq_override: str | None = None) -> PipelineResult:
    """Pipeline with settings taken from a resolved tool."""
    return run_pipeline(
        body,
        result_path=tool.result_path,
        transform=tool.transform,
        max_items=tool.max_items,
        allow_jq_override=tool.allow_jq_override,
        jq_override=jq_override,
    )
