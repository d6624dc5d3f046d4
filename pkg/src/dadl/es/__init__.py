"""Self-contained evaluator for the composite script subset."""

from .interp import (
    Interp,
    JsError,
    JsFunction,
    JsPromise,
    js_json_stringify,
    js_to_string,
    js_truthy,
    run_program,
    undefined,
)
from .lexer import tokenize
from .parser import parse_script

__all__ = [
    "Interp",
    "JsError",
    "JsFunction",
    "JsPromise",
    "js_json_stringify",
    "js_to_string",
    "js_truthy",
    "parse_script",
    "run_program",
    "tokenize",
    "undefined",
]
