"""Tree-walking evaluator for the script subset.

Values are plain Python: dict for objects, list for arrays, str, int/float,
bool, None for null, and a JsUndefined singleton for undefined.  That keeps
the boundary with tool results free of conversion layers; an API response
body is usable by a script as-is.

Error split, which the sandbox relies on:

  * JsError      - catchable inside the script with try/catch.  Thrown values,
                   TypeErrors from the evaluator, and upstream call failures
                   all surface this way.
  * ScriptTimeout, CallCapExceeded, AuthzDenied and the other limit errors
    pass straight through try/catch.  A script cannot absorb its own budget.
"""

from __future__ import annotations

import json
import math
import random
import re
import time
from concurrent import futures as _futures
from functools import cmp_to_key
from typing import Any, Callable, Optional

from ..errors import AuthzDenied, DadlError, SandboxError, ScriptError, ScriptTimeout
from . import parser as ast
from .parser import parse_script

MAX_STRING_LENGTH = 1 << 24  # matches the spirit of the engine's RangeError


class JsUndefinedType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "undefined"

    def __bool__(self):
        return False


undefined = JsUndefinedType()

BLOCKED_PROPS = frozenset({"__proto__", "constructor", "prototype"})


class JsError(Exception):
    """A value thrown inside the script.  Catchable by script try/catch."""

    def __init__(self, value):
        self.value = value
        super().__init__(js_to_string(error_message(value)))


class _ChainShort(Exception):
    """Internal: an optional link hit null/undefined; unwind to ChainRoot."""


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


def make_error(name: str, message: str) -> dict:
    return {"name": name, "message": message}


def type_error(message: str) -> JsError:
    return JsError(make_error("TypeError", message))


def range_error(message: str) -> JsError:
    return JsError(make_error("RangeError", message))


def error_message(value) -> str:
    if isinstance(value, dict):
        name = value.get("name", "Error")
        msg = value.get("message", "")
        return f"{name}: {msg}" if msg else str(name)
    return js_to_string(value)


# --- coercions ---------------------------------------------------------------

def is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def norm_num(v):
    """Collapse integral floats to int inside the safe range so arithmetic on
    JSON numbers round-trips without .0 noise."""
    if isinstance(v, float) and v.is_integer() and abs(v) <= 2 ** 53:
        return int(v)
    return v


def js_truthy(v) -> bool:
    if v is undefined or v is None or v is False:
        return False
    if is_number(v):
        return not (v == 0 or (isinstance(v, float) and math.isnan(v)))
    if isinstance(v, str):
        return len(v) > 0
    return True  # objects and arrays, even empty ones


def to_number(v) -> float | int:
    if isinstance(v, bool):
        return 1 if v else 0
    if is_number(v):
        return v
    if v is None:
        return 0
    if v is undefined:
        return math.nan
    if isinstance(v, str):
        s = v.strip()
        if s == "":
            return 0
        try:
            if s.lower().startswith(("0x", "-0x", "+0x")):
                return int(s, 16)
            return norm_num(float(s))
        except ValueError:
            return math.nan
    if isinstance(v, list):
        if len(v) == 0:
            return 0
        if len(v) == 1:
            return to_number(v[0])
        return math.nan
    return math.nan


def js_to_string(v) -> str:
    if isinstance(v, str):
        return v
    if v is undefined:
        return "undefined"
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if is_number(v):
        return format_number(v)
    if isinstance(v, list):
        parts = []
        for item in v:
            parts.append("" if item is None or item is undefined else js_to_string(item))
        return ",".join(parts)
    if isinstance(v, dict):
        return "[object Object]"
    if callable(v):
        return "[function]"
    return str(v)


def format_number(v) -> str:
    if isinstance(v, int):
        return str(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    if v.is_integer() and abs(v) < 1e21:
        return str(int(v))
    return repr(v)


def to_prop_key(v) -> str:
    """Object property keys are strings, so numeric keys written by a script
    and string keys parsed from JSON address the same slot."""
    return v if isinstance(v, str) else js_to_string(v)


def strict_equals(a, b) -> bool:
    if is_number(a) and is_number(b):
        if isinstance(a, float) and math.isnan(a):
            return False
        if isinstance(b, float) and math.isnan(b):
            return False
        return a == b
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if a is None or a is undefined or b is None or b is undefined:
        return a is b
    return a is b  # objects, arrays, functions compare by identity


def loose_equals(a, b) -> bool:
    a_nullish = a is None or a is undefined
    b_nullish = b is None or b is undefined
    if a_nullish or b_nullish:
        return a_nullish and b_nullish
    if isinstance(a, bool):
        return loose_equals(to_number(a), b)
    if isinstance(b, bool):
        return loose_equals(a, to_number(b))
    if is_number(a) and isinstance(b, str):
        return strict_equals(a, norm_num(to_number(b)))
    if isinstance(a, str) and is_number(b):
        return strict_equals(norm_num(to_number(a)), b)
    return strict_equals(a, b)


def js_typeof(v) -> str:
    if v is undefined:
        return "undefined"
    if isinstance(v, bool):
        return "boolean"
    if is_number(v):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, JsFunction) or callable(v):
        return "function"
    return "object"  # null, arrays, plain objects


# --- JSON with script semantics ----------------------------------------------

def js_json_stringify(value, indent=None) -> str | JsUndefinedType:
    if value is undefined or isinstance(value, JsFunction) or callable(value):
        return undefined
    pieces: list[str] = []
    _stringify_into(value, pieces, indent, 0)
    return "".join(pieces)


def _stringify_into(value, out: list, indent, depth):
    if value is None or value is undefined:
        out.append("null")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif is_number(value):
        if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
            out.append("null")
        else:
            out.append(format_number(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, list):
        if not value:
            out.append("[]")
            return
        pad, sep, end = _layout(indent, depth)
        out.append("[" + pad)
        for i, item in enumerate(value):
            if i:
                out.append(sep)
            if item is undefined or isinstance(item, JsFunction) or callable(item):
                out.append("null")
            else:
                _stringify_into(item, out, indent, depth + 1)
        out.append(end + "]")
    elif isinstance(value, dict):
        entries = [
            (k, v) for k, v in value.items()
            if v is not undefined and not isinstance(v, JsFunction) and not callable(v)
        ]
        if not entries:
            out.append("{}")
            return
        pad, sep, end = _layout(indent, depth)
        out.append("{" + pad)
        colon = ": " if indent else ":"
        for i, (k, v) in enumerate(entries):
            if i:
                out.append(sep)
            out.append(json.dumps(to_prop_key(k), ensure_ascii=False) + colon)
            _stringify_into(v, out, indent, depth + 1)
        out.append(end + "}")
    else:
        out.append("null")


def _layout(indent, depth):
    if not indent:
        return "", ",", ""
    unit = " " * indent if isinstance(indent, int) else str(indent)
    inner = "\n" + unit * (depth + 1)
    return inner, "," + inner, "\n" + unit * depth


def js_display(v) -> str:
    """console.log formatting: strings bare, structures as compact JSON."""
    if isinstance(v, str):
        return v
    if isinstance(v, (dict, list)):
        text = js_json_stringify(v)
        return text if isinstance(text, str) else "undefined"
    return js_to_string(v)


# --- functions and promises --------------------------------------------------

class JsFunction:
    def __init__(self, node: ast.Arrow, closure: "Scope", interp: "Interp"):
        self.node = node
        self.closure = closure
        self.interp = interp

    def call(self, args: list):
        scope = Scope(self.closure)
        for i, param in enumerate(self.node.params):
            value = args[i] if i < len(args) else undefined
            if value is undefined and param.default is not None:
                value = self.interp.eval(param.default, scope)
            self.interp.bind_pattern(param.pattern, value, scope, "let")
        if self.node.expression:
            return self.interp.eval(self.node.body, scope)
        try:
            self.interp.exec_block(self.node.body, scope)
        except _Return as ret:
            return ret.value
        return undefined


class JsPromise:
    """Either an already-settled value or a pending concurrent future."""

    def __init__(self, *, value=None, error=None, future: Optional[_futures.Future] = None):
        self._value = value
        self._error = error
        self._future = future

    @classmethod
    def resolved(cls, value):
        return cls(value=value)

    @classmethod
    def rejected(cls, error_value):
        return cls(error=error_value)

    @classmethod
    def from_future(cls, future: _futures.Future):
        return cls(future=future)

    def wait(self, timeout: Optional[float]):
        if self._future is not None:
            try:
                return self._future.result(timeout=timeout)
            except _futures.TimeoutError:
                raise ScriptTimeout("script deadline expired while awaiting a call")
        if self._error is not None:
            raise JsError(self._error)
        return self._value


# --- scopes ------------------------------------------------------------------

class Scope:
    __slots__ = ("parent", "vars", "consts")

    def __init__(self, parent: Optional["Scope"] = None):
        self.parent = parent
        self.vars: dict[str, Any] = {}
        self.consts: set[str] = set()

    def declare(self, name: str, value, const: bool):
        if name in self.vars:
            raise JsError(make_error(
                "SyntaxError", f"Identifier '{name}' has already been declared"))
        self.vars[name] = value
        if const:
            self.consts.add(name)

    def get(self, name: str):
        scope = self
        while scope is not None:
            if name in scope.vars:
                return scope.vars[name]
            scope = scope.parent
        raise JsError(make_error("ReferenceError", f"{name} is not defined"))

    def set(self, name: str, value):
        scope = self
        while scope is not None:
            if name in scope.vars:
                if name in scope.consts:
                    raise type_error("Assignment to constant variable.")
                scope.vars[name] = value
                return
            scope = scope.parent
        raise JsError(make_error("ReferenceError", f"{name} is not defined"))


# --- interpreter -------------------------------------------------------------

class Interp:
    def __init__(self, globals_: dict[str, Any], *,
                 deadline: Optional[float] = None,
                 monotonic: Callable[[], float] = time.monotonic,
                 logs: Optional[list] = None):
        self.monotonic = monotonic
        self.deadline = deadline
        self.logs = logs if logs is not None else []
        self.call_depth = 0
        root = Scope()
        root.vars.update(self.default_globals())
        root.vars.update(globals_)
        root.consts.update(root.vars)
        self.root = root

    # budget ------------------------------------------------------------------

    def tick(self):
        if self.deadline is not None and self.monotonic() > self.deadline:
            raise ScriptTimeout("script deadline expired")

    def remaining(self) -> Optional[float]:
        if self.deadline is None:
            return None
        return max(0.0, self.deadline - self.monotonic())

    # entry -------------------------------------------------------------------

    def run(self, program: ast.Program):
        scope = Scope(self.root)
        try:
            for stmt in program.body:
                self.exec(stmt, scope)
        except _Return as ret:
            return ret.value
        except (_Break, _Continue):
            raise ScriptError("SyntaxError: break/continue outside a loop")
        return undefined

    # statements --------------------------------------------------------------

    def exec(self, node: ast.Node, scope: Scope):
        self.tick()
        kind = type(node)
        if kind is ast.ExprStmt:
            self.eval(node.expr, scope)
        elif kind is ast.VarDecl:
            for pattern, init in node.declarations:
                value = undefined if init is None else self.eval(init, scope)
                self.bind_pattern(pattern, value, scope, node.kind)
        elif kind is ast.If:
            if js_truthy(self.eval(node.test, scope)):
                self.exec(node.then, scope)
            elif node.orelse is not None:
                self.exec(node.orelse, scope)
        elif kind is ast.Block:
            self.exec_block(node, Scope(scope))
        elif kind is ast.While:
            while js_truthy(self.eval(node.test, scope)):
                self.tick()
                try:
                    self.exec(node.body, scope)
                except _Break:
                    break
                except _Continue:
                    continue
        elif kind is ast.ForOf:
            iterable = self.eval(node.iterable, scope)
            for item in self.iterate(iterable):
                self.tick()
                body_scope = Scope(scope)
                self.bind_pattern(node.pattern, item, body_scope, node.kind)
                try:
                    self.exec(node.body, body_scope)
                except _Break:
                    break
                except _Continue:
                    continue
        elif kind is ast.Return:
            value = undefined if node.value is None else self.eval(node.value, scope)
            raise _Return(value)
        elif kind is ast.Throw:
            raise JsError(self.eval(node.value, scope))
        elif kind is ast.Try:
            self.exec_try(node, scope)
        elif kind is ast.Break:
            raise _Break()
        elif kind is ast.Continue:
            raise _Continue()
        else:
            raise ScriptError(f"unhandled statement {kind.__name__}")

    def exec_block(self, block: ast.Block, scope: Scope):
        for stmt in block.body:
            self.exec(stmt, scope)

    def exec_try(self, node: ast.Try, scope: Scope):
        try:
            try:
                self.exec_block(node.block, Scope(scope))
            except JsError as err:
                if node.handler is None:
                    raise
                handler_scope = Scope(scope)
                if node.param is not None:
                    self.bind_pattern(node.param, err.value, handler_scope, "let")
                self.exec_block(node.handler, handler_scope)
        finally:
            if node.finalizer is not None:
                self.exec_block(node.finalizer, Scope(scope))

    def iterate(self, value):
        if isinstance(value, list):
            return list(value)
        if isinstance(value, str):
            return list(value)
        raise type_error(f"{js_typeof(value)} is not iterable")

    # patterns ----------------------------------------------------------------

    def bind_pattern(self, pattern: ast.Node, value, scope: Scope, kind: str):
        const = kind == "const"
        if isinstance(pattern, ast.IdentPat):
            scope.declare(pattern.name, value, const)
            return
        if isinstance(pattern, ast.ObjectPat):
            if value is None or value is undefined:
                raise type_error("Cannot destructure null or undefined")
            for key, target, default in pattern.props:
                item = self.member_get(value, key, ast.Str(key))
                if item is undefined and default is not None:
                    item = self.eval(default, scope)
                self.bind_pattern(target, item, scope, kind)
            return
        if isinstance(pattern, ast.ArrayPat):
            items = self.iterate(value)
            for i, (target, default) in enumerate(pattern.elements):
                if target is None:
                    continue
                item = items[i] if i < len(items) else undefined
                if item is undefined and default is not None:
                    item = self.eval(default, scope)
                self.bind_pattern(target, item, scope, kind)
            return
        raise ScriptError(f"unhandled pattern {type(pattern).__name__}")

    # expressions -------------------------------------------------------------

    def eval(self, node: ast.Node, scope: Scope):
        kind = type(node)
        if kind is ast.Num or kind is ast.Str or kind is ast.Bool:
            return node.value
        if kind is ast.Null:
            return None
        if kind is ast.Undef:
            return undefined
        if kind is ast.Ident:
            return scope.get(node.name)
        if kind is ast.ChainRoot:
            try:
                return self.eval(node.expr, scope)
            except _ChainShort:
                return undefined
        if kind is ast.Member:
            return self.eval_member(node, scope)
        if kind is ast.Call:
            return self.eval_call(node, scope)
        if kind is ast.ArrayLit:
            out = []
            for el in node.elements:
                if isinstance(el, ast.Spread):
                    out.extend(self.iterate(self.eval(el.expr, scope)))
                else:
                    out.append(self.eval(el, scope))
            return out
        if kind is ast.ObjectLit:
            obj: dict = {}
            for prop in node.props:
                if isinstance(prop, ast.Spread):
                    source = self.eval(prop.expr, scope)
                    if isinstance(source, dict):
                        for k, v in source.items():
                            if k not in BLOCKED_PROPS:
                                obj[k] = v
                    elif isinstance(source, list):
                        for i, v in enumerate(source):
                            obj[str(i)] = v
                    elif isinstance(source, str):
                        for i, ch in enumerate(source):
                            obj[str(i)] = ch
                    # spreading null/undefined into an object is a no-op
                    continue
                key = to_prop_key(self.eval(prop.key, scope)) if prop.computed \
                    else prop.key.value
                if key in BLOCKED_PROPS:
                    raise type_error(f"property name {key!r} is not allowed")
                obj[key] = self.eval(prop.value, scope)
            return obj
        if kind is ast.Arrow:
            return JsFunction(node, scope, self)
        if kind is ast.Unary:
            return self.eval_unary(node, scope)
        if kind is ast.Binary:
            return self.eval_binary(node, scope)
        if kind is ast.Logical:
            left = self.eval(node.left, scope)
            if node.op == "&&":
                return self.eval(node.right, scope) if js_truthy(left) else left
            if node.op == "||":
                return left if js_truthy(left) else self.eval(node.right, scope)
            # ??
            if left is None or left is undefined:
                return self.eval(node.right, scope)
            return left
        if kind is ast.Cond:
            if js_truthy(self.eval(node.test, scope)):
                return self.eval(node.cons, scope)
            return self.eval(node.alt, scope)
        if kind is ast.Assign:
            return self.eval_assign(node, scope)
        if kind is ast.Await:
            return self.await_value(self.eval(node.expr, scope))
        raise ScriptError(f"unhandled expression {kind.__name__}")

    def eval_unary(self, node: ast.Unary, scope: Scope):
        if node.op == "typeof":
            # typeof on an undeclared name answers rather than throwing
            if isinstance(node.operand, ast.Ident):
                try:
                    return js_typeof(scope.get(node.operand.name))
                except JsError:
                    return "undefined"
            return js_typeof(self.eval(node.operand, scope))
        value = self.eval(node.operand, scope)
        if node.op == "!":
            return not js_truthy(value)
        if node.op == "-":
            n = to_number(value)
            return norm_num(-n)
        if node.op == "+":
            return norm_num(to_number(value))
        raise ScriptError(f"unhandled unary {node.op}")

    def eval_binary(self, node: ast.Binary, scope: Scope):
        a = self.eval(node.left, scope)
        b = self.eval(node.right, scope)
        return apply_binary(node.op, a, b)

    def eval_assign(self, node: ast.Assign, scope: Scope):
        if node.op == "=":
            value = self.eval(node.value, scope)
        else:
            current = self.eval(node.target, scope)
            value = apply_binary(node.op[:-1], current, self.eval(node.value, scope))
        target = node.target
        if isinstance(target, ast.Ident):
            scope.set(target.name, value)
        elif isinstance(target, ast.Member):
            obj = self.eval(target.obj, scope)
            key = to_prop_key(self.eval(target.prop, scope)) if target.computed \
                else target.prop.value
            self.member_set(obj, key, value)
        else:
            raise type_error("invalid assignment target")
        return value

    def member_set(self, obj, key: str, value):
        if key in BLOCKED_PROPS:
            raise type_error(f"property name {key!r} is not allowed")
        if obj is None or obj is undefined:
            raise type_error(f"Cannot set properties of {js_to_string(obj)}")
        if isinstance(obj, dict):
            obj[key] = value
            return
        if isinstance(obj, list):
            try:
                index = int(key)
            except ValueError:
                raise type_error("array properties other than indexes are read-only")
            if index < 0:
                raise range_error("negative array index")
            if index >= len(obj) + 1 and index > MAX_STRING_LENGTH:
                raise range_error("array too large")
            while len(obj) < index:
                obj.append(undefined)
            if index == len(obj):
                obj.append(value)
            else:
                obj[index] = value
            return
        raise type_error(f"cannot set properties of a {js_typeof(obj)}")

    def eval_member(self, node: ast.Member, scope: Scope):
        obj = self.eval(node.obj, scope)
        if node.optional and (obj is None or obj is undefined):
            raise _ChainShort()
        key = to_prop_key(self.eval(node.prop, scope)) if node.computed \
            else node.prop.value
        return self.member_get(obj, key, node.prop)

    def member_get(self, obj, key: str, prop_node=None):
        if key in BLOCKED_PROPS:
            return undefined
        if obj is None or obj is undefined:
            raise type_error(
                f"Cannot read properties of {js_to_string(obj)} (reading {key!r})")
        if isinstance(obj, dict):
            if key in obj:
                return obj[key]
            return undefined
        if isinstance(obj, list):
            if key == "length":
                return len(obj)
            try:
                index = int(key)
            except ValueError:
                method = ARRAY_METHODS.get(key)
                if method is not None:
                    return _Bound(self, method, obj, key)
                return undefined
            if 0 <= index < len(obj):
                return obj[index]
            return undefined
        if isinstance(obj, str):
            if key == "length":
                return len(obj)
            try:
                index = int(key)
            except ValueError:
                method = STRING_METHODS.get(key)
                if method is not None:
                    return _Bound(self, method, obj, key)
                return undefined
            if 0 <= index < len(obj):
                return obj[index]
            return undefined
        if is_number(obj):
            method = NUMBER_METHODS.get(key)
            if method is not None:
                return _Bound(self, method, obj, key)
            return undefined
        if isinstance(obj, JsPromise):
            raise type_error(f"use await instead of .{key} on a pending call")
        if isinstance(obj, Namespace):
            return obj.get(key)
        return undefined

    def eval_call(self, node: ast.Call, scope: Scope):
        self.tick()
        callee_node = node.callee
        if isinstance(callee_node, ast.Member):
            obj = self.eval(callee_node.obj, scope)
            if callee_node.optional and (obj is None or obj is undefined):
                raise _ChainShort()
            key = to_prop_key(self.eval(callee_node.prop, scope)) \
                if callee_node.computed else callee_node.prop.value
            fn = self.member_get(obj, key, callee_node.prop)
            if node.optional and (fn is None or fn is undefined):
                raise _ChainShort()
            if fn is undefined:
                raise type_error(f"{describe_callee(obj, key)} is not a function")
        else:
            fn = self.eval(callee_node, scope)
        if node.optional and (fn is None or fn is undefined):
            raise _ChainShort()
        args = []
        for arg in node.args:
            if isinstance(arg, ast.Spread):
                args.extend(self.iterate(self.eval(arg.expr, scope)))
            else:
                args.append(self.eval(arg, scope))
        return self.call_value(fn, args)

    def call_value(self, fn, args: list):
        if isinstance(fn, JsFunction):
            if self.call_depth >= 200:
                raise range_error("Maximum call stack size exceeded")
            self.call_depth += 1
            try:
                return fn.call(args)
            finally:
                self.call_depth -= 1
        if isinstance(fn, _Bound):
            return fn.invoke(args)
        if callable(fn):
            return fn(*args)
        raise type_error(f"{js_typeof(fn)} is not a function")

    def await_value(self, value):
        if isinstance(value, JsPromise):
            try:
                return value.wait(self.remaining())
            except (SandboxError, AuthzDenied):
                raise
            except JsError:
                raise
            except DadlError as err:
                raise JsError(make_error(type(err).__name__, str(err)))
            except Exception as err:
                # a tool binding blew up in Python; surface it catchably but
                # without any traceback detail
                raise JsError(make_error(
                    "InternalError", f"{type(err).__name__}: {err}"))
        return value

    # console sink ------------------------------------------------------------

    def console_write(self, level: str, args: list):
        if len(self.logs) >= 1000:
            if len(self.logs) == 1000:
                self.logs.append("[log truncated after 1000 lines]")
            return
        text = " ".join(js_display(a) for a in args)
        self.logs.append(text if level == "log" else f"[{level}] {text}")

    # globals -----------------------------------------------------------------

    def default_globals(self) -> dict[str, Any]:
        interp = self

        def _console(level):
            return lambda *args: interp.console_write(level, list(args))

        return {
            "undefined": undefined,
            "NaN": math.nan,
            "Infinity": math.inf,
            "console": {
                "log": _console("log"),
                "info": _console("info"),
                "warn": _console("warn"),
                "error": _console("error"),
            },
            "Object": Namespace("Object", {
                "keys": lambda obj=undefined: object_keys(obj),
                "values": lambda obj=undefined: object_values(obj),
                "entries": lambda obj=undefined: object_entries(obj),
                "fromEntries": lambda pairs=undefined: object_from_entries(interp, pairs),
                "assign": object_assign,
            }),
            "Array": Namespace("Array", {
                "isArray": lambda v=undefined: isinstance(v, list),
                "from": lambda v=undefined, fn=undefined: array_from(interp, v, fn),
            }),
            "JSON": Namespace("JSON", {
                "stringify": json_stringify_builtin,
                "parse": json_parse_builtin,
            }),
            "Math": Namespace("Math", MATH_TABLE),
            "Number": Namespace("Number", {
                "isInteger": lambda v=undefined: is_number(v) and (
                    isinstance(v, int) or v.is_integer()),
                "isFinite": lambda v=undefined: is_number(v) and math.isfinite(v),
                "isNaN": lambda v=undefined: isinstance(v, float) and math.isnan(v),
                "parseFloat": lambda v=undefined: parse_float(v),
                "parseInt": lambda v=undefined, base=undefined: parse_int(v, base),
                "MAX_SAFE_INTEGER": 2 ** 53 - 1,
                "MIN_SAFE_INTEGER": -(2 ** 53 - 1),
            }),
            "Promise": Namespace("Promise", {
                "resolve": lambda v=undefined: JsPromise.resolved(v),
                "reject": lambda v=undefined: JsPromise.rejected(
                    v if v is not undefined else make_error("Error", "rejected")),
                "all": lambda items=undefined: promise_all(interp, items),
            }),
            "parseFloat": lambda v=undefined: parse_float(v),
            "parseInt": lambda v=undefined, base=undefined: parse_int(v, base),
            "isNaN": lambda v=undefined: (
                isinstance(to_number(v), float) and math.isnan(to_number(v))),
            "String": lambda v=undefined: js_to_string(v) if v is not undefined else "",
        }


class Namespace:
    """A read-only bag of builtins (Object, Math, ...).  Plain dicts hold
    script data; keeping builtins separate stops scripts from mutating them."""

    def __init__(self, name: str, table: dict):
        self.name = name
        self.table = table

    def get(self, key: str):
        if key in BLOCKED_PROPS:
            return undefined
        return self.table.get(key, undefined)


class _Bound:
    """A method plucked off a value, callable later: const f = arr.map fails
    in spirit but `arr.map(...)` routes through here."""

    __slots__ = ("interp", "fn", "target", "name")

    def __init__(self, interp, fn, target, name):
        self.interp = interp
        self.fn = fn
        self.target = target
        self.name = name

    def invoke(self, args: list):
        return self.fn(self.interp, self.target, args)

    def __call__(self, *args):
        return self.invoke(list(args))


def describe_callee(obj, key: str) -> str:
    return f"{js_typeof(obj)}.{key}"


# --- operators ---------------------------------------------------------------

def apply_binary(op: str, a, b):
    if op == "+":
        if isinstance(a, str) or isinstance(b, str) \
                or isinstance(a, (list, dict)) or isinstance(b, (list, dict)):
            result = js_to_string(a) + js_to_string(b)
            if len(result) > MAX_STRING_LENGTH:
                raise range_error("Invalid string length")
            return result
        return norm_num(to_number(a) + to_number(b))
    if op == "-":
        return norm_num(to_number(a) - to_number(b))
    if op == "*":
        return norm_num(to_number(a) * to_number(b))
    if op == "/":
        x, y = to_number(a), to_number(b)
        if y == 0:
            if (isinstance(x, float) and math.isnan(x)) or x == 0:
                return math.nan
            sign = math.copysign(1, x) * math.copysign(1, y)
            return math.inf if sign > 0 else -math.inf
        return norm_num(x / y)
    if op == "%":
        x, y = to_number(a), to_number(b)
        if y == 0 or (isinstance(x, float) and math.isinf(x)):
            return math.nan
        if isinstance(x, float) and math.isnan(x):
            return math.nan
        if isinstance(y, float) and math.isnan(y):
            return math.nan
        return norm_num(math.fmod(x, y))
    if op == "===":
        return strict_equals(a, b)
    if op == "!==":
        return not strict_equals(a, b)
    if op == "==":
        return loose_equals(a, b)
    if op == "!=":
        return not loose_equals(a, b)
    if op in ("<", ">", "<=", ">="):
        if isinstance(a, str) and isinstance(b, str):
            if op == "<":
                return a < b
            if op == ">":
                return a > b
            if op == "<=":
                return a <= b
            return a >= b
        x, y = to_number(a), to_number(b)
        if (isinstance(x, float) and math.isnan(x)) or \
                (isinstance(y, float) and math.isnan(y)):
            return False
        if op == "<":
            return x < y
        if op == ">":
            return x > y
        if op == "<=":
            return x <= y
        return x >= y
    raise ScriptError(f"unhandled operator {op}")


# --- builtin namespaces ------------------------------------------------------

def object_keys(obj):
    if isinstance(obj, dict):
        return [to_prop_key(k) for k in obj.keys()]
    if isinstance(obj, list):
        return [str(i) for i in range(len(obj))]
    if isinstance(obj, str):
        return [str(i) for i in range(len(obj))]
    if obj is None or obj is undefined:
        raise type_error("Cannot convert null or undefined to object")
    return []


def object_values(obj):
    if isinstance(obj, dict):
        return list(obj.values())
    if isinstance(obj, list):
        return list(obj)
    if isinstance(obj, str):
        return list(obj)
    if obj is None or obj is undefined:
        raise type_error("Cannot convert null or undefined to object")
    return []


def object_entries(obj):
    if isinstance(obj, dict):
        return [[to_prop_key(k), v] for k, v in obj.items()]
    if isinstance(obj, list):
        return [[str(i), v] for i, v in enumerate(obj)]
    if isinstance(obj, str):
        return [[str(i), ch] for i, ch in enumerate(obj)]
    if obj is None or obj is undefined:
        raise type_error("Cannot convert null or undefined to object")
    return []


def object_from_entries(interp: Interp, pairs):
    if not isinstance(pairs, list):
        raise type_error("Object.fromEntries expects an array of [key, value] pairs")
    out: dict = {}
    for pair in pairs:
        if isinstance(pair, list) and len(pair) >= 2:
            key, value = pair[0], pair[1]
        elif isinstance(pair, list) and len(pair) == 1:
            key, value = pair[0], undefined
        else:
            raise type_error("Object.fromEntries entry is not a [key, value] pair")
        key = to_prop_key(key)
        if key in BLOCKED_PROPS:
            raise type_error(f"property name {key!r} is not allowed")
        out[key] = value
    return out


def object_assign(target=undefined, *sources):
    if not isinstance(target, dict):
        raise type_error("Object.assign target must be an object")
    for source in sources:
        if isinstance(source, dict):
            for k, v in source.items():
                if k not in BLOCKED_PROPS:
                    target[to_prop_key(k)] = v
    return target


def array_from(interp: Interp, value, fn):
    if isinstance(value, list):
        items = list(value)
    elif isinstance(value, str):
        items = list(value)
    elif isinstance(value, dict) and "length" in value:
        n = to_number(value.get("length", 0))
        count = int(n) if is_number(n) and not math.isnan(n) and n > 0 else 0
        if count > MAX_STRING_LENGTH:
            raise range_error("Invalid array length")
        items = [value.get(str(i), undefined) for i in range(count)]
    else:
        raise type_error(f"{js_typeof(value)} is not iterable")
    if fn is undefined:
        return items
    return [interp.call_value(fn, [item, i]) for i, item in enumerate(items)]


def json_stringify_builtin(value=undefined, replacer=undefined, indent=undefined):
    space = None
    if is_number(indent):
        space = max(0, min(10, int(indent)))
    elif isinstance(indent, str):
        space = indent[:10]
    return js_json_stringify(value, space or None)


def json_parse_builtin(text=undefined):
    if not isinstance(text, str):
        text = js_to_string(text)
    try:
        return json.loads(text)
    except (ValueError, RecursionError) as err:
        raise JsError(make_error("SyntaxError", f"JSON.parse: {err}"))


_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def parse_float(v):
    m = _FLOAT_RE.match(js_to_string(v).strip())
    if not m:
        return math.nan
    return norm_num(float(m.group(0)))


def parse_int(v, base=undefined):
    s = js_to_string(v).strip()
    radix = 10
    if base is not undefined and base is not None:
        radix = int(to_number(base)) if js_truthy(base) else 10
        if radix < 2 or radix > 36:
            return math.nan
    sign = 1
    i = 0
    if i < len(s) and s[i] in "+-":
        sign = -1 if s[i] == "-" else 1
        i += 1
    if radix == 16 and s[i:i + 2].lower() == "0x":
        i += 2
    elif (base is undefined or base is None) and s[i:i + 2].lower() == "0x":
        radix = 16
        i += 2
    digits = "0123456789abcdefghijklmnopqrstuvwxyz"[:radix]
    j = i
    while j < len(s) and s[j].lower() in digits:
        j += 1
    if j == i:
        return math.nan
    return sign * int(s[i:j], radix)


def _math_round(v=undefined):
    n = to_number(v)
    if isinstance(n, float) and (math.isnan(n) or math.isinf(n)):
        return n
    return math.floor(n + 0.5)


def _math_minmax(fn, args):
    if not args:
        return -math.inf if fn is max else math.inf
    nums = [to_number(a) for a in args]
    for n in nums:
        if isinstance(n, float) and math.isnan(n):
            return math.nan
    return norm_num(fn(nums))


def _math_pow(a, b):
    x, y = to_number(a), to_number(b)
    if isinstance(x, float) and math.isnan(x):
        return math.nan
    if isinstance(y, float) and math.isnan(y):
        return math.nan
    try:
        return norm_num(math.pow(x, y))
    except (ValueError, OverflowError):
        return math.nan


def _guard_num(fn):
    def wrapped(v=undefined):
        n = to_number(v)
        if isinstance(n, float) and math.isnan(n):
            return math.nan
        try:
            return norm_num(fn(n))
        except (ValueError, OverflowError):
            return math.nan
    return wrapped


MATH_TABLE = {
    "floor": _guard_num(math.floor),
    "ceil": _guard_num(math.ceil),
    "round": _math_round,
    "trunc": _guard_num(math.trunc),
    "abs": _guard_num(abs),
    "sqrt": _guard_num(math.sqrt),
    "log": _guard_num(math.log),
    "log2": _guard_num(math.log2),
    "log10": _guard_num(math.log10),
    "exp": _guard_num(math.exp),
    "sign": _guard_num(lambda n: 0 if n == 0 else math.copysign(1, n)),
    "pow": lambda a=undefined, b=undefined: _math_pow(a, b),
    "min": lambda *args: _math_minmax(min, list(args)),
    "max": lambda *args: _math_minmax(max, list(args)),
    "random": random.random,
    "PI": math.pi,
    "E": math.e,
}


def promise_all(interp: Interp, items):
    if not isinstance(items, list):
        raise type_error("Promise.all expects an array")
    snapshot = list(items)

    class _All(JsPromise):
        def __init__(self):
            super().__init__(value=None)

        def wait(self, timeout):
            results = []
            for item in snapshot:
                results.append(interp.await_value(item))
            return results

    return _All()


# --- array methods -----------------------------------------------------------

def _callback(interp: Interp, fn):
    if fn is undefined or fn is None:
        raise type_error("callback is not a function")

    def run(*args):
        interp.tick()
        return interp.call_value(fn, list(args))

    return run


def _arr_map(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    return [cb(v, i, arr) for i, v in enumerate(list(arr))]


def _arr_filter(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    return [v for i, v in enumerate(list(arr)) if js_truthy(cb(v, i, arr))]


def _arr_for_each(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    for i, v in enumerate(list(arr)):
        cb(v, i, arr)
    return undefined


def _arr_reduce(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    items = list(arr)
    if len(args) >= 2:
        acc = args[1]
        start = 0
    else:
        if not items:
            raise type_error("Reduce of empty array with no initial value")
        acc = items[0]
        start = 1
    for i in range(start, len(items)):
        acc = cb(acc, items[i], i, arr)
    return acc


def _arr_find(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    for i, v in enumerate(list(arr)):
        if js_truthy(cb(v, i, arr)):
            return v
    return undefined


def _arr_find_index(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    for i, v in enumerate(list(arr)):
        if js_truthy(cb(v, i, arr)):
            return i
    return -1


def _arr_some(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    return any(js_truthy(cb(v, i, arr)) for i, v in enumerate(list(arr)))


def _arr_every(interp, arr, args):
    cb = _callback(interp, args[0] if args else undefined)
    return all(js_truthy(cb(v, i, arr)) for i, v in enumerate(list(arr)))


def _slice_bounds(length: int, start, end):
    def clamp(v, default):
        if v is undefined or v is None:
            return default
        n = to_number(v)
        if isinstance(n, float) and math.isnan(n):
            return 0
        n = int(n)
        if n < 0:
            n += length
        return max(0, min(length, n))

    return clamp(start, 0), clamp(end, length)


def _arr_slice(interp, arr, args):
    start, end = _slice_bounds(len(arr),
                               args[0] if len(args) > 0 else undefined,
                               args[1] if len(args) > 1 else undefined)
    return list(arr[start:end])


def _arr_includes(interp, arr, args):
    needle = args[0] if args else undefined
    for v in arr:
        if strict_equals(v, needle):
            return True
        if isinstance(needle, float) and math.isnan(needle) \
                and isinstance(v, float) and math.isnan(v):
            return True  # includes uses SameValueZero, which finds NaN
    return False


def _arr_index_of(interp, arr, args):
    needle = args[0] if args else undefined
    for i, v in enumerate(arr):
        if strict_equals(v, needle):
            return i
    return -1


def _arr_join(interp, arr, args):
    sep = args[0] if args else undefined
    sep = "," if sep is undefined else js_to_string(sep)
    parts = ["" if v is None or v is undefined else js_to_string(v) for v in arr]
    result = sep.join(parts)
    if len(result) > MAX_STRING_LENGTH:
        raise range_error("Invalid string length")
    return result


def _arr_concat(interp, arr, args):
    out = list(arr)
    for a in args:
        if isinstance(a, list):
            out.extend(a)
        else:
            out.append(a)
    return out


def _arr_push(interp, arr, args):
    arr.extend(args)
    return len(arr)


def _arr_pop(interp, arr, args):
    return arr.pop() if arr else undefined


def _arr_shift(interp, arr, args):
    return arr.pop(0) if arr else undefined


def _arr_unshift(interp, arr, args):
    for a in reversed(args):
        arr.insert(0, a)
    return len(arr)


def _arr_flat(interp, arr, args):
    depth = 1
    if args and args[0] is not undefined:
        n = to_number(args[0])
        depth = int(n) if is_number(n) and not math.isnan(n) else 1

    def flatten(items, d):
        out = []
        for v in items:
            if isinstance(v, list) and d > 0:
                out.extend(flatten(v, d - 1))
            else:
                out.append(v)
        return out

    return flatten(arr, depth)


def _arr_flat_map(interp, arr, args):
    mapped = _arr_map(interp, arr, args)
    return _arr_flat(interp, mapped, [1])


def _arr_reverse(interp, arr, args):
    arr.reverse()
    return arr


def _arr_sort(interp, arr, args):
    cmp = args[0] if args else undefined
    if cmp is undefined or cmp is None:
        def key(v):
            return js_to_string(v)

        non_undef = [v for v in arr if v is not undefined]
        non_undef.sort(key=key)
        arr[:] = non_undef + [undefined] * (len(arr) - len(non_undef))
        return arr

    def compare(a, b):
        interp.tick()
        result = to_number(interp.call_value(cmp, [a, b]))
        if isinstance(result, float) and math.isnan(result):
            return 0
        if result < 0:
            return -1
        if result > 0:
            return 1
        return 0

    arr.sort(key=cmp_to_key(compare))
    return arr


def _arr_keys(interp, arr, args):
    return list(range(len(arr)))


ARRAY_METHODS = {
    "map": _arr_map,
    "filter": _arr_filter,
    "forEach": _arr_for_each,
    "reduce": _arr_reduce,
    "find": _arr_find,
    "findIndex": _arr_find_index,
    "some": _arr_some,
    "every": _arr_every,
    "slice": _arr_slice,
    "includes": _arr_includes,
    "indexOf": _arr_index_of,
    "join": _arr_join,
    "concat": _arr_concat,
    "push": _arr_push,
    "pop": _arr_pop,
    "shift": _arr_shift,
    "unshift": _arr_unshift,
    "flat": _arr_flat,
    "flatMap": _arr_flat_map,
    "reverse": _arr_reverse,
    "sort": _arr_sort,
    "keys": _arr_keys,
}


# --- string methods ----------------------------------------------------------

def _str_arg(args, i, default=""):
    if len(args) > i and args[i] is not undefined:
        return js_to_string(args[i])
    return default


def _str_includes(interp, s, args):
    return _str_arg(args, 0) in s


def _str_starts_with(interp, s, args):
    return s.startswith(_str_arg(args, 0))


def _str_ends_with(interp, s, args):
    return s.endswith(_str_arg(args, 0))


def _str_slice(interp, s, args):
    start, end = _slice_bounds(len(s),
                               args[0] if len(args) > 0 else undefined,
                               args[1] if len(args) > 1 else undefined)
    return s[start:end]


def _str_substring(interp, s, args):
    start, end = _slice_bounds(len(s),
                               args[0] if len(args) > 0 else undefined,
                               args[1] if len(args) > 1 else undefined)
    # substring swaps reversed bounds instead of returning ""
    if start > end:
        start, end = end, start
    return s[start:end]


def _str_index_of(interp, s, args):
    return s.find(_str_arg(args, 0))


def _str_split(interp, s, args):
    if not args or args[0] is undefined:
        return [s]
    sep = js_to_string(args[0])
    if sep == "":
        return list(s)
    return s.split(sep)


def _str_replace(interp, s, args):
    old = _str_arg(args, 0)
    new = _str_arg(args, 1, "undefined")
    return s.replace(old, new, 1)


def _str_replace_all(interp, s, args):
    old = _str_arg(args, 0)
    new = _str_arg(args, 1, "undefined")
    return s.replace(old, new)


def _str_repeat(interp, s, args):
    n = to_number(args[0]) if args else 0
    if not is_number(n) or (isinstance(n, float) and math.isnan(n)) or n < 0:
        raise range_error("Invalid count value")
    count = int(n)
    if count * len(s) > MAX_STRING_LENGTH:
        raise range_error("Invalid string length")
    return s * count


def _str_pad(side):
    def pad(interp, s, args):
        target = int(to_number(args[0])) if args and is_number(to_number(args[0])) else 0
        fill = _str_arg(args, 1, " ")
        if target > MAX_STRING_LENGTH:
            raise range_error("Invalid string length")
        if target <= len(s) or not fill:
            return s
        needed = target - len(s)
        filler = (fill * (needed // len(fill) + 1))[:needed]
        return filler + s if side == "start" else s + filler

    return pad


def _str_char_at(interp, s, args):
    n = to_number(args[0]) if args else 0
    if isinstance(n, float) and math.isnan(n):
        n = 0
    i = int(n)
    return s[i] if 0 <= i < len(s) else ""


def _str_char_code_at(interp, s, args):
    n = to_number(args[0]) if args else 0
    if isinstance(n, float) and math.isnan(n):
        n = 0
    i = int(n)
    return ord(s[i]) if 0 <= i < len(s) else math.nan


def _str_concat(interp, s, args):
    result = s + "".join(js_to_string(a) for a in args)
    if len(result) > MAX_STRING_LENGTH:
        raise range_error("Invalid string length")
    return result


STRING_METHODS = {
    "includes": _str_includes,
    "startsWith": _str_starts_with,
    "endsWith": _str_ends_with,
    "slice": _str_slice,
    "substring": _str_substring,
    "indexOf": _str_index_of,
    "split": _str_split,
    "replace": _str_replace,
    "replaceAll": _str_replace_all,
    "repeat": _str_repeat,
    "padStart": _str_pad("start"),
    "padEnd": _str_pad("end"),
    "charAt": _str_char_at,
    "charCodeAt": _str_char_code_at,
    "concat": _str_concat,
    "toUpperCase": lambda interp, s, args: s.upper(),
    "toLowerCase": lambda interp, s, args: s.lower(),
    "trim": lambda interp, s, args: s.strip(),
    "trimStart": lambda interp, s, args: s.lstrip(),
    "trimEnd": lambda interp, s, args: s.rstrip(),
}


# --- number methods ----------------------------------------------------------

def _num_to_fixed(interp, n, args):
    digits = 0
    if args and args[0] is not undefined:
        d = to_number(args[0])
        if isinstance(d, float) and math.isnan(d):
            d = 0
        digits = int(d)
    if digits < 0 or digits > 100:
        raise range_error("toFixed() digits argument must be between 0 and 100")
    if isinstance(n, float) and math.isnan(n):
        return "NaN"
    if isinstance(n, float) and math.isinf(n):
        return "Infinity" if n > 0 else "-Infinity"
    return f"{n:.{digits}f}"


def _num_to_string(interp, n, args):
    if args and args[0] is not undefined:
        radix = int(to_number(args[0]))
        if radix < 2 or radix > 36:
            raise range_error("toString() radix must be between 2 and 36")
        if radix != 10:
            if not isinstance(n, int):
                raise JsError(make_error(
                    "TypeError", "non-integer toString with a radix is not supported"))
            digits = "0123456789abcdefghijklmnopqrstuvwxyz"
            if n == 0:
                return "0"
            neg = n < 0
            n = abs(n)
            out = []
            while n:
                n, rem = divmod(n, radix)
                out.append(digits[rem])
            return ("-" if neg else "") + "".join(reversed(out))
    return format_number(n)


NUMBER_METHODS = {
    "toFixed": _num_to_fixed,
    "toString": _num_to_string,
}


def run_program(source: str, globals_: dict[str, Any], *,
                deadline: Optional[float] = None,
                monotonic: Callable[[], float] = time.monotonic,
                logs: Optional[list] = None):
    """Parse and execute a script, returning its final value."""
    program = parse_script(source)
    interp = Interp(globals_, deadline=deadline, monotonic=monotonic, logs=logs)
    return interp.run(program)
