"""Recursive-descent parser for the script subset.

The grammar is the expression-oriented core of modern JavaScript: const/let,
control flow, arrow functions, await, spread, optional chaining.  Anything
outside the subset fails loudly at parse time with a named construct so
script authors know what to rewrite, rather than failing halfway through a
run.  Semicolons are optional where a line break ends the statement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from ..errors import ScriptError, UnsupportedConstruct
from .lexer import Token, tokenize

UNSUPPORTED_KEYWORDS = {
    "var": "var declarations (use const or let)",
    "function": "function declarations (use arrow functions)",
    "class": "class declarations",
    "new": "constructing objects with new",
    "delete": "the delete operator",
    "void": "the void operator",
    "yield": "generators",
    "do": "do/while loops",
    "switch": "switch statements",
    "import": "module imports",
    "export": "module exports",
    "this": "this bindings",
    "instanceof": "instanceof checks",
    "super": "super references",
    "in": "the in operator",
}


# --- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Program(Node):
    body: tuple


@dataclass(frozen=True)
class VarDecl(Node):
    kind: str  # const | let
    declarations: tuple  # of (pattern, init | None)


@dataclass(frozen=True)
class ExprStmt(Node):
    expr: Node


@dataclass(frozen=True)
class If(Node):
    test: Node
    then: Node
    orelse: Optional[Node]


@dataclass(frozen=True)
class While(Node):
    test: Node
    body: Node


@dataclass(frozen=True)
class ForOf(Node):
    kind: str
    pattern: Node
    iterable: Node
    body: Node


@dataclass(frozen=True)
class Return(Node):
    value: Optional[Node]


@dataclass(frozen=True)
class Throw(Node):
    value: Node


@dataclass(frozen=True)
class Try(Node):
    block: Node
    param: Optional[Node]
    handler: Optional[Node]
    finalizer: Optional[Node]


@dataclass(frozen=True)
class Break(Node):
    pass


@dataclass(frozen=True)
class Continue(Node):
    pass


@dataclass(frozen=True)
class Block(Node):
    body: tuple


@dataclass(frozen=True)
class IdentPat(Node):
    name: str


@dataclass(frozen=True)
class ObjectPat(Node):
    props: tuple  # of (key: str, pattern, default: Node | None)


@dataclass(frozen=True)
class ArrayPat(Node):
    elements: tuple  # of (pattern | None, default: Node | None)


@dataclass(frozen=True)
class Num(Node):
    value: Any


@dataclass(frozen=True)
class Str(Node):
    value: str


@dataclass(frozen=True)
class Bool(Node):
    value: bool


@dataclass(frozen=True)
class Null(Node):
    pass


@dataclass(frozen=True)
class Undef(Node):
    pass


@dataclass(frozen=True)
class Ident(Node):
    name: str


@dataclass(frozen=True)
class Spread(Node):
    expr: Node


@dataclass(frozen=True)
class ArrayLit(Node):
    elements: tuple  # exprs and Spread nodes


@dataclass(frozen=True)
class Prop(Node):
    key: Node       # Str/Num for fixed keys, arbitrary expr when computed
    value: Node
    computed: bool


@dataclass(frozen=True)
class ObjectLit(Node):
    props: tuple    # Prop and Spread nodes


@dataclass(frozen=True)
class Param(Node):
    pattern: Node
    default: Optional[Node]


@dataclass(frozen=True)
class Arrow(Node):
    params: tuple
    body: Node      # Block for {...} bodies, expression otherwise
    expression: bool
    is_async: bool


@dataclass(frozen=True)
class Call(Node):
    callee: Node
    args: tuple
    optional: bool = False


@dataclass(frozen=True)
class Member(Node):
    obj: Node
    prop: Node      # Str for .name access, expr when computed
    computed: bool
    optional: bool = False


@dataclass(frozen=True)
class ChainRoot(Node):
    """Marks the top of a member/call chain containing ?. so a nullish link
    short-circuits the whole chain to undefined."""
    expr: Node


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Logical(Node):
    op: str  # && | "||" | ??
    left: Node
    right: Node


@dataclass(frozen=True)
class Cond(Node):
    test: Node
    cons: Node
    alt: Node


@dataclass(frozen=True)
class Assign(Node):
    op: str
    target: Node
    value: Node


@dataclass(frozen=True)
class Await(Node):
    expr: Node


_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%="}
_UNSUPPORTED_BINARY = {"&", "|", "^", "<<", ">>", ">>>", "**"}
_EQUALITY = {"==", "!=", "===", "!=="}
_RELATIONAL = {"<", ">", "<=", ">="}
_ADDITIVE = {"+", "-"}
_MULTIPLICATIVE = {"*", "/", "%"}


class Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # --- token plumbing -------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, type_: str, value=None) -> bool:
        tok = self.peek()
        return tok.type == type_ and (value is None or tok.value == value)

    def at_punct(self, value: str) -> bool:
        return self.at("punct", value)

    def eat_punct(self, value: str) -> bool:
        if self.at_punct(value):
            self.pos += 1
            return True
        return False

    def expect_punct(self, value: str) -> Token:
        if not self.at_punct(value):
            raise self.error(f"expected {value!r}")
        return self.next()

    def at_keyword(self, value: str) -> bool:
        return self.at("keyword", value)

    def eat_keyword(self, value: str) -> bool:
        if self.at_keyword(value):
            self.pos += 1
            return True
        return False

    def error(self, message: str) -> ScriptError:
        tok = self.peek()
        shown = "end of script" if tok.type == "eof" else repr(tok.value)
        return ScriptError(f"SyntaxError: {message}, got {shown} (line {tok.line})")

    def unsupported(self, word: str) -> UnsupportedConstruct:
        reason = UNSUPPORTED_KEYWORDS.get(word, word)
        return UnsupportedConstruct(
            f"{reason} are outside the script subset (line {self.peek().line})"
            if word in UNSUPPORTED_KEYWORDS else
            f"{word} (line {self.peek().line})")

    def same_line(self) -> bool:
        if self.pos == 0:
            return True
        return self.peek().line == self.tokens[self.pos - 1].line

    def end_statement(self) -> None:
        """Consume one ';' if present; otherwise require a line break, '}',
        or EOF so run-together statements fail instead of surprising."""
        if self.eat_punct(";"):
            return
        if self.at("eof") or self.at_punct("}"):
            return
        if not self.same_line():
            return
        raise self.error("expected ';' or line break")

    # --- entry ----------------------------------------------------------------

    def parse_program(self) -> Program:
        body = []
        while not self.at("eof"):
            body.append(self.parse_statement())
        return Program(tuple(body))

    # --- statements -----------------------------------------------------------

    def parse_statement(self) -> Node:
        tok = self.peek()
        if tok.type == "keyword":
            word = tok.value
            if word in ("const", "let"):
                return self.parse_var_decl()
            if word == "if":
                return self.parse_if()
            if word == "while":
                return self.parse_while()
            if word == "for":
                return self.parse_for_of()
            if word == "return":
                return self.parse_return()
            if word == "throw":
                return self.parse_throw()
            if word == "try":
                return self.parse_try()
            if word == "break":
                self.next()
                self.end_statement()
                return Break()
            if word == "continue":
                self.next()
                self.end_statement()
                return Continue()
            if word in UNSUPPORTED_KEYWORDS:
                raise self.unsupported(word)
        if self.at_punct("{"):
            return self.parse_block()
        if self.eat_punct(";"):
            return Block(())
        expr = self.parse_expression()
        self.end_statement()
        return ExprStmt(expr)

    def parse_block(self) -> Block:
        self.expect_punct("{")
        body = []
        while not self.at_punct("}"):
            if self.at("eof"):
                raise self.error("unterminated block")
            body.append(self.parse_statement())
        self.expect_punct("}")
        return Block(tuple(body))

    def parse_var_decl(self) -> VarDecl:
        kind = self.next().value
        declarations = []
        while True:
            pattern = self.parse_pattern()
            init = None
            if self.eat_punct("="):
                init = self.parse_assignment()
            if init is None and (kind == "const" or not isinstance(pattern, IdentPat)):
                raise self.error(f"{kind} declaration needs an initializer")
            declarations.append((pattern, init))
            if not self.eat_punct(","):
                break
        self.end_statement()
        return VarDecl(kind, tuple(declarations))

    def parse_pattern(self) -> Node:
        if self.at_punct("{"):
            self.next()
            props = []
            while not self.at_punct("}"):
                if self.at_punct("..."):
                    raise UnsupportedConstruct(
                        "rest elements in destructuring are outside the script subset")
                key_tok = self.next()
                if key_tok.type not in ("ident", "str", "keyword"):
                    raise self.error("expected property name in destructuring")
                key = str(key_tok.value)
                if self.eat_punct(":"):
                    target = self.parse_pattern()
                else:
                    target = IdentPat(key)
                default = self.parse_assignment() if self.eat_punct("=") else None
                props.append((key, target, default))
                if not self.eat_punct(","):
                    break
            self.expect_punct("}")
            return ObjectPat(tuple(props))
        if self.at_punct("["):
            self.next()
            elements = []
            while not self.at_punct("]"):
                if self.at_punct(","):
                    self.next()
                    elements.append((None, None))
                    continue
                if self.at_punct("..."):
                    raise UnsupportedConstruct(
                        "rest elements in destructuring are outside the script subset")
                target = self.parse_pattern()
                default = self.parse_assignment() if self.eat_punct("=") else None
                elements.append((target, default))
                if not self.eat_punct(","):
                    break
            self.expect_punct("]")
            return ArrayPat(tuple(elements))
        if self.at("ident"):
            return IdentPat(self.next().value)
        raise self.error("expected a binding name or destructuring pattern")

    def parse_if(self) -> If:
        self.next()
        self.expect_punct("(")
        test = self.parse_expression()
        self.expect_punct(")")
        then = self.parse_statement()
        orelse = None
        if self.eat_keyword("else"):
            orelse = self.parse_statement()
        return If(test, then, orelse)

    def parse_while(self) -> While:
        self.next()
        self.expect_punct("(")
        test = self.parse_expression()
        self.expect_punct(")")
        return While(test, self.parse_statement())

    def parse_for_of(self) -> ForOf:
        self.next()
        self.expect_punct("(")
        if not (self.at_keyword("const") or self.at_keyword("let")):
            raise UnsupportedConstruct(
                "only for (const x of ...) / for (let x of ...) loops are in "
                "the script subset")
        kind = self.next().value
        pattern = self.parse_pattern()
        if not self.eat_keyword("of"):
            raise UnsupportedConstruct(
                "only for...of loops are in the script subset")
        iterable = self.parse_expression()
        self.expect_punct(")")
        return ForOf(kind, pattern, iterable, self.parse_statement())

    def parse_return(self) -> Return:
        self.next()
        if self.at_punct(";"):
            self.next()
            return Return(None)
        if self.at("eof") or self.at_punct("}") or not self.same_line():
            return Return(None)
        value = self.parse_expression()
        self.end_statement()
        return Return(value)

    def parse_throw(self) -> Throw:
        tok = self.next()
        if not self.same_line() and self.peek().line != tok.line:
            raise self.error("throw needs its value on the same line")
        value = self.parse_expression()
        self.end_statement()
        return Throw(value)

    def parse_try(self) -> Try:
        self.next()
        block = self.parse_block()
        param = None
        handler = None
        finalizer = None
        if self.eat_keyword("catch"):
            if self.eat_punct("("):
                param = self.parse_pattern()
                self.expect_punct(")")
            handler = self.parse_block()
        if self.eat_keyword("finally"):
            finalizer = self.parse_block()
        if handler is None and finalizer is None:
            raise self.error("try needs catch or finally")
        return Try(block, param, handler, finalizer)

    # --- expressions ----------------------------------------------------------

    def parse_expression(self) -> Node:
        expr = self.parse_assignment()
        if self.at_punct(","):
            raise UnsupportedConstruct(
                "comma expressions are outside the script subset")
        return expr

    def parse_assignment(self) -> Node:
        if self._arrow_ahead():
            return self.parse_arrow()
        left = self.parse_conditional()
        tok = self.peek()
        if tok.type == "punct" and tok.value in _UNSUPPORTED_BINARY:
            raise UnsupportedConstruct(
                f"the {tok.value} operator is outside the script subset "
                f"(line {tok.line})")
        if tok.type == "punct" and tok.value in _ASSIGN_OPS:
            if not isinstance(left, (Ident, Member, ChainRoot)):
                raise self.error("invalid assignment target")
            if isinstance(left, ChainRoot):
                raise ScriptError(
                    "SyntaxError: cannot assign through an optional chain "
                    f"(line {tok.line})")
            op = self.next().value
            value = self.parse_assignment()
            return Assign(op, left, value)
        return left

    def _arrow_ahead(self) -> bool:
        """Lookahead: ident =>, async ident =>, (params) =>, async (params) =>."""
        i = self.pos
        toks = self.tokens

        def tok(j):
            return toks[min(j, len(toks) - 1)]

        if tok(i).type == "keyword" and tok(i).value == "async" \
                and tok(i + 1).line == tok(i).line:
            i += 1
        if tok(i).type == "ident":
            nxt = tok(i + 1)
            return nxt.type == "punct" and nxt.value == "=>"
        if tok(i).type == "punct" and tok(i).value == "(":
            depth = 0
            j = i
            while j < len(toks):
                t = tok(j)
                if t.type == "punct" and t.value in "([{":
                    depth += 1
                elif t.type == "punct" and t.value in ")]}":
                    depth -= 1
                    if depth == 0:
                        after = tok(j + 1)
                        return after.type == "punct" and after.value == "=>"
                elif t.type == "eof":
                    return False
                j += 1
        return False

    def parse_arrow(self) -> Arrow:
        is_async = self.eat_keyword("async")
        params = []
        if self.at("ident"):
            params.append(Param(IdentPat(self.next().value), None))
        else:
            self.expect_punct("(")
            while not self.at_punct(")"):
                if self.at_punct("..."):
                    raise UnsupportedConstruct(
                        "rest parameters are outside the script subset")
                pattern = self.parse_pattern()
                default = self.parse_assignment() if self.eat_punct("=") else None
                params.append(Param(pattern, default))
                if not self.eat_punct(","):
                    break
            self.expect_punct(")")
        self.expect_punct("=>")
        if self.at_punct("{"):
            return Arrow(tuple(params), self.parse_block(), False, is_async)
        return Arrow(tuple(params), self.parse_assignment(), True, is_async)

    def parse_conditional(self) -> Node:
        test = self.parse_nullish()
        if self.eat_punct("?"):
            cons = self.parse_assignment()
            self.expect_punct(":")
            alt = self.parse_assignment()
            return Cond(test, cons, alt)
        return test

    def parse_nullish(self) -> Node:
        left = self.parse_or()
        while self.at_punct("??"):
            self.next()
            left = Logical("??", left, self.parse_or())
        return left

    def parse_or(self) -> Node:
        left = self.parse_and()
        while self.at_punct("||"):
            self.next()
            left = Logical("||", left, self.parse_and())
        return left

    def parse_and(self) -> Node:
        left = self.parse_equality()
        while self.at_punct("&&"):
            self.next()
            left = Logical("&&", left, self.parse_equality())
        return left

    def parse_equality(self) -> Node:
        left = self.parse_relational()
        while self.peek().type == "punct" and self.peek().value in _EQUALITY:
            op = self.next().value
            left = Binary(op, left, self.parse_relational())
        return left

    def parse_relational(self) -> Node:
        left = self.parse_additive()
        while self.peek().type == "punct" and self.peek().value in _RELATIONAL:
            op = self.next().value
            left = Binary(op, left, self.parse_additive())
        return left

    def parse_additive(self) -> Node:
        left = self.parse_multiplicative()
        while self.peek().type == "punct" and self.peek().value in _ADDITIVE:
            op = self.next().value
            left = Binary(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> Node:
        left = self.parse_unary()
        while self.peek().type == "punct" and self.peek().value in _MULTIPLICATIVE:
            op = self.next().value
            left = Binary(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Node:
        tok = self.peek()
        if tok.type == "punct" and tok.value in ("!", "-", "+"):
            self.next()
            return Unary(tok.value, self.parse_unary())
        if tok.type == "punct" and tok.value in ("++", "--"):
            raise UnsupportedConstruct(
                f"{tok.value} is outside the script subset; use += 1 or -= 1")
        if tok.type == "punct" and tok.value in ("~", "^", "&", "|", "<<", ">>", ">>>", "**"):
            raise UnsupportedConstruct(
                f"the {tok.value} operator is outside the script subset")
        if self.at_keyword("typeof"):
            self.next()
            return Unary("typeof", self.parse_unary())
        if self.at_keyword("await"):
            self.next()
            return Await(self.parse_unary())
        if self.at_keyword("new") or self.at_keyword("delete") or self.at_keyword("void"):
            raise self.unsupported(self.peek().value)
        return self.parse_postfix()

    def parse_postfix(self) -> Node:
        expr = self.parse_primary()
        chained = False
        while True:
            if self.at_punct("?."):
                self.next()
                chained = True
                if self.at_punct("("):
                    expr = Call(expr, self.parse_args(), optional=True)
                elif self.at_punct("["):
                    self.next()
                    index = self.parse_expression()
                    self.expect_punct("]")
                    expr = Member(expr, index, True, optional=True)
                else:
                    name = self.parse_prop_name()
                    expr = Member(expr, Str(name), False, optional=True)
                continue
            if self.at_punct("."):
                self.next()
                expr = Member(expr, Str(self.parse_prop_name()), False)
                continue
            if self.at_punct("["):
                self.next()
                index = self.parse_expression()
                self.expect_punct("]")
                expr = Member(expr, index, True)
                continue
            if self.at_punct("("):
                expr = Call(expr, self.parse_args())
                continue
            if self.at_punct("++") or self.at_punct("--"):
                raise UnsupportedConstruct(
                    f"{self.peek().value} is outside the script subset; "
                    "use += 1 or -= 1")
            break
        return ChainRoot(expr) if chained else expr

    def parse_prop_name(self) -> str:
        tok = self.peek()
        if tok.type in ("ident", "keyword"):
            self.next()
            return str(tok.value)
        raise self.error("expected a property name")

    def parse_args(self) -> tuple:
        self.expect_punct("(")
        args = []
        while not self.at_punct(")"):
            if self.eat_punct("..."):
                args.append(Spread(self.parse_assignment()))
            else:
                args.append(self.parse_assignment())
            if not self.eat_punct(","):
                break
        self.expect_punct(")")
        return tuple(args)

    def parse_primary(self) -> Node:
        tok = self.peek()
        if tok.type == "num":
            self.next()
            return Num(tok.value)
        if tok.type == "str":
            self.next()
            return Str(tok.value)
        if tok.type == "ident":
            self.next()
            return Ident(tok.value)
        if tok.type == "keyword":
            word = tok.value
            if word == "true":
                self.next()
                return Bool(True)
            if word == "false":
                self.next()
                return Bool(False)
            if word == "null":
                self.next()
                return Null()
            if word == "undefined":
                self.next()
                return Undef()
            if word == "async":
                # async arrows are routed earlier; an async here is stray
                raise self.error("unexpected async")
            raise self.unsupported(word)
        if self.at_punct("("):
            self.next()
            expr = self.parse_expression()
            self.expect_punct(")")
            return expr
        if self.at_punct("["):
            self.next()
            elements = []
            while not self.at_punct("]"):
                if self.eat_punct("..."):
                    elements.append(Spread(self.parse_assignment()))
                else:
                    elements.append(self.parse_assignment())
                if not self.eat_punct(","):
                    break
            self.expect_punct("]")
            return ArrayLit(tuple(elements))
        if self.at_punct("{"):
            return self.parse_object_literal()
        raise self.error("expected an expression")

    def parse_object_literal(self) -> ObjectLit:
        self.expect_punct("{")
        props = []
        while not self.at_punct("}"):
            if self.eat_punct("..."):
                props.append(Spread(self.parse_assignment()))
            elif self.at_punct("["):
                self.next()
                key = self.parse_assignment()
                self.expect_punct("]")
                self.expect_punct(":")
                props.append(Prop(key, self.parse_assignment(), True))
            else:
                tok = self.next()
                if tok.type not in ("ident", "str", "keyword", "num"):
                    raise self.error("expected a property name")
                key_name = str(tok.value)
                if self.eat_punct(":"):
                    props.append(Prop(Str(key_name), self.parse_assignment(), False))
                elif self.at_punct("("):
                    raise UnsupportedConstruct(
                        "object method shorthand is outside the script subset; "
                        "use name: (args) => ...")
                else:
                    if tok.type != "ident":
                        raise self.error("shorthand property needs a plain name")
                    props.append(Prop(Str(key_name), Ident(key_name), False))
            if not self.eat_punct(","):
                break
        self.expect_punct("}")
        return ObjectLit(tuple(props))


def parse_script(source: str) -> Program:
    return Parser(tokenize(source)).parse_program()
