"""Tokenizer for the script subset.

Produces a flat token stream with line numbers (the parser needs lines for
the restricted-production rule after ``return``/``throw``).  Regex literals
are not part of the subset, so ``/`` always lexes as an operator.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ScriptError, UnsupportedConstruct

KEYWORDS = {
    "const", "let", "var", "if", "else", "while", "for", "of", "in", "do",
    "return", "throw", "try", "catch", "finally", "break", "continue",
    "true", "false", "null", "undefined", "new", "function", "class",
    "await", "async", "typeof", "delete", "void", "yield", "switch",
    "case", "default", "import", "export", "this", "instanceof", "super",
}

# longest first so the scanner is greedy
PUNCTUATORS = [
    "...", "===", "!==", "**=", ">>>",
    "=>", "==", "!=", "<=", ">=", "&&", "||", "??", "?.",
    "+=", "-=", "*=", "/=", "%=", "++", "--", "**", "<<", ">>",
    "(", ")", "[", "]", "{", "}", ",", ";", ":", ".", "?",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", "^", "~",
]

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f",
            "v": "\v", "0": "\0", "'": "'", '"': '"', "\\": "\\", "`": "`",
            "\n": ""}


@dataclass(frozen=True)
class Token:
    type: str   # num | str | ident | keyword | punct | eof
    value: object
    line: int

    def __repr__(self) -> str:
        return f"Token({self.type}, {self.value!r}, line {self.line})"


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    n = len(source)

    def err(message: str) -> ScriptError:
        return ScriptError(f"SyntaxError: {message} (line {line})")

    while i < n:
        ch = source[i]

        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            continue

        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "*":
            end = source.find("*/", i + 2)
            if end < 0:
                raise err("unterminated block comment")
            line += source.count("\n", i, end)
            i = end + 2
            continue

        if ch == "`":
            raise UnsupportedConstruct(
                f"template literals are outside the script subset (line {line}); "
                "build strings with + instead")

        if ch in "'\"":
            quote = ch
            i += 1
            parts: list[str] = []
            while True:
                if i >= n:
                    raise err("unterminated string literal")
                c = source[i]
                if c == quote:
                    i += 1
                    break
                if c == "\n":
                    raise err("newline inside string literal")
                if c == "\\":
                    if i + 1 >= n:
                        raise err("dangling escape")
                    nxt = source[i + 1]
                    if nxt == "u":
                        hexpart = source[i + 2:i + 6]
                        if len(hexpart) == 4 and all(h in "0123456789abcdefABCDEF"
                                                     for h in hexpart):
                            parts.append(chr(int(hexpart, 16)))
                            i += 6
                            continue
                        raise err("bad unicode escape")
                    if nxt == "\n":
                        line += 1
                    parts.append(_ESCAPES.get(nxt, nxt))
                    i += 2
                    continue
                parts.append(c)
                i += 1
            tokens.append(Token("str", "".join(parts), line))
            continue

        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            start = i
            if source.startswith("0x", i) or source.startswith("0X", i):
                i += 2
                while i < n and source[i] in "0123456789abcdefABCDEF":
                    i += 1
                tokens.append(Token("num", int(source[start:i], 16), line))
                continue
            while i < n and source[i].isdigit():
                i += 1
            is_float = False
            if i < n and source[i] == "." and (i + 1 >= n or source[i + 1] != "."):
                is_float = True
                i += 1
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "eE":
                is_float = True
                i += 1
                if i < n and source[i] in "+-":
                    i += 1
                if i >= n or not source[i].isdigit():
                    raise err("bad number exponent")
                while i < n and source[i].isdigit():
                    i += 1
            text = source[start:i]
            tokens.append(Token("num", float(text) if is_float else int(text), line))
            continue

        if ch.isalpha() or ch in "_$":
            start = i
            while i < n and (source[i].isalnum() or source[i] in "_$"):
                i += 1
            word = source[start:i]
            kind = "keyword" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, line))
            continue

        for punct in PUNCTUATORS:
            if source.startswith(punct, i):
                # "?." followed by a digit is ternary-then-number (a ? .5 : b)
                if punct == "?." and i + 2 < n and source[i + 2].isdigit():
                    tokens.append(Token("punct", "?", line))
                    i += 1
                    break
                tokens.append(Token("punct", punct, line))
                i += len(punct)
                break
        else:
            raise err(f"unexpected character {ch!r}")

    tokens.append(Token("eof", None, line))
    return tokens
