"""Tokenizer for the rule / procedure language.

Iterative (no recursion), total over arbitrary input: anything that is not
a token raises ParseError with the offending line and column. "#" starts a
comment running to end of line. Identifiers may be dotted (PEP names,
variables); keywords are reserved identifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError

KEYWORDS = frozenset({
    "rule", "priority", "on", "when", "do", "procedure",
    "if", "else", "foreach", "in", "allow", "deny",
    "matches", "true", "false",
})

# Two-char operators first so max-munch works.
_TWO_CHAR = {"==", "!=", "<=", ">=", "&&", "||"}
_ONE_CHAR = set("()={}<>+-*/;,!")

_IDENT_START = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_"
)
_DIGITS = frozenset("0123456789")
_IDENT_CONT = _IDENT_START | _DIGITS

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n"}


@dataclass(frozen=True)
class Token:
    kind: str   # NAME KEYWORD VAR INT STRING OP EOF
    value: str
    line: int
    column: int

    @property
    def int_value(self) -> int:
        return int(self.value)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    line, col = 1, 1

    def err(msg: str) -> ParseError:
        return ParseError(msg, line, col)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue

        start_line, start_col = line, col

        if ch == "$":
            j = i + 1
            if j >= n or text[j] not in _IDENT_START:
                raise err("expected variable name after '$'")
            j += 1
            while j < n and (text[j] in _IDENT_CONT or
                             (text[j] == "." and j + 1 < n and text[j + 1] in _IDENT_CONT)):
                j += 1
            name = text[i + 1:j]
            tokens.append(Token("VAR", name, start_line, start_col))
            col += j - i
            i = j
            continue

        if ch in _IDENT_START:
            j = i + 1
            while j < n and (text[j] in _IDENT_CONT or
                             (text[j] == "." and j + 1 < n and text[j + 1] in _IDENT_CONT)):
                j += 1
            word = text[i:j]
            kind = "KEYWORD" if word in KEYWORDS else "NAME"
            tokens.append(Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue

        if ch in _DIGITS:  # ASCII only; str.isdigit also matches U+00B3 etc.
            j = i
            while j < n and text[j] in _DIGITS:
                j += 1
            digits = text[i:j]
            if len(digits) > 19:  # definitely exceeds 2**63
                raise err("integer literal out of range")
            tokens.append(Token("INT", digits, start_line, start_col))
            col += j - i
            i = j
            continue

        if ch == '"':
            j = i + 1
            buf: list[str] = []
            while True:
                if j >= n:
                    raise ParseError("unterminated string", start_line, start_col)
                c = text[j]
                if c == '"':
                    j += 1
                    break
                if c == "\n":
                    raise ParseError("unterminated string", start_line, start_col)
                if c == "\\":
                    if j + 1 >= n:
                        raise ParseError("unterminated string", start_line, start_col)
                    esc = text[j + 1]
                    if esc not in _ESCAPES:
                        raise ParseError(f"unknown escape '\\{esc}'", line, col + (j - i))
                    buf.append(_ESCAPES[esc])
                    j += 2
                    continue
                buf.append(c)
                j += 1
            tokens.append(Token("STRING", "".join(buf), start_line, start_col))
            col += j - i
            i = j
            continue

        two = text[i:i + 2]
        if two in _TWO_CHAR:
            tokens.append(Token("OP", two, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(Token("OP", ch, start_line, start_col))
            i += 1
            col += 1
            continue

        raise err(f"unexpected character {ch!r}")

    tokens.append(Token("EOF", "", line, col))
    return tokens
