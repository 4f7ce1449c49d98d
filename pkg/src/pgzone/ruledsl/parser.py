"""Recursive-descent parser for rules and procedures.

Total over arbitrary input: every malformed program raises ParseError
carrying line, column, and the expected-token set. A depth guard keeps
deeply nested input from hitting the interpreter recursion limit, so the
parser never crashes: it either returns a tree or raises ParseError.
"""

from __future__ import annotations

from ..errors import ParseError
from .ast import (
    INT64_MAX,
    INT64_MIN,
    Allow,
    Assign,
    Binary,
    Call,
    Deny,
    Expr,
    Foreach,
    If,
    Item,
    Lit,
    ProcedureAst,
    RuleAst,
    Unary,
    Var,
)
from .lexer import Token, tokenize

# Context variables the engine binds at a PEP firing; procedure bodies may
# reference these in addition to their own params and locals.
SYSTEM_VARS = frozenset({
    "user.name", "user.role", "op",
    "obj.path", "obj.owner", "coll.path", "resc.name",
})

_MAX_DEPTH = 200

_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.depth = 0
        self.var_refs: list[Token] = []
        self._assigned: set[str] = set()

    # -- token plumbing ------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def fail(self, expected: tuple[str, ...]) -> ParseError:
        tok = self.peek()
        got = tok.value if tok.kind != "EOF" else "end of input"
        return ParseError(f"unexpected {got!r}", tok.line, tok.column, expected)

    def expect_op(self, op: str) -> Token:
        tok = self.peek()
        if tok.kind == "OP" and tok.value == op:
            return self.advance()
        raise self.fail((f"'{op}'",))

    def expect_kw(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.value == word:
            return self.advance()
        raise self.fail((f"'{word}'",))

    def expect_name(self, what: str, allow_dotted: bool = False) -> Token:
        tok = self.peek()
        if tok.kind != "NAME":
            raise self.fail((what,))
        if not allow_dotted and "." in tok.value:
            raise ParseError(f"{what} must not be dotted", tok.line, tok.column)
        return self.advance()

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "OP" and tok.value in ops

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "KEYWORD" and tok.value in words

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            tok = self.peek()
            raise ParseError("nesting too deep", tok.line, tok.column)

    def _leave(self) -> None:
        self.depth -= 1

    # -- grammar -------------------------------------------------------

    def parse_ruleset(self) -> list[RuleAst]:
        rules: list[RuleAst] = []
        while self.peek().kind != "EOF":
            rules.append(self.parse_rule())
        return rules

    def parse_rule(self) -> RuleAst:
        self.expect_kw("rule")
        name = self.expect_name("rule name").value
        priority = 0
        if self.at_kw("priority"):
            self.advance()
            priority = self._signed_int()
        self.expect_kw("on")
        pep = self.expect_name("enforcement point name", allow_dotted=True).value
        condition: Expr = Lit(True)
        if self.at_kw("when"):
            self.advance()
            condition = self.parse_expr()
        self.expect_kw("do")
        actions = self.parse_chain()
        return RuleAst(name=name, pep=pep, priority=priority,
                       condition=condition, actions=actions)

    def parse_procedure(self) -> ProcedureAst:
        self.expect_kw("procedure")
        name = self.expect_name("procedure name").value
        self.expect_op("(")
        params: list[str] = []
        if not self.at_op(")"):
            while True:
                tok = self.peek()
                if tok.kind != "VAR":
                    raise self.fail(("parameter",))
                if "." in tok.value:
                    raise ParseError("parameter must be a simple name",
                                     tok.line, tok.column)
                if tok.value in params:
                    raise ParseError(f"duplicate parameter '${tok.value}'",
                                     tok.line, tok.column)
                params.append(tok.value)
                self.advance()
                if self.at_op(","):
                    self.advance()
                    continue
                break
        self.expect_op(")")
        self.expect_op("{")
        body = self.parse_chain()
        self.expect_op("}")
        if self.peek().kind != "EOF":
            raise self.fail(("end of input",))
        proc = ProcedureAst(name=name, params=params, body=body)
        self._check_references(proc)
        return proc

    def _signed_int(self) -> int:
        negative = False
        if self.at_op("-"):
            self.advance()
            negative = True
        tok = self.peek()
        if tok.kind != "INT":
            raise self.fail(("integer",))
        self.advance()
        value = -tok.int_value if negative else tok.int_value
        if not INT64_MIN <= value <= INT64_MAX:
            raise ParseError("integer literal out of range", tok.line, tok.column)
        return value

    # -- chains ----------------------------------------------------------

    def parse_chain(self) -> list[Item]:
        self._enter()
        try:
            items = [self.parse_item()]
            while self.at_op(";"):
                self.advance()
                if self._at_item_start():
                    items.append(self.parse_item())
                else:
                    break  # trailing separator
            return items
        finally:
            self._leave()

    def _at_item_start(self) -> bool:
        tok = self.peek()
        if tok.kind in ("NAME", "VAR"):
            return True
        return tok.kind == "KEYWORD" and tok.value in (
            "if", "foreach", "allow", "deny")

    def parse_item(self) -> Item:
        tok = self.peek()
        if tok.kind == "NAME":
            return self.parse_call()
        if tok.kind == "VAR":
            if "." in tok.value:
                raise ParseError("cannot assign to a system binding",
                                 tok.line, tok.column)
            self.advance()
            self.expect_op("=")
            rhs_tok = self.peek()
            if rhs_tok.kind == "NAME":
                value = self.parse_call()
            else:
                value = self.parse_expr()
            self._note_assignment(tok.value)
            return Assign(target=tok.value, value=value)
        if self.at_kw("allow"):
            self.advance()
            self.expect_op("(")
            self.expect_op(")")
            return Allow()
        if self.at_kw("deny"):
            self.advance()
            self.expect_op("(")
            reason_tok = self.peek()
            if reason_tok.kind != "STRING":
                raise self.fail(("string",))
            self.advance()
            self.expect_op(")")
            return Deny(reason=reason_tok.value)
        if self.at_kw("if"):
            self.advance()
            cond = self.parse_expr()
            self.expect_op("{")
            then = self.parse_chain()
            self.expect_op("}")
            orelse = None
            if self.at_kw("else"):
                self.advance()
                self.expect_op("{")
                orelse = self.parse_chain()
                self.expect_op("}")
            return If(cond=cond, then=then, orelse=orelse)
        if self.at_kw("foreach"):
            self.advance()
            var_tok = self.peek()
            if var_tok.kind != "VAR":
                raise self.fail(("loop variable",))
            if "." in var_tok.value:
                raise ParseError("loop variable must be a simple name",
                                 var_tok.line, var_tok.column)
            self.advance()
            self.expect_kw("in")
            items_expr = self.parse_expr()
            self.expect_op("{")
            self._note_assignment(var_tok.value)
            body = self.parse_chain()
            self.expect_op("}")
            return Foreach(var=var_tok.value, items=items_expr, body=body)
        raise self.fail(("call", "assignment", "'if'", "'foreach'",
                         "'allow'", "'deny'"))

    def parse_call(self) -> Call:
        name = self.expect_name("micro-service name").value
        self.expect_op("(")
        args: list[Expr] = []
        if not self.at_op(")"):
            while True:
                args.append(self.parse_expr())
                if self.at_op(","):
                    self.advance()
                    continue
                break
        self.expect_op(")")
        return Call(name=name, args=tuple(args))

    # -- expressions (precedence: ! > */ > +- > cmp/matches > && > ||) ----

    def parse_expr(self) -> Expr:
        self._enter()
        try:
            return self._parse_or()
        finally:
            self._leave()

    def _parse_or(self) -> Expr:
        node = self._parse_and()
        while self.at_op("||"):
            self.advance()
            node = Binary("||", node, self._parse_and())
        return node

    def _parse_and(self) -> Expr:
        node = self._parse_cmp()
        while self.at_op("&&"):
            self.advance()
            node = Binary("&&", node, self._parse_cmp())
        return node

    def _parse_cmp(self) -> Expr:
        node = self._parse_add()
        while self.at_op(*_CMP_OPS) or self.at_kw("matches"):
            op = self.advance().value
            node = Binary(op, node, self._parse_add())
        return node

    def _parse_add(self) -> Expr:
        node = self._parse_mul()
        while self.at_op("+", "-"):
            op = self.advance().value
            node = Binary(op, node, self._parse_mul())
        return node

    def _parse_mul(self) -> Expr:
        node = self._parse_unary()
        while self.at_op("*", "/"):
            op = self.advance().value
            node = Binary(op, node, self._parse_unary())
        return node

    def _parse_unary(self) -> Expr:
        self._enter()
        try:
            if self.at_op("!"):
                self.advance()
                return Unary("!", self._parse_unary())
            return self._parse_primary()
        finally:
            self._leave()

    def _parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "INT":
            self.advance()
            if tok.int_value > INT64_MAX:
                raise ParseError("integer literal out of range",
                                 tok.line, tok.column)
            return Lit(tok.int_value)
        if tok.kind == "OP" and tok.value == "-":
            nxt = self.tokens[self.pos + 1]
            if nxt.kind == "INT":
                self.advance()
                self.advance()
                value = -nxt.int_value
                if value < INT64_MIN:
                    raise ParseError("integer literal out of range",
                                     nxt.line, nxt.column)
                return Lit(value)
            raise self.fail(("expression",))
        if tok.kind == "STRING":
            self.advance()
            return Lit(tok.value)
        if self.at_kw("true"):
            self.advance()
            return Lit(True)
        if self.at_kw("false"):
            self.advance()
            return Lit(False)
        if tok.kind == "VAR":
            self.advance()
            self.var_refs.append(tok)
            return Var(tok.value)
        if tok.kind == "OP" and tok.value == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise self.fail(("expression",))

    # -- static reference check for procedures ---------------------------

    def _note_assignment(self, name: str) -> None:
        self._assigned.add(name)

    def _check_references(self, proc: ProcedureAst) -> None:
        declared = set(proc.params) | self._assigned
        for tok in self.var_refs:
            name = tok.value
            if name in declared or name in SYSTEM_VARS:
                continue
            raise ParseError(f"reference to undeclared variable '${name}'",
                             tok.line, tok.column)


def parse_rules(text: str) -> list[RuleAst]:
    """Parse zero or more rules; source order is preserved."""
    return _Parser(text).parse_ruleset()


def parse_procedure(text: str) -> ProcedureAst:
    """Parse exactly one procedure definition."""
    return _Parser(text).parse_procedure()
