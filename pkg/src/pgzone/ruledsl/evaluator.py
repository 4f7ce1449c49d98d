"""Expression evaluation.

Strictly typed over the value domain (string, int64, bool, list of
strings): operands must match the operator, mixed types raise
TypeMismatch. "&&" and "||" short-circuit. Arithmetic wraps to 64-bit
two's complement; "/" truncates toward zero. Pure: the result depends
only on (expr, ctx).
"""

from __future__ import annotations

from typing import Mapping

from ..common import glob_match
from ..errors import DivisionByZero, TypeMismatch, UnboundVariable
from .ast import Binary, Expr, Lit, Unary, Value, Var

_U64 = 2**64
_I64_MIN = -(2**63)


def _wrap64(x: int) -> int:
    return (x - _I64_MIN) % _U64 + _I64_MIN


def _is_int(v: object) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _require_bool(v: Value, op: str) -> bool:
    if isinstance(v, bool):
        return v
    raise TypeMismatch(f"'{op}' needs a boolean, got {type(v).__name__}")


def _trunc_div(a: int, b: int) -> int:
    q = a // b
    if (a < 0) != (b < 0) and a % b != 0:
        q += 1
    return q


def eval_expr(expr: Expr, ctx: Mapping[str, Value]) -> Value:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        try:
            return ctx[expr.name]
        except KeyError:
            raise UnboundVariable(f"${expr.name} is not bound") from None
    if isinstance(expr, Unary):
        return not _require_bool(eval_expr(expr.operand, ctx), expr.op)
    if isinstance(expr, Binary):
        op = expr.op
        if op == "&&":
            if not _require_bool(eval_expr(expr.left, ctx), op):
                return False
            return _require_bool(eval_expr(expr.right, ctx), op)
        if op == "||":
            if _require_bool(eval_expr(expr.left, ctx), op):
                return True
            return _require_bool(eval_expr(expr.right, ctx), op)

        left = eval_expr(expr.left, ctx)
        right = eval_expr(expr.right, ctx)

        if op == "matches":
            if not (isinstance(left, str) and isinstance(right, str)):
                raise TypeMismatch("'matches' needs string operands")
            return glob_match(left, right)

        if op in ("==", "!="):
            same = (
                (isinstance(left, bool) and isinstance(right, bool))
                or (_is_int(left) and _is_int(right))
                or (isinstance(left, str) and isinstance(right, str))
            )
            if not same:
                raise TypeMismatch(
                    f"'{op}' needs operands of one type, got "
                    f"{type(left).__name__} and {type(right).__name__}")
            return (left == right) if op == "==" else (left != right)

        if op in ("<", "<=", ">", ">="):
            ok = (_is_int(left) and _is_int(right)) or (
                isinstance(left, str) and isinstance(right, str))
            if not ok:
                raise TypeMismatch(
                    f"'{op}' needs two integers or two strings, got "
                    f"{type(left).__name__} and {type(right).__name__}")
            if op == "<":
                return left < right
            if op == "<=":
                return left <= right
            if op == ">":
                return left > right
            return left >= right

        if op in ("+", "-", "*", "/"):
            if not (_is_int(left) and _is_int(right)):
                raise TypeMismatch(f"'{op}' needs integer operands")
            if op == "+":
                return _wrap64(left + right)
            if op == "-":
                return _wrap64(left - right)
            if op == "*":
                return _wrap64(left * right)
            if right == 0:
                raise DivisionByZero("division by zero")
            return _wrap64(_trunc_div(left, right))

        raise TypeMismatch(f"unknown operator '{op}'")
    raise TypeMismatch(f"not an expression: {expr!r}")
