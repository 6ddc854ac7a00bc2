"""Assertion expression language: a small, total, side-effect-free language
in which every harness rule is written.

The language covers float arithmetic (+ - * / **), comparisons, boolean
connectives (and/or/not) and a fixed function set. There is no assignment,
no iteration, no strings and no user-defined functions, so evaluation always
terminates. Comparisons are exact IEEE comparisons; any tolerance policy
belongs in the rule text, not here.

Grammar (loosest to tightest binding):

    or < and < not < comparison < add/sub < mul/div < unary minus < ** < call/paren

`**` is right-associative and binds tighter than unary minus, so ``-2**2``
is ``-(2**2)``. See docs/grammar.md for the full grammar.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

Value = Union[float, bool]
FactMap = Mapping[str, Value]

# Fixed function set with arities. `log` is deliberately absent (base
# ambiguity); use `ln` or `log10`.
FUNCTIONS: dict[str, int] = {
    "exp": 1,
    "ln": 1,
    "log10": 1,
    "sqrt": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
}

_KEYWORDS = frozenset({"and", "or", "not"})

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def is_identifier(name: str) -> bool:
    return bool(IDENT_RE.fullmatch(name))


# ---------------------------------------------------------------------------
# Errors


class ExprError(Exception):
    """Base class for all expression-language errors."""


class ParseError(ExprError):
    """Syntax error with a byte offset and the set of tokens expected there."""

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at byte {offset}"
        if expected:
            detail += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(detail)


class ArityError(ParseError):
    """A call to a known function with the wrong number of arguments."""

    def __init__(self, function: str, got: int, want: int, offset: int):
        self.function = function
        self.got = got
        self.want = want
        super().__init__(f"{function}() takes {want} argument(s), got {got}", offset)


class MalformedAccessor(ExprError):
    """`input.get(` without a closing quoted identifier in legacy text."""

    def __init__(self, offset: int):
        self.offset = offset
        super().__init__(f"malformed input.get accessor at byte {offset}")


class EvalError(ExprError):
    """Base class for evaluation-time failures."""


class UnboundVariable(EvalError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"UnboundVariable({name})")


class TypeMismatch(EvalError):
    def __init__(self, op: str, value: Value):
        self.op = op
        self.value = value
        super().__init__(f"TypeMismatch({op}, {value!r})")


class DomainError(EvalError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"DomainError({reason})")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / **
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str  # < <= > >= == !=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # and | or
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Compare, BoolOp, Not, Call]

COMPARISON_OPS = ("<=", ">=", "==", "!=", "<", ">")


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER IDENT OP LPAREN RPAREN COMMA KEYWORD EOF
    text: str
    offset: int  # byte offset into the UTF-8 encoding of the source


_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_OPS = ("**", "<=", ">=", "==", "!=", "+", "-", "*", "/", "<", ">")


def _tokenize(source: str) -> Iterator[_Token]:
    data = source.encode("utf-8")
    i = 0
    n = len(data)
    while i < n:
        ch = chr(data[i])
        if ch in " \t\r\n":
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and chr(data[i + 1]).isdigit()):
            m = _NUMBER_RE.match(data[i:].decode("utf-8", errors="replace"))
            assert m is not None
            text = m.group(0)
            yield _Token("NUMBER", text, i)
            i += len(text.encode("utf-8"))
            continue
        if ch.isalpha() or ch == "_":
            m = IDENT_RE.match(data[i:].decode("utf-8", errors="replace"))
            assert m is not None
            text = m.group(0)
            kind = "KEYWORD" if text in _KEYWORDS else "IDENT"
            yield _Token(kind, text, i)
            i += len(text.encode("utf-8"))
            continue
        if ch == "(":
            yield _Token("LPAREN", "(", i)
            i += 1
            continue
        if ch == ")":
            yield _Token("RPAREN", ")", i)
            i += 1
            continue
        if ch == ",":
            yield _Token("COMMA", ",", i)
            i += 1
            continue
        for op in _OPS:
            if data[i:].startswith(op.encode()):
                yield _Token("OP", op, i)
                i += len(op)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", i)
    yield _Token("EOF", "", n)


# ---------------------------------------------------------------------------
# Parser (recursive descent)


class _Parser:
    def __init__(self, source: str):
        self.tokens = list(_tokenize(source))
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        tok = self.cur
        self.pos += 1
        return tok

    def _expect(self, kind: str, expected: frozenset[str]) -> _Token:
        if self.cur.kind != kind:
            raise ParseError(
                f"unexpected token {self.cur.text or '<end>'!r}", self.cur.offset, expected
            )
        return self._advance()

    def parse(self) -> Expr:
        expr = self.or_expr()
        if self.cur.kind != "EOF":
            raise ParseError(
                f"trailing input {self.cur.text!r}", self.cur.offset, frozenset({"<end>"})
            )
        return expr

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.cur.kind == "KEYWORD" and self.cur.text == "or":
            self._advance()
            left = BoolOp("or", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.cur.kind == "KEYWORD" and self.cur.text == "and":
            self._advance()
            left = BoolOp("and", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.cur.kind == "KEYWORD" and self.cur.text == "not":
            self._advance()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        if self.cur.kind == "OP" and self.cur.text in COMPARISON_OPS:
            op = self._advance().text
            right = self.additive()
            # No comparison chaining: `a < b < c` is a syntax error.
            if self.cur.kind == "OP" and self.cur.text in COMPARISON_OPS:
                raise ParseError(
                    "chained comparisons are not supported",
                    self.cur.offset,
                    frozenset({"<end>", ")", "and", "or"}),
                )
            return Compare(op, left, right)
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.cur.kind == "OP" and self.cur.text in ("+", "-"):
            op = self._advance().text
            left = BinOp(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.cur.kind == "OP" and self.cur.text in ("*", "/"):
            op = self._advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.cur.kind == "OP" and self.cur.text == "-":
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.cur.kind == "OP" and self.cur.text == "**":
            self._advance()
            # Right-associative; exponent may carry a unary minus.
            return BinOp("**", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.cur
        if tok.kind == "NUMBER":
            self._advance()
            return Num(float(tok.text))
        if tok.kind == "IDENT":
            self._advance()
            if self.cur.kind == "LPAREN":
                if tok.text not in FUNCTIONS:
                    raise ParseError(
                        f"unknown function {tok.text!r}", tok.offset, frozenset(FUNCTIONS)
                    )
                self._advance()
                args: list[Expr] = []
                if self.cur.kind != "RPAREN":
                    args.append(self.or_expr())
                    while self.cur.kind == "COMMA":
                        self._advance()
                        args.append(self.or_expr())
                self._expect("RPAREN", frozenset({")", ","}))
                want = FUNCTIONS[tok.text]
                if len(args) != want:
                    raise ArityError(tok.text, len(args), want, tok.offset)
                return Call(tok.text, tuple(args))
            return Var(tok.text)
        if tok.kind == "LPAREN":
            self._advance()
            inner = self.or_expr()
            self._expect("RPAREN", frozenset({")"}))
            return inner
        raise ParseError(
            f"unexpected token {tok.text or '<end>'!r}",
            tok.offset,
            frozenset({"number", "identifier", "(", "-", "not"}),
        )


def parse(source: str) -> Expr:
    """Parse source text into an AST.

    Raises ParseError (with byte offset and expected-token set) or ArityError.
    """
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Evaluation


def _as_number(value: Value, op: str) -> float:
    if isinstance(value, bool):
        raise TypeMismatch(op, value)
    return float(value)


def _finite(x: float, op: str) -> float:
    if not math.isfinite(x):
        raise DomainError(f"non-finite result from {op}")
    return x


def evaluate(expr: Expr, facts: FactMap) -> Value:
    """Evaluate an expression against a fact map.

    Deterministic: identical inputs yield bit-identical results. Raises
    UnboundVariable, TypeMismatch or DomainError; never diverges.
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            v = facts[expr.name]
        except KeyError:
            raise UnboundVariable(expr.name) from None
        if isinstance(v, bool):
            return v
        return float(v)
    if isinstance(expr, Neg):
        return -_as_number(evaluate(expr.operand, facts), "-")
    if isinstance(expr, BinOp):
        left = _as_number(evaluate(expr.left, facts), expr.op)
        right = _as_number(evaluate(expr.right, facts), expr.op)
        if expr.op == "+":
            return _finite(left + right, "+")
        if expr.op == "-":
            return _finite(left - right, "-")
        if expr.op == "*":
            return _finite(left * right, "*")
        if expr.op == "/":
            if right == 0.0:
                raise DomainError("division by zero")
            return _finite(left / right, "/")
        if expr.op == "**":
            # Real-valued power: negative base with a non-integer exponent has
            # no real result, and 0 cannot be raised to a negative power.
            if left < 0.0 and right != math.floor(right):
                raise DomainError("negative base with non-integer exponent")
            if left == 0.0 and right < 0.0:
                raise DomainError("zero base with negative exponent")
            try:
                return _finite(left**right, "**")
            except OverflowError:
                raise DomainError("non-finite result from **") from None
        raise AssertionError(f"unknown operator {expr.op}")
    if isinstance(expr, Compare):
        lv = evaluate(expr.left, facts)
        rv = evaluate(expr.right, facts)
        if expr.op in ("==", "!="):
            if isinstance(lv, bool) != isinstance(rv, bool):
                raise TypeMismatch(expr.op, rv)
            return (lv == rv) if expr.op == "==" else (lv != rv)
        ln = _as_number(lv, expr.op)
        rn = _as_number(rv, expr.op)
        if expr.op == "<":
            return ln < rn
        if expr.op == "<=":
            return ln <= rn
        if expr.op == ">":
            return ln > rn
        if expr.op == ">=":
            return ln >= rn
        raise AssertionError(f"unknown comparison {expr.op}")
    if isinstance(expr, BoolOp):
        lv = evaluate(expr.left, facts)
        if not isinstance(lv, bool):
            raise TypeMismatch(expr.op, lv)
        # Short-circuit; the language is side-effect-free so this is
        # observationally equivalent to eager evaluation except for errors.
        if expr.op == "and" and not lv:
            return False
        if expr.op == "or" and lv:
            return True
        rv = evaluate(expr.right, facts)
        if not isinstance(rv, bool):
            raise TypeMismatch(expr.op, rv)
        return rv
    if isinstance(expr, Not):
        v = evaluate(expr.operand, facts)
        if not isinstance(v, bool):
            raise TypeMismatch("not", v)
        return not v
    if isinstance(expr, Call):
        args = [evaluate(a, facts) for a in expr.args]
        nums = [_as_number(a, expr.func) for a in args]
        if expr.func == "exp":
            try:
                return _finite(math.exp(nums[0]), "exp")
            except OverflowError:
                raise DomainError("non-finite result from exp") from None
        if expr.func == "ln":
            if nums[0] <= 0.0:
                raise DomainError("ln of non-positive value")
            return _finite(math.log(nums[0]), "ln")
        if expr.func == "log10":
            if nums[0] <= 0.0:
                raise DomainError("log10 of non-positive value")
            return _finite(math.log10(nums[0]), "log10")
        if expr.func == "sqrt":
            if nums[0] < 0.0:
                raise DomainError("sqrt of negative value")
            return _finite(math.sqrt(nums[0]), "sqrt")
        if expr.func == "abs":
            return abs(nums[0])
        if expr.func == "min":
            return min(nums)
        if expr.func == "max":
            return max(nums)
        raise AssertionError(f"unknown function {expr.func}")
    raise AssertionError(f"unknown node {expr!r}")


def free_vars(expr: Expr) -> frozenset[str]:
    """The exact set of variable references in an expression."""
    if isinstance(expr, Num):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset({expr.name})
    if isinstance(expr, (Neg, Not)):
        return free_vars(expr.operand)
    if isinstance(expr, (BinOp, Compare, BoolOp)):
        return free_vars(expr.left) | free_vars(expr.right)
    if isinstance(expr, Call):
        out: frozenset[str] = frozenset()
        for a in expr.args:
            out |= free_vars(a)
        return out
    raise AssertionError(f"unknown node {expr!r}")


# ---------------------------------------------------------------------------
# Pretty printer (round-trip: parse(to_source(e)) == e)

_LEVEL_OR = 1
_LEVEL_AND = 2
_LEVEL_NOT = 3
_LEVEL_CMP = 4
_LEVEL_ADD = 5
_LEVEL_MUL = 6
_LEVEL_NEG = 7
_LEVEL_POW = 8
_LEVEL_ATOM = 9


def _level(expr: Expr) -> int:
    if isinstance(expr, BoolOp):
        return _LEVEL_OR if expr.op == "or" else _LEVEL_AND
    if isinstance(expr, Not):
        return _LEVEL_NOT
    if isinstance(expr, Compare):
        return _LEVEL_CMP
    if isinstance(expr, BinOp):
        if expr.op in ("+", "-"):
            return _LEVEL_ADD
        if expr.op in ("*", "/"):
            return _LEVEL_MUL
        return _LEVEL_POW
    if isinstance(expr, Neg):
        return _LEVEL_NEG
    return _LEVEL_ATOM


def _wrap(expr: Expr, minimum: int) -> str:
    text = to_source(expr)
    if _level(expr) < minimum:
        return f"({text})"
    return text


def to_source(expr: Expr) -> str:
    """Render an AST back to parseable source with minimal parentheses."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return f"-{_wrap(expr.operand, _LEVEL_NEG)}"
    if isinstance(expr, BinOp):
        if expr.op == "**":
            # Left operand must be atom-level; right may include unary minus.
            return f"{_wrap(expr.left, _LEVEL_ATOM)} ** {_wrap(expr.right, _LEVEL_NEG)}"
        lvl = _level(expr)
        # Left-associative: the right child needs strictly tighter binding.
        return f"{_wrap(expr.left, lvl)} {expr.op} {_wrap(expr.right, lvl + 1)}"
    if isinstance(expr, Compare):
        return f"{_wrap(expr.left, _LEVEL_ADD)} {expr.op} {_wrap(expr.right, _LEVEL_ADD)}"
    if isinstance(expr, BoolOp):
        lvl = _level(expr)
        return f"{_wrap(expr.left, lvl)} {expr.op} {_wrap(expr.right, lvl + 1)}"
    if isinstance(expr, Not):
        return f"not {_wrap(expr.operand, _LEVEL_NOT)}"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(to_source(a) for a in expr.args)})"
    raise AssertionError(f"unknown node {expr!r}")


# ---------------------------------------------------------------------------
# Legacy accessor translation

_ACCESSOR_RE = re.compile(r"input\.get\(\s*(['\"])([A-Za-z_][A-Za-z0-9_]*)\1\s*\)")
_ACCESSOR_HEAD = "input.get("


def translate_legacy(source: str) -> str:
    """Rewrite accessor-style references into bare variable names.

    Every ``input.get('ident')`` / ``input.get("ident")`` becomes ``ident``;
    all other text is unchanged. Idempotent. Raises MalformedAccessor when an
    ``input.get(`` appears without a closing quoted identifier.
    """
    translated = _ACCESSOR_RE.sub(lambda m: m.group(2), source)
    idx = translated.find(_ACCESSOR_HEAD)
    if idx != -1:
        raise MalformedAccessor(len(translated[:idx].encode("utf-8")))
    return translated


# ---------------------------------------------------------------------------
# Structural helpers used by the assertion engine


def comparison_root(expr: Expr) -> Compare | None:
    """The root comparison of an assertion, if it is comparison-rooted."""
    return expr if isinstance(expr, Compare) else None


def compile_fn(expr: Expr) -> Callable[[FactMap], Value]:
    """Bind an AST into a closure for repeated evaluation of the same tree."""

    def run(facts: FactMap) -> Value:
        return evaluate(expr, facts)

    return run
