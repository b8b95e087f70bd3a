"""A small arithmetic expression language for problem-spec fields.

Grammar (hand-rolled recursive descent; no external evaluator):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | 'x' | 'y' | 'pi' | 'e'
            | ('sin' | 'cos' | 'exp' | 'abs') '(' expr ')'
            | '(' expr ')'

Compiled expressions evaluate vectorized over numpy point arrays of
shape (..., dim); 'x' is the first coordinate and 'y' the second.
"""

from __future__ import annotations

import math

import numpy as np

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
}

_CONSTANTS = {
    "pi": math.pi,
    "e": math.e,
}


class ExpressionError(Exception):
    """Tokenizer or parser failure, with the offending position."""

    def __init__(self, message: str, text: str = "", pos: int = -1):
        if pos >= 0:
            message = f"{message} at position {pos}: "\
                      f"{text[:pos]}>>>{text[pos:pos + 8]}"
        super().__init__(message)
        self.pos = pos


_OPS = set("+-*/^()")


def _tokenize(text: str):
    """Yield (kind, value, pos) tokens: op, num, name."""
    i, n = 0, len(text)
    out = []
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _OPS:
            out.append(("op", ch, i))
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                val = float(text[i:j])
            except ValueError:
                raise ExpressionError(f"bad number {text[i:j]!r}", text, i)
            out.append(("num", val, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("name", text[i:j], i))
            i = j
            continue
        raise ExpressionError(f"unexpected character {ch!r}", text, i)
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0
        self.uses_y = False

    def peek(self):
        return self.tokens[self.k] if self.k < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ExpressionError("unexpected end of expression",
                                  self.text, len(self.text))
        self.k += 1
        return tok

    def expect_op(self, ch):
        tok = self.take()
        if tok[0] != "op" or tok[1] != ch:
            raise ExpressionError(f"expected {ch!r}", self.text, tok[2])

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExpressionError(f"trailing input {tok[1]!r}",
                                  self.text, tok[2])
        return node

    def expr(self):
        node = self.term()
        while True:
            tok = self.peek()
            if tok and tok[0] == "op" and tok[1] in "+-":
                self.k += 1
                rhs = self.term()
                if tok[1] == "+":
                    node = (lambda a, b: lambda env: a(env) + b(env))(node, rhs)
                else:
                    node = (lambda a, b: lambda env: a(env) - b(env))(node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            tok = self.peek()
            if tok and tok[0] == "op" and tok[1] in "*/":
                self.k += 1
                rhs = self.unary()
                if tok[1] == "*":
                    node = (lambda a, b: lambda env: a(env) * b(env))(node, rhs)
                else:
                    node = (lambda a, b: lambda env: a(env) / b(env))(node, rhs)
            else:
                return node

    def unary(self):
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.k += 1
            inner = self.unary()
            return lambda env: -inner(env)
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "^":
            self.k += 1
            expo = self.unary()
            return lambda env: np.power(base(env), expo(env))
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return lambda env, v=val: np.full_like(env["x"], v)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "name":
            if val == "x":
                return lambda env: env["x"]
            if val == "y":
                self.uses_y = True
                return lambda env: env["y"]
            if val in _CONSTANTS:
                return lambda env, v=_CONSTANTS[val]: np.full_like(env["x"], v)
            if val in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return lambda env, f=_FUNCTIONS[val]: f(arg(env))
            known = sorted(set(_FUNCTIONS) | set(_CONSTANTS) | {"x", "y"})
            raise ExpressionError(
                f"unknown name {val!r} (known: {', '.join(known)})",
                self.text, pos)
        raise ExpressionError(f"unexpected token {val!r}", self.text, pos)


class Expression:
    """A compiled expression; call it on points of shape (..., dim)."""

    def __init__(self, text: str):
        self.text = text
        parser = _Parser(text)
        self._fn = parser.parse()
        self.uses_y = parser.uses_y

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0 or pts.shape[-1] < 1:
            raise ExpressionError("points must have a coordinate axis")
        if self.uses_y and pts.shape[-1] < 2:
            raise ExpressionError(
                f"expression {self.text!r} uses y on a 1-D domain")
        env = {"x": pts[..., 0],
               "y": pts[..., 1] if pts.shape[-1] > 1 else None}
        return np.asarray(self._fn(env), dtype=float)

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse_expression(text: str) -> Expression:
    return Expression(str(text))
