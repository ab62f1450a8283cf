"""Recursive-descent parser for boundary-data expressions.

Grammar (caret binds tighter than unary minus and associates right):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := unary ('^' factor)?
    unary  := '-' unary | atom
    atom   := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'

with func in {sin, cos, tan, exp, log, sqrt} and a single variable name
fixed per face ('phi' on the round face, 'r' on the flat one).  The ASCII
hyphen and the unicode minus sign are both accepted.
"""

from __future__ import annotations

import math

import numpy as np

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
}


class ParseError(ValueError):
    """Input text is not a valid data expression."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class _Num:
    def __init__(self, value):
        self.value = float(value)

    def eval(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def text(self):
        return repr(self.value) if self.value != int(self.value) else str(int(self.value))


class _Pi:
    def eval(self, x):
        return np.full_like(np.asarray(x, dtype=float), math.pi)

    def text(self):
        return "pi"


class _Var:
    def __init__(self, name):
        self.name = name

    def eval(self, x):
        return np.asarray(x, dtype=float)

    def text(self):
        return self.name


class _Unary:
    def __init__(self, operand):
        self.operand = operand

    def eval(self, x):
        return -self.operand.eval(x)

    def text(self):
        return f"(-{self.operand.text()})"


class _Bin:
    ops = {"+": np.add, "-": np.subtract, "*": np.multiply,
           "/": np.divide, "^": np.power}

    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def eval(self, x):
        return self.ops[self.op](self.left.eval(x), self.right.eval(x))

    def text(self):
        return f"({self.left.text()}{self.op}{self.right.text()})"


class _Call:
    def __init__(self, name, arg):
        self.name = name
        self.arg = arg

    def eval(self, x):
        return FUNCTIONS[self.name](self.arg.eval(x))

    def text(self):
        return f"{self.name}({self.arg.text()})"


class _Tokenizer:
    def __init__(self, text):
        self.text = text.replace("−", "-")
        self.pos = 0

    def peek(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos] if self.pos < len(self.text) else None

    def take_number(self):
        start = self.pos
        seen_dot = seen_exp = False
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isdigit():
                self.pos += 1
            elif ch == "." and not seen_dot and not seen_exp:
                seen_dot = True
                self.pos += 1
            elif ch in "eE" and self.pos > start and not seen_exp \
                    and self.pos + 1 < len(self.text) \
                    and (self.text[self.pos + 1].isdigit() or self.text[self.pos + 1] in "+-"):
                seen_exp = True
                self.pos += 2 if self.text[self.pos + 1] in "+-" else 1
            else:
                break
        try:
            return float(self.text[start:self.pos])
        except ValueError:
            raise ParseError(f"bad number {self.text[start:self.pos]!r}", start) from None

    def take_name(self):
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        return self.text[start:self.pos]


class DataExpression:
    """Parsed boundary-data expression over one variable."""

    def __init__(self, ast, var, source):
        self._ast = ast
        self.var = var
        self.source = source

    @classmethod
    def parse(cls, text, var):
        tok = _Tokenizer(text)
        ast = cls._expr(tok, var)
        if tok.peek() is not None:
            raise ParseError(f"unexpected trailing input {tok.text[tok.pos:]!r}", tok.pos)
        return cls(ast, var, text)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self._ast.eval(x)
        return out

    def to_string(self):
        return self._ast.text()

    # -- grammar ------------------------------------------------------------

    @classmethod
    def _expr(cls, tok, var):
        node = cls._term(tok, var)
        while tok.peek() in ("+", "-"):
            op = tok.peek()
            tok.pos += 1
            node = _Bin(op, node, cls._term(tok, var))
        return node

    @classmethod
    def _term(cls, tok, var):
        node = cls._factor(tok, var)
        while tok.peek() in ("*", "/"):
            op = tok.peek()
            tok.pos += 1
            node = _Bin(op, node, cls._factor(tok, var))
        return node

    @classmethod
    def _factor(cls, tok, var):
        node = cls._unary(tok, var)
        if tok.peek() == "^":
            tok.pos += 1
            node = _Bin("^", node, cls._factor(tok, var))
        return node

    @classmethod
    def _unary(cls, tok, var):
        if tok.peek() == "-":
            tok.pos += 1
            return _Unary(cls._unary(tok, var))
        return cls._atom(tok, var)

    @classmethod
    def _atom(cls, tok, var):
        ch = tok.peek()
        if ch is None:
            raise ParseError("unexpected end of input", tok.pos)
        if ch == "(":
            tok.pos += 1
            node = cls._expr(tok, var)
            if tok.peek() != ")":
                raise ParseError("unbalanced parenthesis", tok.pos)
            tok.pos += 1
            return node
        if ch.isdigit() or ch == ".":
            return _Num(tok.take_number())
        if ch.isalpha():
            name = tok.take_name()
            if name == "pi":
                return _Pi()
            if name == var:
                return _Var(name)
            if name in FUNCTIONS:
                if tok.peek() != "(":
                    raise ParseError(f"function {name!r} needs parentheses", tok.pos)
                tok.pos += 1
                arg = cls._expr(tok, var)
                if tok.peek() != ")":
                    raise ParseError("unbalanced parenthesis", tok.pos)
                tok.pos += 1
                return _Call(name, arg)
            raise ParseError(f"unknown identifier {name!r} (variable here is {var!r})", tok.pos)
        raise ParseError(f"unexpected character {ch!r}", tok.pos)
