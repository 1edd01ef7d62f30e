import re

import sympy as sp

from kjet.models.symbolic import (
    Context,
    CoordId,
    CoordOutOfRange,
    ExpressionSyntaxError,
)
from kjet.symbolic.kjet_symbolic import canonical

FUNCTIONS = {
    "sqrt": sp.sqrt,
    "exp": sp.exp,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
}

NUMBER = re.compile(r"\d+\.\d*|\.\d+|\d+")
INTEGER = re.compile(r"\d+")
NAME = re.compile(r"[a-z]+")


class ExpressionParser:
    """
    Recursive descent parser of the expression grammar

        expr   := term (("+" | "-") term)*
        term   := unary (("*" | "/") unary)*
        unary  := ("+" | "-") unary | power
        power  := atom ("^" exponent)?
        exponent := ["+" | "-"] integer | "(" ["+" | "-"] integer ")"
        atom   := number | "x(" i ")" | "y(" m "," i ")"
                  | function "(" expr ")" | "(" expr ")"

    numbers are read as exact rationals
    """

    def __init__(self, text: str, ctx: Context):
        self.text = text
        self.ctx = ctx
        self.pos = 0
        self.length = len(text)

    def skip_whitespace(self):
        while self.pos < self.length and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_whitespace()
        if self.pos < self.length:
            return self.text[self.pos]
        return ""

    def match(self, terminal: str) -> bool:
        self.skip_whitespace()
        if self.text.startswith(terminal, self.pos):
            self.pos += len(terminal)
            return True
        return False

    def expect(self, terminal: str):
        if not self.match(terminal):
            found = self.peek() or "end of input"
            raise ExpressionSyntaxError(
                f"expected '{terminal}', found '{found}'", self.pos
            )

    def parse(self) -> sp.Expr:
        self.pos = 0
        result = self.parse_expr()
        self.skip_whitespace()
        if self.pos < self.length:
            raise ExpressionSyntaxError(
                f"unexpected '{self.text[self.pos]}'", self.pos
            )
        if result.has(sp.zoo, sp.oo, -sp.oo, sp.nan):
            raise ExpressionSyntaxError("undefined constant", 0)
        return canonical(result)

    def parse_expr(self) -> sp.Expr:
        result = self.parse_term()
        while True:
            if self.match("+"):
                result = result + self.parse_term()
            elif self.match("-"):
                result = result - self.parse_term()
            else:
                return result

    def parse_term(self) -> sp.Expr:
        result = self.parse_unary()
        while True:
            if self.match("*"):
                result = result * self.parse_unary()
            elif self.match("/"):
                position = self.pos
                divisor = self.parse_unary()
                if divisor == 0:
                    raise ExpressionSyntaxError("division by zero", position)
                result = result / divisor
            else:
                return result

    def parse_unary(self) -> sp.Expr:
        if self.match("-"):
            return -self.parse_unary()
        if self.match("+"):
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> sp.Expr:
        base = self.parse_atom()
        if self.match("^"):
            position = self.pos
            exponent = self.parse_exponent()
            if base == 0 and exponent < 0:
                raise ExpressionSyntaxError("division by zero", position)
            return base**exponent
        return base

    def parse_exponent(self) -> int:
        parenthesized = self.match("(")
        sign = 1
        if self.match("-"):
            sign = -1
        elif self.match("+"):
            sign = 1
        self.skip_whitespace()
        literal = INTEGER.match(self.text, self.pos)
        if not literal:
            raise ExpressionSyntaxError(
                "the exponent must be an integer literal", self.pos
            )
        self.pos = literal.end()
        if parenthesized:
            self.expect(")")
        return sign * int(literal.group())

    def parse_index(self) -> int:
        self.skip_whitespace()
        literal = INTEGER.match(self.text, self.pos)
        if not literal:
            raise ExpressionSyntaxError("expected an index", self.pos)
        self.pos = literal.end()
        return int(literal.group())

    def parse_coordinate(self, name: str, position: int) -> sp.Expr:
        self.expect("(")
        if name == "x":
            coord = CoordId(0, self.parse_index())
        else:
            level = self.parse_index()
            self.expect(",")
            coord = CoordId(level, self.parse_index())
        self.expect(")")
        if (name == "y" and coord.level < 1) or not self.ctx.contains(coord):
            raise CoordOutOfRange(
                f"{coord} at position {position} is outside of "
                f"(n={self.ctx.n}, k={self.ctx.k})"
            )
        return coord.symbol

    def parse_atom(self) -> sp.Expr:
        self.skip_whitespace()
        position = self.pos
        if self.match("("):
            result = self.parse_expr()
            self.expect(")")
            return result
        number = NUMBER.match(self.text, self.pos)
        if number:
            self.pos = number.end()
            return sp.Rational(number.group())
        name = NAME.match(self.text, self.pos)
        if name:
            self.pos = name.end()
            identifier = name.group()
            if identifier in ("x", "y"):
                return self.parse_coordinate(identifier, position)
            if identifier in FUNCTIONS:
                self.expect("(")
                argument = self.parse_expr()
                self.expect(")")
                return FUNCTIONS[identifier](argument)
            raise ExpressionSyntaxError(
                f"unknown name '{identifier}'", position
            )
        found = self.peek() or "end of input"
        raise ExpressionSyntaxError(f"unexpected '{found}'", position)


def parse_expr(text: str, ctx: Context) -> sp.Expr:
    """
    Parses an expression over the coordinates x(i), y(m,i) of a
    context.

    :param text: the expression text
    :param ctx: the ambient context, auxiliary coordinates included
    :return: the canonical expression
    :raises ExpressionSyntaxError: on malformed text, with the position
    :raises CoordOutOfRange: on a coordinate outside of the context
    """
    return ExpressionParser(text, ctx).parse()
