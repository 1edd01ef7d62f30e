from __future__ import annotations

import re
from dataclasses import dataclass

import sympy as sp

COORDINATE_NAME = re.compile(r"^(?:x\((\d+)\)|y\((\d+),(\d+)\))$")


class KjetException(Exception):
    """
    Base class of every error raised by the kjet packages
    """

    pass


class ExpressionSyntaxError(KjetException):
    """
    Raised by the expression parser, carries the offending position
    """

    position: int

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class CoordOutOfRange(KjetException):
    """
    A coordinate level or index does not fit the ambient context
    """

    pass


class EvalError(KjetException):
    """
    Numeric evaluation failed (pole, domain violation, overflow)
    """

    pass


class DomainError(EvalError):
    """
    A named unary function was evaluated outside of its domain
    """

    pass


class ShapeMismatch(KjetException):
    """
    A vector field or a point does not have the shape of its context
    """

    pass


class InvalidContext(KjetException):
    pass


@dataclass(frozen=True, order=True)
class CoordId:
    """
    Identifies one of the (k+1)n coordinates of a point of the
    k-tangent bundle: level 0 is the base coordinate x, level m >= 1
    the coordinate y(m)
    """

    level: int
    """
    coordinate level, 0 for x(i), m for y(m,i)
    """
    index: int
    """
    coordinate index, starting from 1
    """

    @property
    def name(self) -> str:
        if self.level == 0:
            return f"x({self.index})"
        return f"y({self.level},{self.index})"

    @property
    def symbol(self) -> sp.Symbol:
        """
        The sympy symbol standing for this coordinate inside
        expressions. No assumptions are attached, so sqrt(y^2) stays in
        the parser grammar instead of becoming Abs(y)
        """
        return sp.Symbol(self.name)

    @staticmethod
    def from_symbol(symbol: sp.Symbol) -> CoordId:
        """
        Recovers the coordinate from a symbol created by
        :attr:`CoordId.symbol`

        :param symbol: the sympy symbol
        :return: the coordinate id
        """
        match = COORDINATE_NAME.match(symbol.name)
        if not match:
            raise CoordOutOfRange(f"{symbol.name} is not a coordinate")
        if match.group(1) is not None:
            return CoordId(0, int(match.group(1)))
        return CoordId(int(match.group(2)), int(match.group(3)))

    def __str__(self):
        return self.name


@dataclass(frozen=True, order=False)
class Context:
    """
    The ambient dimensions (n, k) of the bundle of accelerations of
    order k over an n-dimensional base, optionally extended with
    auxiliary base coordinates x(n+1)..x(n+aux) used for curve
    parameters and homogeneity scalings
    """

    n: int
    """
    dimension of the base manifold
    """
    k: int
    """
    order of the bundle
    """
    aux: int = 0
    """
    number of auxiliary level-0 coordinates
    """

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.aux < 0:
            raise InvalidContext(
                f"invalid context n={self.n} k={self.k} aux={self.aux}"
            )

    @property
    def dimension(self) -> int:
        return (self.k + 1) * self.n

    @property
    def ambient(self) -> Context:
        """
        The same context without auxiliary coordinates
        """
        return Context(self.n, self.k)

    def extended(self, count: int = 1) -> Context:
        return Context(self.n, self.k, self.aux + count)

    def coordinates(self) -> list[CoordId]:
        """
        The natural-frame coordinates ordered as
        x(1)..x(n), y(1,1)..y(1,n), .., y(k,1)..y(k,n)
        """
        return [
            CoordId(level, index)
            for level in range(self.k + 1)
            for index in range(1, self.n + 1)
        ]

    def level(self, level: int) -> list[CoordId]:
        return [CoordId(level, index) for index in range(1, self.n + 1)]

    def auxiliary(self) -> list[CoordId]:
        return [
            CoordId(0, self.n + offset) for offset in range(1, self.aux + 1)
        ]

    def symbols(self) -> list[sp.Symbol]:
        """
        Argument order of every compiled evaluator: natural
        coordinates followed by the auxiliary ones
        """
        return [c.symbol for c in self.coordinates() + self.auxiliary()]

    def contains(self, coord: CoordId) -> bool:
        if coord.level == 0:
            return 1 <= coord.index <= self.n + self.aux
        return 0 < coord.level <= self.k and 1 <= coord.index <= self.n

    def slot(self, coord: CoordId) -> int:
        """
        Position of a natural coordinate in the natural frame
        """
        if not self.contains(coord) or coord.index > self.n:
            raise CoordOutOfRange(f"{coord} is not a natural coordinate")
        return coord.level * self.n + coord.index - 1
