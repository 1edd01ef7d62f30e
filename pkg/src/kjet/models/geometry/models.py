from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import sympy as sp

from kjet.models.phase import Box, VectorField
from kjet.models.symbolic import (
    Context,
    CoordId,
    CoordOutOfRange,
    KjetException,
    ShapeMismatch,
)

ExprMatrix = tuple[tuple[sp.Expr, ...], ...]


class SingularMetric(KjetException):
    """
    The Hessian of the Lagrangian with respect to y(k) is degenerate
    """

    pass


class FinslerAxiomViolation(KjetException):
    """
    A fundamental function does not satisfy the Finsler axioms
    """

    pass


def _check_ambient(ctx: Context, expressions, what: str):
    for expression in expressions:
        for symbol in expression.free_symbols:
            coord = CoordId.from_symbol(symbol)
            if not ctx.ambient.contains(coord):
                raise CoordOutOfRange(
                    f"{what} depends on {coord}, outside of "
                    f"(n={ctx.n}, k={ctx.k})"
                )


def _check_matrices(ctx: Context, matrices, what: str):
    if len(matrices) != ctx.k:
        raise ShapeMismatch(f"{what} needs {ctx.k} levels")
    for matrix in matrices:
        if len(matrix) != ctx.n or any(len(row) != ctx.n for row in matrix):
            raise ShapeMismatch(f"{what} levels must be {ctx.n}x{ctx.n}")
        _check_ambient(ctx, [e for row in matrix for e in row], what)


@dataclass(frozen=True, order=False)
class KSemispray:
    """
    A k-semispray given by its coefficients G^i(x, y(1), .., y(k))
    """

    ctx: Context
    G: tuple[sp.Expr, ...]

    def __post_init__(self):
        if len(self.G) != self.ctx.n:
            raise ShapeMismatch(
                f"a k-semispray needs {self.ctx.n} coefficients"
            )
        _check_ambient(self.ctx, self.G, "k-semispray")


@dataclass(frozen=True, order=False)
class DualCoefficients:
    """
    Dual coefficients M(m)^i_j of a nonlinear connection, M[m-1][i-1][j-1]
    """

    ctx: Context
    M: tuple[ExprMatrix, ...]

    def __post_init__(self):
        _check_matrices(self.ctx, self.M, "dual coefficients")

    def level(self, m: int) -> ExprMatrix:
        return self.M[m - 1]


@dataclass(frozen=True, order=False)
class PrimalCoefficients:
    """
    Primal coefficients N(m)^i_j of a nonlinear connection
    """

    ctx: Context
    N: tuple[ExprMatrix, ...]

    def __post_init__(self):
        _check_matrices(self.ctx, self.N, "primal coefficients")

    def level(self, m: int) -> ExprMatrix:
        return self.N[m - 1]


@dataclass(frozen=True, order=False)
class AdaptedFrame:
    """
    Adapted basis (d/dx, d/dy(1), .., d/dy(k) corrected by the
    connection) and its cobasis (dx, dy(1), .., dy(k) corrected),
    both over the natural frame
    """

    ctx: Context
    basis: tuple[VectorField, ...]
    """
    (k+1)n vector fields ordered as the natural frame
    """
    cobasis: tuple[tuple[sp.Expr, ...], ...]
    """
    (k+1)n rows of coefficients over the natural coframe
    """


@dataclass(frozen=True, order=False)
class LagrangianSpec:
    """
    A Lagrangian of order k, or the square F^2 of a Finsler
    fundamental function when `finsler` is set
    """

    ctx: Context
    L: sp.Expr
    finsler: bool
    domain: Box

    def __post_init__(self):
        _check_ambient(self.ctx, [self.L], "Lagrangian")


@dataclass(frozen=True, order=False)
class MetricTensor:
    """
    g_ij = 1/2 d^2 L / dy(k)i dy(k)j, with the symbolic inverse when it
    is affordable
    """

    ctx: Context
    g: ExprMatrix
    g_inv: Optional[ExprMatrix]
    """
    symbolic inverse, None when per-point numeric inversion is used
    """
    determinant: Optional[sp.Expr]

    @property
    def inverse_strategy(self) -> str:
        return "symbolic" if self.g_inv is not None else "numeric"
