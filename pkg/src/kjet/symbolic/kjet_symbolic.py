import logging
import math
from functools import lru_cache
from typing import Callable, Iterable, Optional

import numpy as np
import sympy as sp
from sympy.printing.precedence import PRECEDENCE
from sympy.printing.str import StrPrinter

from kjet.models.phase import PhasePoint, VectorField
from kjet.models.symbolic import (
    Context,
    CoordId,
    CoordOutOfRange,
    DomainError,
    EvalError,
)

Evaluator = Callable[[np.ndarray], np.ndarray]


def canonical(e) -> sp.Expr:
    """
    Canonical form used by every operation of the engine: the
    polynomial expansion of the expression tree (sums and products
    flattened and sorted, constants folded, like terms collected).
    Idempotent.

    :param e: a sympy expression or anything sympify accepts
    :return: the canonical expression
    """
    return sp.expand(sp.sympify(e))


def is_zero(e) -> bool:
    """
    Syntactic zero test after canonicalization, sound but incomplete
    """
    return canonical(e) == sp.S.Zero


def canonically_equal(a, b) -> bool:
    return is_zero(sp.sympify(a) - sp.sympify(b))


def differentiate(e, v: CoordId) -> sp.Expr:
    """
    Exact partial derivative, canonicalized. Derivatives of derivatives
    are plain expressions, so nesting is unbounded.

    :param e: the expression
    :param v: the differentiation coordinate
    :return: de/dv
    """
    return canonical(sp.diff(sp.sympify(e), v.symbol))


def free_coordinates(e) -> set[CoordId]:
    return {CoordId.from_symbol(s) for s in sp.sympify(e).free_symbols}


def substitute(e, bindings: dict[CoordId, any], ctx: Context) -> sp.Expr:
    """
    Simultaneous substitution followed by canonicalization.

    :param e: the expression
    :param bindings: replacement expression per coordinate
    :param ctx: the context the binding keys must belong to
    :return: the substituted expression
    """
    replacements = {}
    for coord, value in bindings.items():
        if not isinstance(coord, CoordId) or not ctx.contains(coord):
            raise CoordOutOfRange(
                f"cannot bind {coord} in context (n={ctx.n}, k={ctx.k})"
            )
        replacements[coord.symbol] = sp.sympify(value)
    return canonical(sp.sympify(e).xreplace(replacements))


def lie_apply(field: VectorField, e) -> sp.Expr:
    """
    Applies a vector field to an expression as a derivation,
    sum of component * d e / d coordinate over the natural frame.

    :param field: the vector field
    :param e: the expression
    :return: the canonical derivative
    """
    expression = sp.sympify(e)
    result = sp.S.Zero
    for component, coord in zip(field.components, field.ctx.coordinates()):
        if component == 0:
            continue
        result += component * sp.diff(expression, coord.symbol)
    return canonical(result)


def _checked_call(function, arguments: list[float]) -> list[float]:
    try:
        values = function(*arguments)
    except ZeroDivisionError as e:
        raise EvalError(f"division by zero ({e})")
    except ValueError as e:
        raise DomainError(f"function evaluated outside its domain ({e})")
    except OverflowError as e:
        raise EvalError(f"overflow ({e})")
    result = []
    for value in values:
        if isinstance(value, complex):
            raise DomainError("real power of a negative base")
        value = float(value)
        if not math.isfinite(value):
            raise EvalError(f"non finite value {value}")
        result.append(value)
    return result


@lru_cache(maxsize=4096)
def _compile(exprs: tuple[sp.Expr, ...], ctx: Context):
    return sp.lambdify(ctx.symbols(), list(exprs), modules="math")


def compile_evaluator(exprs: Iterable, ctx: Context) -> Evaluator:
    """
    Compiles a list of expressions to a numeric function of the flat
    argument vector (natural coordinates followed by the auxiliary
    ones). Compilations are cached per (expressions, context).

    :param exprs: the expressions
    :param ctx: the context fixing the argument order
    :return: a function returning a numpy array of the values
    """
    key = tuple(sp.sympify(e) for e in exprs)
    function = _compile(key, ctx)

    def evaluator(arguments) -> np.ndarray:
        return np.array(
            _checked_call(function, [float(a) for a in arguments]),
            dtype=float,
        )

    return evaluator


def point_context(p: PhasePoint) -> Context:
    return Context(p.n, p.k, len(p.aux))


def evaluate_all(
    exprs: Iterable, p: PhasePoint, ctx: Optional[Context] = None
) -> np.ndarray:
    """
    Evaluates several expressions at a point, reporting the point in
    the error message when the evaluation fails

    :param exprs: the expressions
    :param p: the phase point
    :param ctx: evaluation context, derived from the point if omitted
    :return: the values
    """
    if ctx is None:
        ctx = point_context(p)
    p.check_shape(ctx)
    evaluator = compile_evaluator(exprs, ctx)
    try:
        return evaluator(p.arguments()[: ctx.dimension + ctx.aux])
    except EvalError as e:
        logging.debug("evaluation failed at %s: %s", p.to_list(), e)
        raise type(e)(f"{e} at point {p.to_list()}")


def evaluate(e, p: PhasePoint, ctx: Optional[Context] = None) -> float:
    """
    IEEE double value of an expression at a point.

    :param e: the expression
    :param p: the phase point, its shape fixes the context
    :param ctx: optional explicit context
    :return: the value
    """
    return float(evaluate_all([e], p, ctx)[0])


class ExpressionPrinter(StrPrinter):
    """
    Prints expressions in the grammar read by parse_expr: `^` for
    powers and leading rational coefficients as `p/q*`
    """

    def _print_Mul(self, expr):
        coefficient, rest = expr.as_coeff_Mul()
        if (
            coefficient.is_Rational
            and not coefficient.is_Integer
            and rest is not sp.S.One
        ):
            sign = "-" if coefficient.is_negative else ""
            return (
                f"{sign}{abs(coefficient.p)}/{coefficient.q}*"
                f"{self.parenthesize(rest, PRECEDENCE['Mul'])}"
            )
        return super()._print_Mul(expr)

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")


def format_expr(e) -> str:
    """
    Text of an expression, re-parseable to the same canonical form

    :param e: the expression
    :return: the text
    """
    return ExpressionPrinter().doprint(canonical(e)).replace("**", "^")
