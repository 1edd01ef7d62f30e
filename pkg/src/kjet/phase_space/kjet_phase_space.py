import logging
import math
from typing import Optional

import numpy as np
import sympy as sp

from kjet.models.phase import (
    DEFAULT_SLIT_MARGIN,
    Box,
    ChartMap,
    CheckReport,
    IndexOutOfRange,
    InvalidDomain,
    PhasePoint,
    SingularJacobian,
    VectorField,
)
from kjet.models.symbolic import Context, CoordId, CoordOutOfRange
from kjet.symbolic import (
    canonical,
    differentiate,
    evaluate_all,
    is_zero,
    lie_apply,
    substitute,
)

JACOBIAN_THRESHOLD = 1e-8
MAX_REJECTIONS = 10000


def gamma_operator(ctx: Context) -> VectorField:
    """
    The level shifting operator y(1) d/dx + 2y(2) d/dy(1) + .. +
    k y(k) d/dy(k-1). It is not a vector field on the bundle (its
    components do not transform tensorially) but it acts as one in a
    fixed chart.

    :param ctx: the context
    :return: the operator as natural-frame components
    """
    blocks = []
    for level in range(ctx.k):
        blocks.append([(level + 1) * c.symbol for c in ctx.level(level + 1)])
    blocks.append([0] * ctx.n)
    return VectorField.from_blocks(ctx.ambient, blocks)


def liouville_field(m: int, ctx: Context) -> VectorField:
    """
    The m-th Liouville field, sum over a = 1..m of
    a y(a) d/dy(k-m+a)

    :param m: 1..k
    :param ctx: the context
    :return: the vertical field
    """
    if m < 1 or m > ctx.k:
        raise IndexOutOfRange(f"Liouville field {m} outside of 1..{ctx.k}")
    blocks = [[0] * ctx.n for _ in range(ctx.k + 1)]
    for a in range(1, m + 1):
        blocks[ctx.k - m + a] = [a * c.symbol for c in ctx.level(a)]
    return VectorField.from_blocks(ctx.ambient, blocks)


def liouville_fields(ctx: Context) -> list[VectorField]:
    return [liouville_field(m, ctx) for m in range(1, ctx.k + 1)]


def tangent_structure_apply(X: VectorField) -> VectorField:
    """
    The k-tangent structure J: shifts every block one level up and
    annihilates d/dy(k)
    """
    ctx = X.ctx
    blocks = [[0] * ctx.n] + [X.block(level) for level in range(ctx.k)]
    return VectorField.from_blocks(ctx, blocks)


def prolong_chart(c: ChartMap) -> list[list[sp.Expr]]:
    """
    Extends a change of base coordinates to the fibre coordinates:
    y~(1) = (dx~/dx) y(1) and m y~(m) = Gamma(y~(m-1)).

    :param c: the chart map
    :return: y~(1)..y~(k) as expressions of the original coordinates
    """
    ctx = c.ctx.ambient
    gamma = gamma_operator(ctx)
    levels = []
    previous = list(c.targets)
    for m in range(1, ctx.k + 1):
        current = [canonical(lie_apply(gamma, e) / m) for e in previous]
        levels.append(current)
        previous = current
    return levels


def chart_jacobian(c: ChartMap) -> list[list[sp.Expr]]:
    """
    :return: J[i][j] = dx~i/dxj
    """
    return [
        [differentiate(target, coord) for coord in c.ctx.level(0)]
        for target in c.targets
    ]


def certify_chart(
    c: ChartMap, count: int = 50, seed: int = 42
) -> CheckReport:
    """
    Certifies the invertibility of the chart Jacobian by sampling its
    box.

    :param c: the chart map
    :param count: number of sampled points
    :param seed: the sampler seed
    :return: the report, residual is the minimum |det J|
    :raises SingularJacobian: if |det J| <= 1e-8 at a sample
    """
    ctx = c.ctx.ambient
    determinant = canonical(sp.Matrix(chart_jacobian(c)).det())
    worst = math.inf
    worst_point = None
    for point in sample_points(c.box, count, seed, ctx):
        value = abs(float(evaluate_all([determinant], point, ctx)[0]))
        if value < worst:
            worst, worst_point = value, point.to_list()
        if value <= JACOBIAN_THRESHOLD:
            logging.error(
                "chart %s has a singular Jacobian at %s",
                c.name,
                point.to_list(),
            )
            raise SingularJacobian(
                f"chart {c.name}: |det J| = {value} at {point.to_list()}"
            )
    return CheckReport(
        name=f"chart_jacobian[{c.name}]",
        passed=True,
        residual=0.0 if worst == math.inf else worst,
        worst_point=worst_point,
    )


def euler_degree(
    f, expected_r: int, samples: "PointSampler", tolerance: float = 1e-9
) -> CheckReport:
    """
    Euler test of r-homogeneity: Gamma(k) f = r f, measured as
    |Gamma(k) f - r f| / (1 + |f|) over the samples.

    :param f: the expression
    :param expected_r: the expected degree
    :param samples: the point sampler
    :param tolerance: pass threshold of the residual
    :return: the report
    """
    ctx = samples.ctx
    scaling = liouville_field(ctx.k, ctx)
    defect = canonical(lie_apply(scaling, f) - expected_r * f)
    report = CheckReport(name=f"euler_degree[{expected_r}]", passed=True)
    if is_zero(defect):
        return report
    for point in samples.points():
        value, defect_value = evaluate_all([f, defect], point, ctx)
        residual = abs(defect_value) / (1 + abs(value))
        if residual > report.residual:
            report.residual = residual
            report.worst_point = point.to_list()
    report.passed = report.residual <= tolerance
    if not report.passed:
        report.details.append(f"{f} is not {expected_r}-homogeneous")
    return report


def homogeneity_degree(f, ctx: Context) -> Optional[int]:
    """
    The integer r with Gamma(k) f = r f, None when f is zero or not
    homogeneous of an integral degree
    """
    if is_zero(f):
        return None
    image = lie_apply(liouville_field(ctx.k, ctx), f)
    ratio = sp.cancel(image / f)
    if not ratio.is_Integer:
        return None
    if not is_zero(image - ratio * f):
        return None
    return int(ratio)


def k_extension(curve: list, ctx: Context) -> list[list[sp.Expr]]:
    """
    Lifts a base curve to the bundle, level m being (1/m!) d^m x/dt^m.
    The parameter t is the first auxiliary coordinate of the context.

    :param curve: x^i(t) expressions
    :param ctx: a context with at least one auxiliary coordinate
    :return: the levels 0..k
    """
    if ctx.aux < 1:
        raise CoordOutOfRange("the curve parameter needs an auxiliary slot")
    parameter = ctx.auxiliary()[0]
    for expression in curve:
        for symbol in sp.sympify(expression).free_symbols:
            if CoordId.from_symbol(symbol) != parameter:
                raise CoordOutOfRange(
                    f"curve depends on {symbol}, not only on {parameter}"
                )
    levels = [[canonical(e) for e in curve]]
    for m in range(1, ctx.k + 1):
        levels.append(
            [
                canonical(sp.diff(e, parameter.symbol, m) / math.factorial(m))
                for e in curve
            ]
        )
    return levels


def _check_box(domain: Box, ctx: Context, margin: float):
    """
    A y(1) interval overlapping the margin is accepted, the sampler
    redraws inadmissible y(1) vectors. Only an interval inside the
    margin, with no admissible point at all, is rejected.
    """
    if len(domain.bounds) != ctx.k + 1:
        raise InvalidDomain(f"the box needs {ctx.k + 1} levels")
    for level, (lo, hi) in enumerate(domain.bounds):
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidDomain(f"level {level} bounds are not finite")
        if lo > hi:
            raise InvalidDomain(f"level {level} has lo > hi")
    lo, hi = domain.level(1)
    if max(abs(lo), abs(hi)) < margin:
        raise InvalidDomain(
            f"y(1) interval [{lo}, {hi}] lies inside the null-section "
            f"margin {margin}"
        )


def sample_points(
    domain: Box,
    count: int,
    seed: int,
    ctx: Context,
    margin: float = DEFAULT_SLIT_MARGIN,
) -> list[PhasePoint]:
    """
    Deterministic uniform points of the box on the slit bundle: y(1)
    vectors are redrawn until max |y(1)i| >= margin.

    :param domain: per-level intervals
    :param count: number of points
    :param seed: generator seed
    :param ctx: the context fixing (n, k)
    :param margin: the null-section margin
    :return: the points
    :raises InvalidDomain: if y(1) cannot leave the margin
    """
    _check_box(domain, ctx, margin)
    generator = np.random.Generator(np.random.PCG64(seed))
    points = []
    for _ in range(count):
        x = generator.uniform(*domain.level(0), size=ctx.n)
        y1 = generator.uniform(*domain.level(1), size=ctx.n)
        rejections = 0
        while np.max(np.abs(y1)) < margin:
            rejections += 1
            if rejections > MAX_REJECTIONS:
                raise InvalidDomain("unable to sample admissible y(1)")
            y1 = generator.uniform(*domain.level(1), size=ctx.n)
        levels = [tuple(float(v) for v in y1)]
        for m in range(2, ctx.k + 1):
            levels.append(
                tuple(
                    float(v)
                    for v in generator.uniform(*domain.level(m), size=ctx.n)
                )
            )
        points.append(
            PhasePoint(x=tuple(float(v) for v in x), y=tuple(levels))
        )
    return points


class PointSampler:
    """
    A seeded source of admissible points, the sample is drawn once and
    reused by every check sharing the sampler
    """

    def __init__(
        self,
        ctx: Context,
        domain: Box,
        count: int = 50,
        seed: int = 42,
        margin: float = DEFAULT_SLIT_MARGIN,
    ):
        self.ctx = ctx.ambient
        self.domain = domain
        self.count = count
        self.seed = seed
        self.margin = margin
        self._points = None

    def points(self) -> list[PhasePoint]:
        if self._points is None:
            self._points = sample_points(
                self.domain, self.count, self.seed, self.ctx, self.margin
            )
        return self._points

    def with_count(self, count: int) -> "PointSampler":
        return PointSampler(
            self.ctx, self.domain, count, self.seed, self.margin
        )

    def __len__(self):
        return self.count


def _tilde_bindings(c: ChartMap, prolonged) -> dict[CoordId, sp.Expr]:
    ctx = c.ctx.ambient
    bindings = dict(zip(ctx.level(0), c.targets))
    for m in range(1, ctx.k + 1):
        bindings.update(zip(ctx.level(m), prolonged[m - 1]))
    return bindings


def pull_back(f, c: ChartMap) -> sp.Expr:
    """
    Composes an expression written in the target chart with the
    prolonged chart map
    """
    ctx = c.ctx.ambient
    return substitute(f, _tilde_bindings(c, prolong_chart(c)), ctx)


def map_point(
    c: ChartMap, point: PhasePoint, prolonged: Optional[list] = None
) -> PhasePoint:
    """
    Image of a point under the prolonged chart map
    """
    ctx = c.ctx.ambient
    if prolonged is None:
        prolonged = prolong_chart(c)
    values = evaluate_all(
        list(c.targets) + [e for level in prolonged for e in level],
        point,
        ctx,
    )
    return PhasePoint.from_vector(values, ctx)


def verify_gamma_transformation(
    c: ChartMap, probe, samples: PointSampler, tolerance: float = 1e-8
) -> CheckReport:
    """
    Checks the change of the Gamma operator under a chart: for a
    probe f~ of the target coordinates,
    Gamma(f~ o phi) = (Gamma~ f~) o phi + Gamma(y~(k)j) (df~/dy~(k)j) o phi

    :param c: the chart map
    :param probe: an expression read in the target chart
    :param samples: points of the source chart
    :param tolerance: relative tolerance
    :return: the report
    """
    ctx = c.ctx.ambient
    gamma = gamma_operator(ctx)
    prolonged = prolong_chart(c)
    lhs = lie_apply(gamma, pull_back(probe, c))
    gamma_probe = lie_apply(gamma, probe)
    top_derivatives = [
        differentiate(probe, coord) for coord in ctx.level(ctx.k)
    ]
    corrections = [lie_apply(gamma, e) for e in prolonged[ctx.k - 1]]
    report = CheckReport(name=f"gamma_law[{c.name}]", passed=True)
    for point in samples.points():
        tilde = map_point(c, point, prolonged)
        left = float(evaluate_all([lhs], point, ctx)[0])
        correction = evaluate_all(corrections, point, ctx)
        tilde_values = evaluate_all(
            [gamma_probe] + top_derivatives, tilde, ctx
        )
        right = tilde_values[0] + float(np.dot(correction, tilde_values[1:]))
        residual = abs(left - right) / (1 + abs(left))
        if residual > report.residual:
            report.residual = residual
            report.worst_point = point.to_list()
    report.passed = report.residual <= tolerance
    return report


def verify_scaling_homogeneity(
    f,
    r: int,
    samples: PointSampler,
    lambdas: tuple[float, ...] = (0.5, 2.0, 3.0),
    tolerance: float = 1e-9,
) -> CheckReport:
    """
    Checks f(x, l y(1), .., l^k y(k)) = l^r f directly, the scaling
    parameter l being an auxiliary base coordinate

    :param f: the expression
    :param r: the expected degree
    :param samples: the point sampler
    :param lambdas: positive scalings to test
    :return: the report
    """
    ctx = samples.ctx.extended(1)
    scale = ctx.auxiliary()[0].symbol
    bindings = {
        coord: scale**m * coord.symbol
        for m in range(1, ctx.k + 1)
        for coord in ctx.level(m)
    }
    defect = canonical(substitute(f, bindings, ctx) - scale**r * f)
    report = CheckReport(name=f"scaling_homogeneity[{r}]", passed=True)
    if is_zero(defect):
        return report
    for point in samples.points():
        for value in lambdas:
            scaled = point.with_aux((value,))
            reference, residual = evaluate_all(
                [scale**r * f, defect], scaled, ctx
            )
            residual = abs(residual) / (1 + abs(reference))
            if residual > report.residual:
                report.residual = residual
                report.worst_point = scaled.to_list()
    report.passed = report.residual <= tolerance
    return report


def liouville_independence(
    ctx: Context, samples: PointSampler
) -> CheckReport:
    """
    Rank test of the k Liouville fields at the samples, residual is
    the largest rank defect
    """
    components = [
        e for field in liouville_fields(ctx) for e in field.components
    ]
    report = CheckReport(name="liouville_independence", passed=True)
    for point in samples.points():
        matrix = evaluate_all(components, point, ctx.ambient).reshape(
            ctx.k, ctx.dimension
        )
        defect = ctx.k - int(np.linalg.matrix_rank(matrix))
        if defect > report.residual:
            report.residual = float(defect)
            report.worst_point = point.to_list()
    report.passed = report.residual == 0
    return report
