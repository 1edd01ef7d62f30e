import logging
from typing import Optional, Union

import numpy as np
import sympy as sp

from kjet.connections import miron_connection
from kjet.models.geometry import (
    DualCoefficients,
    FinslerAxiomViolation,
    KSemispray,
    LagrangianSpec,
    MetricTensor,
    SingularMetric,
)
from kjet.models.phase import CheckReport, PhasePoint
from kjet.models.symbolic import Context, CoordId
from kjet.phase_space import PointSampler, euler_degree, gamma_operator
from kjet.symbolic import (
    canonical,
    differentiate,
    evaluate_all,
    is_zero,
    lie_apply,
)

DETERMINANT_THRESHOLD = 1e-8
PIVOT_THRESHOLD = 1e-10
SYMBOLIC_INVERSE_MAX_N = 3


def metric_tensor(spec: LagrangianSpec) -> MetricTensor:
    """
    g_ij = 1/2 d^2 L / dy(k)i dy(k)j. For n <= 3 the determinant and
    the inverse (adjugate over determinant) are kept symbolically.

    :param spec: the Lagrangian
    :return: the metric tensor
    """
    ctx = spec.ctx
    top = ctx.level(ctx.k)
    g = tuple(
        tuple(
            canonical(differentiate(differentiate(spec.L, a), b) / 2)
            for b in top
        )
        for a in top
    )
    if ctx.n > SYMBOLIC_INVERSE_MAX_N:
        return MetricTensor(ctx, g, None, None)
    matrix = sp.Matrix([list(row) for row in g])
    determinant = canonical(matrix.det(method="berkowitz"))
    g_inv = None
    if not is_zero(determinant):
        adjugate = matrix.adjugate(method="berkowitz")
        g_inv = tuple(
            tuple(
                sp.cancel(adjugate[i, j] / determinant)
                for j in range(ctx.n)
            )
            for i in range(ctx.n)
        )
    return MetricTensor(ctx, g, g_inv, determinant)


def _metric_values(m: MetricTensor, point: PhasePoint) -> np.ndarray:
    n = m.ctx.n
    return evaluate_all(
        [e for row in m.g for e in row], point, m.ctx
    ).reshape(n, n)


def regularity_check(
    m: MetricTensor,
    samples: PointSampler,
    threshold: float = DETERMINANT_THRESHOLD,
) -> CheckReport:
    """
    Regularity of the Lagrangian on the sampled domain: |det g| above
    the threshold at every sample and no change of sign of det g
    between samples (a zero lies in between otherwise).

    :param m: the metric tensor
    :param samples: admissible points
    :param threshold: smallest accepted |det g|
    :return: the report, residual is the minimum |det g|
    """
    report = CheckReport(name="regularity", passed=True)
    smallest = None
    signs = set()
    for point in samples.points():
        if m.determinant is not None:
            value = float(evaluate_all([m.determinant], point, m.ctx)[0])
        else:
            value = float(np.linalg.det(_metric_values(m, point)))
        signs.add(np.sign(value))
        if smallest is None or abs(value) < smallest:
            smallest = abs(value)
            report.worst_point = point.to_list()
    report.residual = 0.0 if smallest is None else smallest
    if smallest is not None and smallest <= threshold:
        report.passed = False
        report.details.append(f"|det g| = {smallest} <= {threshold}")
    if len(signs) > 1:
        report.passed = False
        report.details.append("det g changes sign on the domain")
    return report


def _leading_minors(values: np.ndarray) -> list[float]:
    return [
        float(np.linalg.det(values[:r, :r]))
        for r in range(1, values.shape[0] + 1)
    ]


def signature_check(
    m: MetricTensor,
    samples: PointSampler,
    threshold: float = DETERMINANT_THRESHOLD,
) -> CheckReport:
    """
    Constant signature of g: the sign pattern of the leading principal
    minors must be the same at every sample, without vanishing minors

    :param m: the metric tensor
    :param samples: admissible points
    :return: the report, residual is the smallest |minor|
    """
    report = CheckReport(name="signature", passed=True)
    patterns = set()
    smallest = None
    for point in samples.points():
        minors = _leading_minors(_metric_values(m, point))
        patterns.add(tuple(int(np.sign(v)) for v in minors))
        least = min(abs(v) for v in minors)
        if smallest is None or least < smallest:
            smallest = least
            report.worst_point = point.to_list()
    report.residual = 0.0 if smallest is None else smallest
    if smallest is not None and smallest <= threshold:
        report.passed = False
        report.details.append("a leading principal minor vanishes")
    if len(patterns) > 1:
        report.passed = False
        report.details.append(f"sign patterns {sorted(patterns)}")
    return report


def _euler_lagrange_terms(spec: LagrangianSpec) -> list[sp.Expr]:
    """
    Gamma(dL/dy(k)j) - dL/dy(k-1)j, level 0 being x when k = 1
    """
    ctx = spec.ctx
    gamma = gamma_operator(ctx)
    terms = []
    for j in range(1, ctx.n + 1):
        momentum = differentiate(spec.L, CoordId(ctx.k, j))
        force = differentiate(spec.L, CoordId(ctx.k - 1, j))
        terms.append(canonical(lie_apply(gamma, momentum) - force))
    return terms


class NumericSemispray:
    """
    Canonical k-semispray of a Lagrangian whose inverse metric is not
    kept symbolically: the coefficients are obtained at each point by
    a linear solve of g against the Euler-Lagrange terms
    """

    def __init__(self, spec: LagrangianSpec, metric: MetricTensor):
        self.ctx = spec.ctx
        self.spec = spec
        self.metric = metric
        self.terms = _euler_lagrange_terms(spec)

    def coefficients(self, point: PhasePoint) -> np.ndarray:
        """
        G^i at a point

        :param point: the phase point
        :return: the coefficient values
        :raises SingularMetric: when g cannot be solved at the point
        """
        g = _metric_values(self.metric, point)
        terms = evaluate_all(self.terms, point, self.ctx)
        try:
            _, singular_values, _ = np.linalg.svd(g)
            if singular_values[-1] < PIVOT_THRESHOLD:
                raise np.linalg.LinAlgError("singular metric")
            solution = np.linalg.solve(g, terms)
        except np.linalg.LinAlgError:
            logging.error("singular metric at %s", point.to_list())
            raise SingularMetric(f"g is singular at {point.to_list()}")
        return solution / (2 * (self.ctx.k + 1))


def canonical_semispray(
    spec: LagrangianSpec, force_symbolic: bool = False
) -> Union[KSemispray, NumericSemispray]:
    """
    The k-semispray determined by a regular Lagrangian,
    (k+1)G^i = 1/2 g^ij (Gamma(dL/dy(k)j) - dL/dy(k-1)j).

    :param spec: the Lagrangian
    :param force_symbolic: invert g symbolically whatever n is
    :return: a KSemispray, or a NumericSemispray when n > 3 and the
        symbolic inverse is not forced
    :raises SingularMetric: when det g is the zero expression
    """
    ctx = spec.ctx
    metric = metric_tensor(spec)
    if ctx.n > SYMBOLIC_INVERSE_MAX_N and not force_symbolic:
        logging.info("n = %d, using the numeric inverse metric", ctx.n)
        return NumericSemispray(spec, metric)
    g_inv = metric.g_inv
    if g_inv is None:
        matrix = sp.Matrix([list(row) for row in metric.g])
        determinant = canonical(matrix.det(method="berkowitz"))
        if not is_zero(determinant):
            g_inv = matrix.inv(method="ADJ")
    if g_inv is None:
        logging.error("the metric of %s is degenerate", spec.L)
        raise SingularMetric(f"det g vanishes identically for L = {spec.L}")
    inverse = sp.Matrix(g_inv)
    terms = sp.Matrix(_euler_lagrange_terms(spec))
    G = inverse * terms / (2 * (ctx.k + 1))
    return KSemispray(ctx, tuple(canonical(sp.cancel(e)) for e in G))


def finsler_check(
    spec: LagrangianSpec,
    samples: PointSampler,
    tolerance: float = 1e-9,
) -> CheckReport:
    """
    Finsler axioms for L = F^2 at the samples: F^2 > 0, F^2 is
    2k-homogeneous and g is positive definite (leading principal
    minors > 0).

    :param spec: a Lagrangian flagged as Finsler
    :param samples: admissible points
    :param tolerance: Euler residual threshold
    :return: the merged report
    :raises FinslerAxiomViolation: if the Lagrangian is not flagged Finsler
    """
    if not spec.finsler:
        raise FinslerAxiomViolation(
            "the Lagrangian is not declared as a Finsler function"
        )
    ctx = spec.ctx
    metric = metric_tensor(spec)
    positivity = CheckReport(name="finsler_positivity", passed=True)
    definiteness = CheckReport(name="finsler_definiteness", passed=True)
    for point in samples.points():
        value = float(evaluate_all([spec.L], point, ctx)[0])
        if value <= 0:
            positivity.passed = False
            if -value >= positivity.residual:
                positivity.residual = -value
                positivity.worst_point = point.to_list()
        minors = _leading_minors(_metric_values(metric, point))
        if min(minors) <= 0:
            definiteness.passed = False
            if -min(minors) >= definiteness.residual:
                definiteness.residual = -min(minors)
                definiteness.worst_point = point.to_list()
    if not positivity.passed:
        positivity.details.append("F^2 is not positive")
    if not definiteness.passed:
        definiteness.details.append("g is not positive definite")
    homogeneity = euler_degree(spec.L, 2 * ctx.k, samples, tolerance)
    report = CheckReport(name="finsler_axioms", passed=True)
    for part in (positivity, homogeneity, definiteness):
        report = report.merge(part)
    return report


def cartan_connection(
    spec: LagrangianSpec, samples: Optional[PointSampler] = None
) -> DualCoefficients:
    """
    The Cartan nonlinear connection of a Finsler space of order k: the
    Miron connection of the canonical k-semispray of F^2.

    :param spec: a Finsler Lagrangian F^2
    :param samples: points where the axioms are re-checked, the Lagrangian
        domain with the default seed when omitted
    :return: the dual coefficients
    :raises FinslerAxiomViolation: if the axioms fail
    :raises SingularMetric: if g is degenerate
    """
    if samples is None:
        samples = PointSampler(spec.ctx, spec.domain)
    report = finsler_check(spec, samples)
    if not report.passed:
        logging.error("Finsler axioms fail: %s", report.details)
        raise FinslerAxiomViolation("; ".join(report.details))
    return miron_connection(canonical_semispray(spec, force_symbolic=True))


def cartan_closed_form(spec: LagrangianSpec) -> list[list[sp.Expr]]:
    """
    Level one Cartan coefficient written in closed form,
    1/(2(k+1)) d/dy(k)j { g^im [Gamma(dF^2/dy(k)m) - dF^2/dy(k-1)m] }

    :param spec: a Finsler Lagrangian F^2
    :return: the n x n matrix
    """
    ctx: Context = spec.ctx
    metric = metric_tensor(spec)
    g_inv = metric.g_inv
    if g_inv is None:
        g_inv = sp.Matrix([list(row) for row in metric.g]).inv(method="ADJ")
    inverse = sp.Matrix([list(row) for row in g_inv])
    bracket = inverse * sp.Matrix(_euler_lagrange_terms(spec))
    return [
        [
            canonical(
                sp.cancel(
                    sp.diff(bracket[i], c.symbol) / (2 * (ctx.k + 1))
                )
            )
            for c in ctx.level(ctx.k)
        ]
        for i in range(ctx.n)
    ]
