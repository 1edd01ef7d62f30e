import logging
from typing import Optional

import numpy as np
import sympy as sp

from kjet.models.geometry import KSemispray
from kjet.models.phase import (
    ChartMap,
    CheckReport,
    IndexOutOfRange,
    VectorField,
)
from kjet.phase_space import (
    PointSampler,
    chart_jacobian,
    euler_degree,
    gamma_operator,
    liouville_field,
    prolong_chart,
    tangent_structure_apply,
)
from kjet.symbolic import (
    canonical,
    canonically_equal,
    compile_evaluator,
    evaluate_all,
    lie_apply,
)
from kjet.utils import central_difference

ORACLE_STEP = 1e-3


def assemble_field(s: KSemispray) -> VectorField:
    """
    The vector field of a k-semispray:
    y(1) d/dx + 2y(2) d/dy(1) + .. + k y(k) d/dy(k-1) - (k+1)G d/dy(k)

    :param s: the k-semispray
    :return: the field in the natural frame
    """
    ctx = s.ctx
    blocks = [[c.symbol for c in ctx.level(1)]]
    for level in range(1, ctx.k):
        blocks.append([(level + 1) * c.symbol for c in ctx.level(level + 1)])
    blocks.append([canonical(-(ctx.k + 1) * g) for g in s.G])
    return VectorField.from_blocks(ctx, blocks)


def verify_semispray(X: VectorField) -> CheckReport:
    """
    Checks J X = Gamma(k) block by block as canonical expressions,
    the residual counts the offending components
    """
    ctx = X.ctx
    image = tangent_structure_apply(X)
    expected = liouville_field(ctx.k, ctx)
    report = CheckReport(name="semispray_criterion", passed=True)
    for slot, (actual, wanted) in enumerate(
        zip(image.components, expected.components)
    ):
        if not canonically_equal(actual, wanted):
            coord = ctx.coordinates()[slot]
            report.details.append(
                f"J(X) has {actual} along d/d{coord}, expected {wanted}"
            )
    report.residual = float(len(report.details))
    report.passed = not report.details
    return report


def is_kspray(
    s: KSemispray, samples: PointSampler, tolerance: float = 1e-9
) -> CheckReport:
    """
    Per-component Euler test of (k+1)-homogeneity of the coefficients

    :param s: the k-semispray
    :param samples: admissible points
    :param tolerance: residual threshold
    :return: the merged report
    """
    report = CheckReport(name="is_kspray", passed=True)
    for g in s.G:
        report = report.merge(euler_degree(g, s.ctx.k + 1, samples, tolerance))
    return report


def next_semispray(s: KSemispray) -> KSemispray:
    """
    The k-semispray with coefficients (1/(k+1)) Gamma(k) G
    """
    ctx = s.ctx
    scaling = liouville_field(ctx.k, ctx)
    return KSemispray(
        ctx,
        tuple(canonical(lie_apply(scaling, g) / (ctx.k + 1)) for g in s.G),
    )


def semispray_sequence(s: KSemispray, m: int) -> list[KSemispray]:
    """
    The first m elements of the semispray sequence, s itself first

    :param s: the first k-semispray
    :param m: number of elements, at least 1
    :return: the eagerly computed sequence
    """
    if m < 1:
        raise IndexOutOfRange(f"a sequence needs at least one element, {m}")
    sequence = [s]
    while len(sequence) < m:
        sequence.append(next_semispray(sequence[-1]))
    return sequence


def transform_coefficients(s: KSemispray, c: ChartMap) -> list[sp.Expr]:
    """
    Coefficients of the same k-semispray in the target chart, pulled
    back to the source coordinates:
    (k+1)G~ = (k+1)(dx~/dx) G - Gamma(y~(k))

    :param s: the k-semispray
    :param c: the chart map
    :return: G~^i as expressions of the source coordinates
    """
    ctx = s.ctx
    jacobian = sp.Matrix(chart_jacobian(c))
    top = prolong_chart(c)[ctx.k - 1]
    gamma = gamma_operator(ctx)
    rotated = jacobian * sp.Matrix(s.G)
    return [
        canonical(rotated[i] - lie_apply(gamma, top[i]) / (ctx.k + 1))
        for i in range(ctx.n)
    ]


def verify_coefficient_law(
    s: KSemispray,
    c: ChartMap,
    samples: PointSampler,
    tolerance: float = 1e-8,
) -> CheckReport:
    """
    Numeric oracle for the change of the semispray coefficients: the
    derivatives of the prolonged chart are taken by fourth order
    central differences and compared with transform_coefficients.

    :param s: the k-semispray
    :param c: the chart map
    :param samples: points of the source chart
    :param tolerance: relative tolerance
    :return: the report
    """
    ctx = s.ctx
    n, k = ctx.n, ctx.k
    prolonged = prolong_chart(c)
    targets = compile_evaluator(list(c.targets), ctx)
    top = compile_evaluator(prolonged[k - 1], ctx)
    transformed = transform_coefficients(s, c)
    report = CheckReport(name=f"coefficient_law[{c.name}]", passed=True)
    for point in samples.points():
        vector = point.as_vector()
        values = evaluate_all(list(s.G) + transformed, point, ctx)
        G, expected = values[:n], values[n:]
        jacobian = np.array(
            [
                [
                    central_difference(
                        lambda v, i=i: targets(v)[i],
                        vector,
                        j,
                        ORACLE_STEP,
                        order=4,
                    )
                    for j in range(n)
                ]
                for i in range(n)
            ]
        )
        correction = np.zeros(n)
        for level in range(k):
            for j in range(n):
                slot = level * n + j
                weight = (level + 1) * vector[(level + 1) * n + j]
                for i in range(n):
                    correction[i] += weight * central_difference(
                        lambda v, i=i: top(v)[i],
                        vector,
                        slot,
                        ORACLE_STEP,
                        order=4,
                    )
        oracle = jacobian @ G - correction / (k + 1)
        residual = float(
            np.max(np.abs(oracle - expected)) / (1 + np.max(np.abs(oracle)))
        )
        if residual > report.residual:
            report.residual = residual
            report.worst_point = point.to_list()
    report.passed = report.residual <= tolerance
    logging.debug(
        "coefficient law on chart %s: residual %s", c.name, report.residual
    )
    return report


def sequence_gaps(
    seq: list[KSemispray], samples: PointSampler
) -> list[tuple[bool, float, Optional[list[float]]]]:
    """
    Compares consecutive iterates of a semispray sequence.

    :param seq: the sequence
    :param samples: admissible points
    :return: per consecutive pair, canonical equality, the largest
        numeric gap over the samples and the sample where it occurs
        (None when the pair is canonically equal)
    """
    gaps = []
    for current, following in zip(seq, seq[1:]):
        differences = [
            canonical(b - a) for a, b in zip(current.G, following.G)
        ]
        equal = all(d == 0 for d in differences)
        gap = 0.0
        worst = None
        if not equal:
            for point in samples.points():
                values = evaluate_all(differences, point, current.ctx)
                value = float(np.max(np.abs(values)))
                if worst is None or value > gap:
                    gap = value
                    worst = point.to_list()
        gaps.append((equal, gap, worst))
    return gaps
