import logging

import numpy as np
import sympy as sp

from kjet.models.geometry import (
    AdaptedFrame,
    DualCoefficients,
    ExprMatrix,
    KSemispray,
    PrimalCoefficients,
)
from kjet.models.integrator import OdeSystem
from kjet.models.phase import (
    ChartMap,
    CheckReport,
    PhasePoint,
    SingularJacobian,
    VectorField,
)
from kjet.models.symbolic import Context
from kjet.phase_space import (
    PointSampler,
    chart_jacobian,
    euler_degree,
    homogeneity_degree,
    prolong_chart,
)
from kjet.semispray import assemble_field
from kjet.symbolic import (
    canonical,
    canonically_equal,
    differentiate,
    evaluate_all,
    lie_apply,
)

JACOBIAN_THRESHOLD = 1e-8
CLOSURES = ("extension", "chain")


def _matrix(entries: ExprMatrix) -> sp.Matrix:
    return sp.Matrix([list(row) for row in entries])


def _entries(matrix: sp.Matrix) -> ExprMatrix:
    return tuple(
        tuple(canonical(matrix[i, j]) for j in range(matrix.cols))
        for i in range(matrix.rows)
    )


def miron_connection(s: KSemispray) -> DualCoefficients:
    """
    Dual coefficients determined by a k-semispray through
    M(1) = dG/dy(k) and M(m) = (1/m)(S M(m-1) + M(1) M(m-1)).

    :param s: the k-semispray
    :return: the dual coefficients
    """
    ctx = s.ctx
    field = assemble_field(s)
    first = sp.Matrix(
        [[differentiate(g, c) for c in ctx.level(ctx.k)] for g in s.G]
    )
    levels = [first]
    for m in range(2, ctx.k + 1):
        previous = levels[-1]
        derived = previous.applyfunc(lambda e: lie_apply(field, e))
        levels.append((derived + first * previous) / m)
    return DualCoefficients(ctx, tuple(_entries(m) for m in levels))


def bucataru_connection(s: KSemispray) -> DualCoefficients:
    """
    Dual coefficients M*(m) = dG/dy(k-m+1)

    :param s: the k-semispray
    :return: the dual coefficients
    """
    ctx = s.ctx
    return DualCoefficients(
        ctx,
        tuple(
            tuple(
                tuple(differentiate(g, c) for c in ctx.level(ctx.k - m + 1))
                for g in s.G
            )
            for m in range(1, ctx.k + 1)
        ),
    )


def dual_to_primal(d: DualCoefficients) -> PrimalCoefficients:
    """
    N(1) = M(1), N(m) = M(m) - N(m-1) M(1) - .. - N(1) M(m-1), where
    N(a) M(b) contracts the lower index of N with the upper index of M
    """
    M = [_matrix(level) for level in d.M]
    N = []
    for m in range(1, d.ctx.k + 1):
        current = M[m - 1]
        for a in range(1, m):
            current = current - N[m - a - 1] * M[a - 1]
        N.append(current.applyfunc(canonical))
    return PrimalCoefficients(d.ctx, tuple(_entries(level) for level in N))


def primal_to_dual(p: PrimalCoefficients) -> DualCoefficients:
    """
    M(1) = N(1), M(m) = N(m) + N(m-1) M(1) + .. + N(1) M(m-1)
    """
    N = [_matrix(level) for level in p.N]
    M = []
    for m in range(1, p.ctx.k + 1):
        current = N[m - 1]
        for a in range(1, m):
            current = current + N[m - a - 1] * M[a - 1]
        M.append(current.applyfunc(canonical))
    return DualCoefficients(p.ctx, tuple(_entries(level) for level in M))


def coefficients_equal(a, b) -> bool:
    """
    Canonical equality of every level of two coefficient sets of the
    same kind
    """
    left = a.M if isinstance(a, DualCoefficients) else a.N
    right = b.M if isinstance(b, DualCoefficients) else b.N
    if type(a) is not type(b) or len(left) != len(right):
        return False
    return all(
        canonically_equal(x, y)
        for level_a, level_b in zip(left, right)
        for row_a, row_b in zip(level_a, level_b)
        for x, y in zip(row_a, row_b)
    )


def adapted_frame(d: DualCoefficients) -> AdaptedFrame:
    """
    Adapted basis built from the primal coefficients,
    d/dy(m)i - N(1)ji d/dy(m+1)j - .. - N(k-m)ji d/dy(k)j (level 0 being
    d/dx), and the adapted cobasis built from the dual coefficients,
    dy(m)i + M(1)ij dy(m-1)j + .. + M(m)ij dx^j.

    :param d: dual coefficients
    :return: the frame and the coframe over the natural ones
    """
    ctx = d.ctx
    n, k = ctx.n, ctx.k
    N = dual_to_primal(d).N
    basis = []
    for level in range(k + 1):
        for i in range(n):
            components = [sp.S.Zero] * ctx.dimension
            components[level * n + i] = sp.S.One
            for b in range(1, k - level + 1):
                for j in range(n):
                    components[(level + b) * n + j] = canonical(
                        -N[b - 1][j][i]
                    )
            basis.append(VectorField(ctx, tuple(components)))
    cobasis = []
    for level in range(k + 1):
        for i in range(n):
            row = [sp.S.Zero] * ctx.dimension
            row[level * n + i] = sp.S.One
            for c in range(1, level + 1):
                for j in range(n):
                    row[(level - c) * n + j] = canonical(d.M[c - 1][i][j])
            cobasis.append(tuple(row))
    return AdaptedFrame(ctx, tuple(basis), tuple(cobasis))


def pairing_matrix(frame: AdaptedFrame, p: PhasePoint) -> np.ndarray:
    """
    Numeric matrix <cobasis a, basis b> at a point
    """
    ctx = frame.ctx
    size = ctx.dimension
    basis = evaluate_all(
        [e for field in frame.basis for e in field.components], p, ctx
    ).reshape(size, size)
    cobasis = evaluate_all(
        [e for row in frame.cobasis for e in row], p, ctx
    ).reshape(size, size)
    return cobasis @ basis.T


def verify_frame_duality(
    frame: AdaptedFrame, samples: PointSampler, tolerance: float = 1e-10
) -> CheckReport:
    report = CheckReport(name="frame_duality", passed=True)
    identity = np.eye(frame.ctx.dimension)
    for point in samples.points():
        residual = float(
            np.max(np.abs(pairing_matrix(frame, point) - identity))
        )
        if residual > report.residual:
            report.residual = residual
            report.worst_point = point.to_list()
    report.passed = report.residual <= tolerance
    return report


def _numeric_dual_to_primal(M: list[np.ndarray]) -> list[np.ndarray]:
    N = []
    for m in range(1, len(M) + 1):
        current = M[m - 1].copy()
        for a in range(1, m):
            current -= N[m - a - 1] @ M[a - 1]
        N.append(current)
    return N


def verify_coefficient_transformation(
    d: DualCoefficients,
    c: ChartMap,
    samples: PointSampler,
    tolerance: float = 1e-8,
) -> CheckReport:
    """
    Solves the change laws of the dual coefficients,
    J M(a) = M~(a) J + M~(a-1) Y(1) + .. + M~(1) Y(a-1) + Y(a),
    and of the primal ones,
    N~(a) J = J N(a) + Y(1) N(a-1) + .. + Y(a-1) N(1) - Y(a),
    (J = dx~/dx, Y(a) = dy~(a)/dx) at every sample and reports the
    worst of two residuals: the pushed forward d/dx - N d/dy must be
    annihilated by the new cobasis built from M~, and N~ must be the
    primal form of M~.

    :param d: dual coefficients in the source chart
    :param c: the chart map
    :param samples: points of the source chart
    :param tolerance: residual threshold
    :return: the report
    :raises SingularJacobian: when |det J| < 1e-8 at a sample
    """
    ctx = d.ctx
    n, k = ctx.n, ctx.k
    prolonged = prolong_chart(c)
    jacobian = chart_jacobian(c)
    first_derivatives = [
        [[differentiate(e, x) for x in ctx.level(0)] for e in level]
        for level in prolonged
    ]
    fibre_derivatives = [
        [
            [[differentiate(e, y) for y in ctx.level(b)] for e in level]
            for b in range(1, k + 1)
        ]
        for level in prolonged
    ]
    primal = dual_to_primal(d)
    expressions = (
        [e for row in jacobian for e in row]
        + [e for level in first_derivatives for row in level for e in row]
        + [
            e
            for level in fibre_derivatives
            for block in level
            for row in block
            for e in row
        ]
        + [e for level in d.M for row in level for e in row]
        + [e for level in primal.N for row in level for e in row]
    )
    report = CheckReport(
        name=f"coefficient_transformation[{c.name}]", passed=True
    )
    for point in samples.points():
        values = iter(evaluate_all(expressions, point, ctx))

        def take(count: int) -> np.ndarray:
            return np.array([next(values) for _ in range(count)])

        J = take(n * n).reshape(n, n)
        Y = [take(n * n).reshape(n, n) for _ in range(k)]
        P = [[take(n * n).reshape(n, n) for _ in range(k)] for _ in range(k)]
        M = [take(n * n).reshape(n, n) for _ in range(k)]
        N = [take(n * n).reshape(n, n) for _ in range(k)]
        if abs(np.linalg.det(J)) < JACOBIAN_THRESHOLD:
            logging.error("singular chart Jacobian at %s", point.to_list())
            raise SingularJacobian(
                f"chart {c.name} is singular at {point.to_list()}"
            )
        J_inv = np.linalg.inv(J)

        M_tilde = []
        for a in range(1, k + 1):
            rhs = J @ M[a - 1] - Y[a - 1]
            for b in range(1, a):
                rhs = rhs - M_tilde[a - b - 1] @ Y[b - 1]
            M_tilde.append(rhs @ J_inv)

        N_tilde = []
        for a in range(1, k + 1):
            rhs = J @ N[a - 1] - Y[a - 1]
            for b in range(1, a):
                rhs = rhs + Y[a - b - 1] @ N[b - 1]
            N_tilde.append(rhs @ J_inv)

        # components of the pushed forward d/dx - N d/dy along d/dy~(a)
        D = [J]
        for a in range(1, k + 1):
            component = Y[a - 1].copy()
            for b in range(1, a + 1):
                component -= P[a - 1][b - 1] @ N[b - 1]
            D.append(component)
        horizontality = 0.0
        for a in range(1, k + 1):
            total = D[a].copy()
            for c_level in range(1, a + 1):
                total += M_tilde[c_level - 1] @ D[a - c_level]
            horizontality = max(horizontality, float(np.max(np.abs(total))))

        consistency = max(
            float(np.max(np.abs(x - y)))
            for x, y in zip(N_tilde, _numeric_dual_to_primal(M_tilde))
        )
        scale = 1 + max(float(np.max(np.abs(m))) for m in M_tilde)
        residual = max(horizontality, consistency) / scale
        if residual > report.residual:
            report.residual = residual
            report.worst_point = point.to_list()
    report.passed = report.residual <= tolerance
    return report


def autoparallel_rhs(
    d: DualCoefficients, closure: str = "extension"
) -> OdeSystem:
    """
    First-order system of the autoparallel curves of a nonlinear
    connection, obtained from the horizontality rows
    dy(m)/dt + M(1) dy(m-1)/dt + .. + M(m) dx/dt = 0.

    With the `extension` closure the state follows the k-extension of
    its base curve, dx/dt = y(1), dy(m)/dt = (m+1) y(m+1) for m < k,
    and only the top row is solved for dy(k)/dt. With the `chain`
    closure every row is solved, top down, for its dy(m)/dt.

    :param d: dual coefficients
    :param closure: `extension` or `chain`
    :return: the system on the (k+1)n natural coordinates
    """
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure}, use one of {CLOSURES}")
    ctx = d.ctx
    M = [_matrix(level) for level in d.M]
    velocity = sp.Matrix([c.symbol for c in ctx.level(1)])
    derivatives = [velocity]
    if closure == "extension":
        for m in range(1, ctx.k):
            derivatives.append(
                sp.Matrix([(m + 1) * c.symbol for c in ctx.level(m + 1)])
            )
        top = sp.zeros(ctx.n, 1)
        for a in range(1, ctx.k + 1):
            top -= M[a - 1] * derivatives[ctx.k - a]
        derivatives.append(top)
    else:
        for m in range(1, ctx.k + 1):
            row = sp.zeros(ctx.n, 1)
            for a in range(1, m + 1):
                row -= M[a - 1] * derivatives[m - a]
            derivatives.append(row)
    rhs = tuple(canonical(e) for block in derivatives for e in block)
    return OdeSystem(ctx, rhs, name=f"autoparallel[{closure}]")


def connection_homogeneity(
    d: DualCoefficients,
    samples: PointSampler,
    include_primal: bool = True,
    tolerance: float = 1e-9,
) -> CheckReport:
    """
    Euler test of M(m) (and N(m)) being homogeneous of degree m

    :param d: dual coefficients
    :param samples: admissible points
    :param include_primal: test the primal coefficients as well
    :param tolerance: residual threshold
    :return: the merged report
    """
    report = CheckReport(name="connection_homogeneity", passed=True)
    families = [d.M]
    if include_primal:
        families.append(dual_to_primal(d).N)
    for family in families:
        for m, level in enumerate(family, start=1):
            for row in level:
                for entry in row:
                    report = report.merge(
                        euler_degree(entry, m, samples, tolerance)
                    )
    return report


def coefficient_degrees(d, ctx: Context) -> list[list[list]]:
    """
    Integral Euler degree of every entry, None where there is none
    """
    levels = d.M if isinstance(d, DualCoefficients) else d.N
    return [
        [[homogeneity_degree(e, ctx) for e in row] for row in level]
        for level in levels
    ]

