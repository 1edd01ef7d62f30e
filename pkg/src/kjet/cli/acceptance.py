import logging
from typing import Callable, Optional

import numpy as np
import sympy as sp

from kjet.cli.problem_file import Problem
from kjet.connections import (
    adapted_frame,
    autoparallel_rhs,
    bucataru_connection,
    coefficients_equal,
    connection_homogeneity,
    dual_to_primal,
    miron_connection,
    primal_to_dual,
    verify_coefficient_transformation,
    verify_frame_duality,
)
from kjet.integrator import (
    integrate_batch,
    kpath_system,
    residual_along,
    trajectory_gap,
)
from kjet.lagrange_finsler import (
    cartan_closed_form,
    cartan_connection,
    finsler_check,
    metric_tensor,
    regularity_check,
    signature_check,
)
from kjet.models.geometry import (
    DualCoefficients,
    KSemispray,
    MetricTensor,
)
from kjet.models.integrator import IntegratorConfig
from kjet.models.phase import ChartMap, CheckReport
from kjet.models.report import CheckLine
from kjet.models.symbolic import KjetException
from kjet.phase_space import (
    PointSampler,
    certify_chart,
    liouville_independence,
    verify_gamma_transformation,
    verify_scaling_homogeneity,
)
from kjet.semispray import (
    assemble_field,
    is_kspray,
    next_semispray,
    semispray_sequence,
    sequence_gaps,
    verify_coefficient_law,
    verify_semispray,
)
from kjet.symbolic import canonical, evaluate_all, is_zero
from kjet.utils import SafeLogger

KPATH_STEP = 1e-3
KPATH_INITS = 10

Check = Callable[[], CheckReport]


def gamma_probe(problem: Problem) -> sp.Expr:
    """
    Probe of the Gamma law mixing every level the operator touches,
    sum (x(i) + y(1,i)) y(k,i) + y(k,i)^2
    """
    ctx = problem.ctx
    probe = sp.S.Zero
    for i in range(1, ctx.n + 1):
        x, y1, yk = (
            c.symbol
            for c in (
                ctx.level(0)[i - 1],
                ctx.level(1)[i - 1],
                ctx.level(ctx.k)[i - 1],
            )
        )
        probe += (x + y1) * yk + yk**2
    return canonical(probe)


def coefficient_gap(
    a: DualCoefficients, b: DualCoefficients, samples: PointSampler
) -> CheckReport:
    """
    Canonical equality of two dual coefficient sets, with the largest
    numeric entry gap over the samples when they differ
    """
    report = CheckReport(name="coefficient_gap", passed=True)
    if coefficients_equal(a, b):
        return report
    differences = [
        canonical(x - y)
        for level_a, level_b in zip(a.M, b.M)
        for row_a, row_b in zip(level_a, level_b)
        for x, y in zip(row_a, row_b)
    ]
    for point in samples.points():
        gap = float(
            np.max(np.abs(evaluate_all(differences, point, a.ctx)))
        )
        if gap >= report.residual:
            report.residual = gap
            report.worst_point = point.to_list()
    report.passed = False
    return report


class AcceptanceSuite:
    """
    Runs every verification applicable to a problem. Checks are run in
    a fixed order and an exception raised by one of them is reported
    as an `error` line without stopping the others.
    """

    def __init__(self, problem: Problem, logger: Optional[SafeLogger] = None):
        self.problem = problem
        self.tolerances = problem.problem.tolerances
        self.logger = logger if logger is not None else SafeLogger()
        self.samples = problem.sampler()
        self.semispray = problem.semispray()
        self._spray: Optional[bool] = None
        self._miron: Optional[DualCoefficients] = None
        self._bucataru: Optional[DualCoefficients] = None
        self._metric: Optional[MetricTensor] = None

    @property
    def miron(self) -> DualCoefficients:
        if self._miron is None:
            self._miron = miron_connection(self.semispray)
        return self._miron

    @property
    def bucataru(self) -> DualCoefficients:
        if self._bucataru is None:
            self._bucataru = bucataru_connection(self.semispray)
        return self._bucataru

    @property
    def metric(self) -> MetricTensor:
        if self._metric is None:
            self._metric = metric_tensor(self.problem.lagrangian())
        return self._metric

    def connection(self, method: str) -> DualCoefficients:
        return self.miron if method == "miron" else self.bucataru

    def is_spray(self) -> bool:
        if self._spray is None:
            try:
                self._spray = is_kspray(
                    self.semispray, self.samples, self.tolerances.euler
                ).passed
            except KjetException as e:
                logging.warning("homogeneity of the input unknown: %s", e)
                self._spray = False
        return self._spray

    def checks(self) -> list[tuple[str, Check]]:
        """
        The named checks that apply to the problem, in report order
        """
        tolerances = self.tolerances
        s = self.semispray
        checks: list[tuple[str, Check]] = [
            (
                "semispray_criterion",
                lambda: verify_semispray(assemble_field(s)),
            ),
            (
                "liouville_independence",
                lambda: liouville_independence(s.ctx, self.samples),
            ),
            (
                "is_kspray",
                lambda: is_kspray(s, self.samples, tolerances.euler),
            ),
        ]
        for chart in self.problem.charts():
            checks.extend(self.chart_checks(chart))
        for method in ("miron", "bucataru"):
            checks.append(
                (
                    f"frame_duality[{method}]",
                    lambda method=method: verify_frame_duality(
                        adapted_frame(self.connection(method)),
                        self.samples,
                        tolerances.pairing,
                    ),
                )
            )
        checks.extend(
            [
                ("dual_primal_roundtrip", self.dual_primal_roundtrip),
                ("kpath_autoparallel_residual", self.autoparallel_residual),
                ("kpath_coincidence", self.kpath_coincidence),
                ("sequence_constancy", self.sequence_constancy),
                (
                    "miron_constancy",
                    lambda: self.connection_constancy(miron_connection),
                ),
                (
                    "bucataru_constancy",
                    lambda: self.connection_constancy(bucataru_connection),
                ),
            ]
        )
        if self.is_spray():
            checks.extend(self.spray_checks())
        if self.problem.is_lagrangian:
            checks.extend(self.lagrangian_checks())
            if self.problem.problem.finsler:
                checks.extend(self.finsler_checks())
        return checks

    def chart_checks(self, chart: ChartMap) -> list[tuple[str, Check]]:
        tolerances = self.tolerances
        seed = self.problem.seed
        samples = self.problem.chart_sampler(chart)

        def transformation(method: str) -> CheckReport:
            return verify_coefficient_transformation(
                self.connection(method),
                chart,
                samples,
                tolerances.covariance,
            )

        return [
            (
                f"chart_jacobian[{chart.name}]",
                lambda: certify_chart(chart, len(samples), seed),
            ),
            (
                f"coefficient_law[{chart.name}]",
                lambda: verify_coefficient_law(
                    self.semispray, chart, samples, tolerances.covariance
                ),
            ),
            (
                f"gamma_law[{chart.name}]",
                lambda: verify_gamma_transformation(
                    chart,
                    gamma_probe(self.problem),
                    samples,
                    tolerances.covariance,
                ),
            ),
            (
                f"miron_transformation[{chart.name}]",
                lambda: transformation("miron"),
            ),
            (
                f"bucataru_transformation[{chart.name}]",
                lambda: transformation("bucataru"),
            ),
        ]

    def spray_checks(self) -> list[tuple[str, Check]]:
        tolerances = self.tolerances
        k = self.semispray.ctx.k
        return [
            (
                "semispray_scaling",
                lambda: self.merged(
                    verify_scaling_homogeneity(
                        g, k + 1, self.samples, tolerance=tolerances.euler
                    )
                    for g in self.semispray.G
                ),
            ),
            (
                "miron_homogeneity",
                lambda: connection_homogeneity(
                    self.miron, self.samples, True, tolerances.euler
                ),
            ),
            (
                "bucataru_homogeneity",
                lambda: connection_homogeneity(
                    self.bucataru, self.samples, True, tolerances.euler
                ),
            ),
        ]

    def lagrangian_checks(self) -> list[tuple[str, Check]]:
        tolerances = self.tolerances
        return [
            ("metric_symmetry", lambda: self.metric_symmetry(self.metric)),
            (
                "regularity",
                lambda: regularity_check(
                    self.metric, self.samples, tolerances.determinant
                ),
            ),
            (
                "signature",
                lambda: signature_check(
                    self.metric, self.samples, tolerances.determinant
                ),
            ),
        ]

    def finsler_checks(self) -> list[tuple[str, Check]]:
        tolerances = self.tolerances
        spec = self.problem.lagrangian()
        return [
            (
                "finsler_axioms",
                lambda: finsler_check(spec, self.samples, tolerances.euler),
            ),
            ("cartan_closed_form", lambda: self.cartan_closed_form(spec)),
            (
                "cartan_homogeneity",
                lambda: connection_homogeneity(
                    cartan_connection(spec, self.samples),
                    self.samples,
                    True,
                    tolerances.euler,
                ),
            ),
        ]

    @staticmethod
    def merged(reports) -> CheckReport:
        result = None
        for report in reports:
            result = report if result is None else result.merge(report)
        return result

    def dual_primal_roundtrip(self) -> CheckReport:
        report = CheckReport(name="dual_primal_roundtrip", passed=True)
        for method in ("miron", "bucataru"):
            dual = self.connection(method)
            primal = dual_to_primal(dual)
            if not coefficients_equal(primal_to_dual(primal), dual):
                report.details.append(f"{method} dual coefficients")
            if not coefficients_equal(
                dual_to_primal(primal_to_dual(primal)), primal
            ):
                report.details.append(f"{method} primal coefficients")
        report.residual = float(len(report.details))
        report.passed = not report.details
        return report

    def _kpath_inits(self):
        return self.problem.sampler(KPATH_INITS).points()

    def _config(self) -> IntegratorConfig:
        return IntegratorConfig(
            step=KPATH_STEP, margin=self.problem.problem.margin
        )

    def autoparallel_residual(self) -> CheckReport:
        """
        Autoparallels of the Bucataru connection measured against the
        k-path system of the next k-semispray
        """
        cfg = self._config()
        horizon = self.problem.problem.horizon
        autoparallel = autoparallel_rhs(self.bucataru)
        target = kpath_system(next_semispray(self.semispray))
        inits = self._kpath_inits()
        trajectories = integrate_batch(
            autoparallel, inits, 0.0, horizon, cfg, logger=self.logger
        )
        report = CheckReport(name="kpath_autoparallel_residual", passed=True)
        for init, trajectory in zip(inits, trajectories):
            residual = residual_along(trajectory, target)
            if residual >= report.residual:
                report.residual = residual
                report.worst_point = init.to_list()
        report.passed = report.residual <= self.tolerances.kpath_residual
        return report

    def kpath_coincidence(self) -> CheckReport:
        """
        k-paths of a k-semispray and of the next one coincide for a
        k-spray and separate otherwise: the gap is compared with the
        coincidence tolerance for sprays and with the divergence
        threshold for the others
        """
        cfg = self._config()
        horizon = self.problem.problem.horizon
        inits = self._kpath_inits()
        first = integrate_batch(
            kpath_system(self.semispray), inits, 0.0, horizon, cfg
        )
        second = integrate_batch(
            kpath_system(next_semispray(self.semispray)),
            inits,
            0.0,
            horizon,
            cfg,
        )
        report = CheckReport(name="kpath_coincidence", passed=True)
        for init, a, b in zip(inits, first, second):
            gap = trajectory_gap(a, b)
            if gap >= report.residual:
                report.residual = gap
                report.worst_point = init.to_list()
        if self.is_spray():
            report.passed = report.residual <= self.tolerances.coincidence
        else:
            report.passed = report.residual >= self.tolerances.divergence
            report.details.append("not a k-spray, k-paths must separate")
        return report

    def _sequence(self) -> list[KSemispray]:
        return semispray_sequence(
            self.semispray, self.problem.problem.iterations
        )

    def sequence_constancy(self) -> CheckReport:
        report = CheckReport(name="sequence_constancy", passed=True)
        for index, (equal, gap, point) in enumerate(
            sequence_gaps(self._sequence(), self.samples), start=1
        ):
            if not equal:
                report.details.append(f"S{index} != S{index + 1}")
            if point is not None and gap >= report.residual:
                report.residual = gap
                report.worst_point = point
        report.passed = report.residual <= self.tolerances.sequence
        return report

    def connection_constancy(
        self, construction: Callable[[KSemispray], DualCoefficients]
    ) -> CheckReport:
        report = CheckReport(name="connection_constancy", passed=True)
        coefficients = [construction(s) for s in self._sequence()]
        for a, b in zip(coefficients, coefficients[1:]):
            report = report.merge(coefficient_gap(a, b, self.samples))
        report.passed = report.residual <= self.tolerances.sequence
        return report

    @staticmethod
    def metric_symmetry(metric: MetricTensor) -> CheckReport:
        report = CheckReport(name="metric_symmetry", passed=True)
        n = metric.ctx.n
        for i in range(n):
            for j in range(i + 1, n):
                if not is_zero(metric.g[i][j] - metric.g[j][i]):
                    report.details.append(f"g[{i + 1}][{j + 1}]")
        report.residual = float(len(report.details))
        report.passed = not report.details
        return report

    def cartan_closed_form(self, spec) -> CheckReport:
        """
        The first level of the Cartan connection against its closed
        form, numerically when the difference does not cancel
        """
        report = CheckReport(name="cartan_closed_form", passed=True)
        first = cartan_connection(spec, self.samples).level(1)
        closed = cartan_closed_form(spec)
        differences = [
            canonical(sp.cancel(first[i][j] - closed[i][j]))
            for i in range(spec.ctx.n)
            for j in range(spec.ctx.n)
        ]
        if all(is_zero(d) for d in differences):
            return report
        for point in self.samples.points():
            values = np.abs(evaluate_all(differences, point, spec.ctx))
            if float(np.max(values)) >= report.residual:
                report.residual = float(np.max(values))
                report.worst_point = point.to_list()
        report.passed = report.residual <= self.tolerances.coincidence
        return report

    def expected(self, name: str) -> Optional[str]:
        base = name.split("[", 1)[0]
        annotations = self.problem.problem.expect_fail
        if name in annotations or base in annotations:
            return "fail"
        return None

    def run(self) -> list[CheckLine]:
        """
        Runs the suite

        :return: one line per check, in the order of `checks`
        """
        lines = []
        for name, check in self.checks():
            try:
                report = check()
            except KjetException as e:
                self.logger.error(f"check {name} failed with an error: {e}")
                lines.append(
                    CheckLine(name, "error", None, None, self.expected(name))
                )
                continue
            logging.info(
                "%s: %s, residual %s", name, report.status, report.residual
            )
            if report.details:
                self.logger.debug(f"{name}: {'; '.join(report.details)}")
            lines.append(
                CheckLine(
                    name,
                    report.status,
                    report.residual,
                    report.worst_point,
                    self.expected(name),
                )
            )
        return lines
