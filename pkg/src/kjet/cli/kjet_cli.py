import argparse
import logging
import sys
import time
from typing import Callable, Optional

from kjet.cli.acceptance import AcceptanceSuite
from kjet.cli.problem_file import Problem
from kjet.connections import (
    autoparallel_rhs,
    bucataru_connection,
    coefficient_degrees,
    dual_to_primal,
    miron_connection,
)
from kjet.integrator import (
    integrate,
    kpath_system,
    residual_along,
    write_trajectory_csv,
)
from kjet.lagrange_finsler import cartan_connection
from kjet.models.geometry import (
    DualCoefficients,
    FinslerAxiomViolation,
    SingularMetric,
)
from kjet.models.integrator import IntegratorConfig, OdeSystem
from kjet.models.phase import PhasePoint
from kjet.models.report import CheckLine, Report, UsageError
from kjet.models.symbolic import KjetException
from kjet.phase_space import homogeneity_degree
from kjet.semispray import (
    is_kspray,
    next_semispray,
    semispray_sequence,
    sequence_gaps,
)
from kjet.symbolic import format_expr
from kjet.utils import SafeLogger, log_exception

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SINGULAR_METRIC = 2
EXIT_FINSLER = 3
EXIT_SLIT = 4

METHODS = ("miron", "bucataru", "cartan")
KINDS = ("kpath", "autoparallel")


class KjetArgumentParser(argparse.ArgumentParser):
    """
    Argument parser raising UsageError instead of exiting, so that
    every failure goes through the same exit code mapping
    """

    def error(self, message: str):
        raise UsageError(message)


def check_line(report, expected: Optional[str] = None) -> CheckLine:
    return CheckLine(
        report.name,
        report.status,
        report.residual,
        report.worst_point,
        expected,
    )


def _degree(expression, problem: Problem) -> str:
    degree = homogeneity_degree(expression, problem.ctx)
    return "" if degree is None else f"  (degree {degree})"


def semispray_command(
    args: argparse.Namespace, problem: Problem, logger: SafeLogger
) -> tuple[Report, int]:
    s = problem.semispray()
    report = Report("semispray", problem.digest)
    for i, g in enumerate(s.G, start=1):
        report.results.append(
            f"G{i} = {format_expr(g)}{_degree(g, problem)}"
        )
    report.checks.append(
        check_line(
            is_kspray(
                s, problem.sampler(), problem.problem.tolerances.euler
            )
        )
    )
    return report, EXIT_OK


def connection_for(problem: Problem, method: str) -> DualCoefficients:
    """
    :raises FinslerAxiomViolation: for cartan on an input that is not
        a Finsler function
    """
    if method == "cartan":
        if not problem.is_lagrangian or not problem.problem.finsler:
            raise FinslerAxiomViolation(
                "the cartan connection needs a Finsler problem file"
            )
        return cartan_connection(problem.lagrangian(), problem.sampler())
    if method == "bucataru":
        return bucataru_connection(problem.semispray())
    return miron_connection(problem.semispray())


def _coefficient_lines(label: str, levels, degrees) -> list[str]:
    lines = []
    for m, level in enumerate(levels, start=1):
        for i, row in enumerate(level, start=1):
            for j, entry in enumerate(row, start=1):
                degree = degrees[m - 1][i - 1][j - 1]
                suffix = "" if degree is None else f"  (degree {degree})"
                lines.append(
                    f"{label}({m})[{i}][{j}] = {format_expr(entry)}{suffix}"
                )
    return lines


def connection_command(
    args: argparse.Namespace, problem: Problem, logger: SafeLogger
) -> tuple[Report, int]:
    dual = connection_for(problem, args.method)
    primal = dual_to_primal(dual)
    report = Report(f"connection --method {args.method}", problem.digest)
    report.results.extend(
        _coefficient_lines(
            "M", dual.M, coefficient_degrees(dual, problem.ctx)
        )
    )
    report.results.extend(
        _coefficient_lines(
            "N", primal.N, coefficient_degrees(primal, problem.ctx)
        )
    )
    return report, EXIT_OK


def sequence_command(
    args: argparse.Namespace, problem: Problem, logger: SafeLogger
) -> tuple[Report, int]:
    if args.iterations < 1:
        raise UsageError(
            f"--iterations must be at least 1, {args.iterations} given"
        )
    sequence = semispray_sequence(problem.semispray(), args.iterations)
    samples = problem.sampler()
    tolerance = problem.problem.tolerances.sequence
    report = Report(
        f"sequence --iterations {args.iterations}", problem.digest
    )
    for index, s in enumerate(sequence, start=1):
        coefficients = ", ".join(
            f"G{i} = {format_expr(g)}" for i, g in enumerate(s.G, start=1)
        )
        report.results.append(f"S{index}: {coefficients}")
    for index, (equal, gap, point) in enumerate(
        sequence_gaps(sequence, samples), start=1
    ):
        report.results.append(
            f"S{index} == S{index + 1}: {str(equal).lower()}, gap {gap:.6g}"
        )
        report.checks.append(
            CheckLine(
                f"sequence_gap[{index}]",
                "pass" if equal or gap <= tolerance else "fail",
                gap,
                point,
            )
        )
    return report, EXIT_OK


def parse_init(text: str, problem: Problem) -> PhasePoint:
    """
    Reads an initial state `x;y(1);..;y(k)`, each level being a comma
    separated list of n numbers

    :raises UsageError: on a malformed state
    """
    ctx = problem.ctx
    levels = [level.strip() for level in text.split(";")]
    if len(levels) != ctx.k + 1:
        raise UsageError(
            f"--init needs {ctx.k + 1} ';' separated levels, "
            f"{len(levels)} given"
        )
    values = []
    for level in levels:
        items = [item.strip() for item in level.split(",")]
        if len(items) != ctx.n:
            raise UsageError(
                f"--init levels need {ctx.n} values, '{level}' given"
            )
        try:
            values.extend(float(item) for item in items)
        except ValueError:
            raise UsageError(f"--init: '{level}' is not numeric")
    return PhasePoint.from_vector(values, ctx)


def integration_system(
    args: argparse.Namespace, problem: Problem
) -> OdeSystem:
    if args.kind == "kpath":
        return kpath_system(problem.semispray())
    return autoparallel_rhs(
        connection_for(problem, args.method), args.closure
    )


def integrate_command(
    args: argparse.Namespace, problem: Problem, logger: SafeLogger
) -> tuple[Report, int]:
    init = parse_init(args.init, problem)
    cfg = IntegratorConfig(step=args.step, margin=problem.problem.margin)
    system = integration_system(args, problem)
    trajectory = integrate(system, init, args.t0, args.t1, cfg)
    if args.out:
        write_trajectory_csv(trajectory, args.out)
        logger.info(f"trajectory written to {args.out}")
    tolerance = problem.problem.tolerances.kpath_residual
    command = f"integrate --kind {args.kind}"
    if args.kind == "autoparallel":
        command += f" --method {args.method} --closure {args.closure}"
    report = Report(command, problem.digest)
    final = trajectory.final
    report.results.append(
        f"final t = {trajectory.times[-1]:.17g}: "
        + ", ".join(f"{v:.17g}" for v in final.to_list())
    )
    measured = [("self_residual", system)]
    if args.kind == "autoparallel":
        following = next_semispray(problem.semispray())
        measured.append(("kpath_residual", kpath_system(following)))
    for name, target in measured:
        residual = residual_along(trajectory, target)
        report.checks.append(
            CheckLine(
                name,
                "pass" if residual <= tolerance else "fail",
                residual,
                final.to_list(),
            )
        )
    if trajectory.left_slit_domain:
        report.results.append(
            f"left the slit domain at t = {trajectory.exit_time:.17g}"
        )
        return report, EXIT_SLIT
    return report, EXIT_OK


def verify_command(
    args: argparse.Namespace, problem: Problem, logger: SafeLogger
) -> tuple[Report, int]:
    report = Report("verify", problem.digest)
    report.checks = AcceptanceSuite(problem, logger).run()
    return report, EXIT_USAGE if report.has_errors() else EXIT_OK


COMMANDS: dict[str, Callable] = {
    "semispray": semispray_command,
    "connection": connection_command,
    "sequence": sequence_command,
    "integrate": integrate_command,
    "verify": verify_command,
}


def build_parser() -> KjetArgumentParser:
    common = KjetArgumentParser(add_help=False)
    common.add_argument("problem", help="problem file")
    common.add_argument(
        "--report", choices=("json", "table"), default="table"
    )
    common.add_argument("--log-file", default=None)
    common.add_argument("--verbose", action="store_true")

    parser = KjetArgumentParser(
        prog="kjet",
        description="geometry of the k-tangent bundle in local coordinates",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "semispray", parents=[common], help="canonical k-semispray"
    )
    connection = commands.add_parser(
        "connection", parents=[common], help="nonlinear connections"
    )
    connection.add_argument("--method", choices=METHODS, default="miron")
    sequence = commands.add_parser(
        "sequence", parents=[common], help="the semispray sequence"
    )
    sequence.add_argument("--iterations", type=int, default=3)
    integration = commands.add_parser(
        "integrate", parents=[common], help="k-paths and autoparallels"
    )
    integration.add_argument("--kind", choices=KINDS, default="kpath")
    integration.add_argument("--method", choices=METHODS, default="miron")
    integration.add_argument(
        "--closure", choices=("extension", "chain"), default="extension"
    )
    integration.add_argument("--init", required=True)
    integration.add_argument("--t0", type=float, default=0.0)
    integration.add_argument("--t1", type=float, default=1.0)
    integration.add_argument("--step", type=float, default=1e-3)
    integration.add_argument("--out", default=None)
    commands.add_parser(
        "verify", parents=[common], help="the acceptance suite"
    )
    return parser


def exit_code(error: KjetException) -> int:
    if isinstance(error, SingularMetric):
        return EXIT_SINGULAR_METRIC
    if isinstance(error, FinslerAxiomViolation):
        return EXIT_FINSLER
    return EXIT_USAGE


def main(argv: Optional[list[str]] = None) -> int:
    """
    Entry point of the kjet command

    :param argv: the arguments, sys.argv when omitted
    :return: the exit code
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"kjet: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(message)s",
    )
    start = time.perf_counter()
    with SafeLogger(args.log_file) as logger:
        try:
            problem = Problem.load(args.problem)
            report, code = COMMANDS[args.command](args, problem, logger)
        except KjetException as e:
            log_exception(args.command)
            logger.error(f"{args.command} failed: {e}")
            print(f"kjet: {type(e).__name__}: {e}", file=sys.stderr)
            return exit_code(e)
    report.elapsed_ms = (time.perf_counter() - start) * 1000
    print(report.to_json() if args.report == "json" else report.to_table())
    return code


if __name__ == "__main__":
    sys.exit(main())
