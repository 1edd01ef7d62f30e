import json

import sympy as sp

from kjet.models.integrator import IntegratorConfig, InvalidIntegratorConfig
from kjet.models.phase import (
    Box,
    ChartMap,
    CheckReport,
    InvalidChart,
    PhasePoint,
)
from kjet.models.report import (
    CheckLine,
    ProblemFile,
    ProblemFileError,
    Report,
    Tolerances,
    split_top_level,
)
from kjet.models.symbolic import (
    CoordId,
    CoordOutOfRange,
    InvalidContext,
    ShapeMismatch,
)
from kjet.tests import BaseTest


class ModelsTest(BaseTest):
    def test_coord_id(self):
        self.assertEqual(CoordId(0, 2).name, "x(2)")
        self.assertEqual(CoordId(3, 1).name, "y(3,1)")
        coord = CoordId(2, 1)
        self.assertEqual(CoordId.from_symbol(coord.symbol), coord)
        self.assertEqual(coord.symbol, sp.Symbol("y(2,1)"))
        with self.assertRaises(CoordOutOfRange):
            CoordId.from_symbol(sp.Symbol("z"))
        self.assertLess(CoordId(0, 2), CoordId(1, 1))

    def test_context(self):
        ctx = self.context(2, 2)
        self.assertEqual(ctx.dimension, 6)
        self.assertEqual(
            [c.name for c in ctx.coordinates()],
            ["x(1)", "x(2)", "y(1,1)", "y(1,2)", "y(2,1)", "y(2,2)"],
        )
        self.assertEqual(ctx.slot(CoordId(2, 1)), 4)
        extended = ctx.extended(2)
        self.assertEqual(
            [c.name for c in extended.auxiliary()], ["x(3)", "x(4)"]
        )
        self.assertEqual(len(extended.symbols()), 8)
        self.assertEqual(extended.ambient, ctx)
        self.assertTrue(extended.contains(CoordId(0, 4)))
        self.assertFalse(ctx.contains(CoordId(3, 1)))
        with self.assertRaises(CoordOutOfRange):
            extended.slot(CoordId(0, 3))
        for n, k in [(0, 1), (1, 0)]:
            with self.assertRaises(InvalidContext):
                self.context(n, k)

    def test_phase_point(self):
        ctx = self.context(2, 2)
        point = PhasePoint.from_vector(range(6), ctx)
        self.assertEqual(point.x, (0.0, 1.0))
        self.assertEqual(point.y, ((2.0, 3.0), (4.0, 5.0)))
        self.assertEqual(point.to_list(), [0, 1, 2, 3, 4, 5])
        self.assertTrue(point.is_admissible())
        self.assertFalse(
            PhasePoint.from_vector([0, 0, 0.05, -0.05, 1, 1], ctx)
            .is_admissible()
        )
        with self.assertRaises(ShapeMismatch):
            PhasePoint.from_vector([0.0] * 5, ctx)
        with self.assertRaises(ShapeMismatch):
            point.check_shape(self.context(2, 1))
        with_aux = point.with_aux((0.5,))
        self.assertEqual(list(with_aux.arguments()), [0, 1, 2, 3, 4, 5, 0.5])

    def test_box(self):
        box = Box.uniform(3)
        self.assertEqual(
            box.bounds,
            ((-1.0, 1.0), (0.2, 1.5), (-1.0, 1.0), (-1.0, 1.0)),
        )
        self.assertEqual(Box.uniform(1, x=(0.5, 1.5)).level(0), (0.5, 1.5))

    def test_chart_map(self):
        ctx = self.context(1, 2)
        with self.assertRaises(InvalidChart):
            ChartMap(ctx, (), Box.uniform(2))
        with self.assertRaises(InvalidChart):
            ChartMap(ctx, (self.parse("x(1)*y(1,1)", ctx),), Box.uniform(2))

    def test_check_report_merge(self):
        first = CheckReport("check", True, 1e-12, [0.0])
        second = CheckReport("other", False, 1e-3, [1.0], ["too large"])
        merged = first.merge(second)
        self.assertEqual(merged.name, "check")
        self.assertFalse(merged.passed)
        self.assertEqual(merged.residual, 1e-3)
        self.assertEqual(merged.worst_point, [1.0])
        self.assertEqual(merged.status, "fail")
        self.assertEqual(first.status, "pass")

    def test_integrator_config(self):
        self.assertEqual(IntegratorConfig(step=0.25).steps(0.0, 1.0), 4)
        with self.assertRaises(InvalidIntegratorConfig):
            IntegratorConfig(step=0.3).steps(0.0, 1.0)

    def test_tolerances(self):
        tolerances = Tolerances.from_dict({"pairing": "1e-6"})
        self.assertEqual(tolerances.pairing, 1e-6)
        self.assertEqual(tolerances.euler, 1e-9)
        with self.assertRaises(ProblemFileError):
            Tolerances.from_dict({"speed": 1})
        with self.assertRaises(ProblemFileError):
            Tolerances.from_dict({"euler": "small"})

    def test_problem_file_defaults(self):
        problem = ProblemFile.from_dict(
            {"n": 1, "k": 2, "semispray": "y(1,1)*x(1), y(2,1)"}
        )
        self.assertEqual(problem.semispray, ["y(1,1)*x(1)", "y(2,1)"])
        self.assertIsNone(problem.lagrangian)
        self.assertFalse(problem.finsler)
        self.assertEqual(problem.seed, 42)
        self.assertEqual(problem.samples, 50)
        self.assertEqual(problem.iterations, 4)
        self.assertEqual(problem.horizon, 0.5)
        self.assertEqual(problem.charts, [])
        self.assertEqual(problem.expect_fail, [])

    def test_problem_file_unquoted_semispray(self):
        for value, expected in [
            (0, ["0"]),
            (1.5, ["1.5"]),
            ([0, "x(1)"], ["0", "x(1)"]),
        ]:
            problem = ProblemFile.from_dict(
                {"n": 1, "k": 2, "semispray": value}
            )
            self.assertEqual(problem.semispray, expected)
            self.assertIsNone(problem.lagrangian)
        problem = ProblemFile.from_dict({"n": 1, "k": 1, "lagrangian": 1})
        self.assertEqual(problem.lagrangian, "1")
        with self.assertRaises(ProblemFileError):
            ProblemFile.from_dict(
                {"n": 1, "k": 2, "semispray": 0, "lagrangian": 0}
            )
        with self.assertRaises(ProblemFileError):
            ProblemFile.from_dict({"n": 1, "k": 2, "semispray": []})

    def test_problem_file_groups_dotted_keys(self):
        problem = ProblemFile.from_dict(
            {
                "n": 1,
                "k": 2,
                "lagrangian": "y(2,1)^2",
                "chart.b": "2*x(1)",
                "chart.a": "x(1)",
                "chart.a.box": [0.5, 1.5],
                "domain.x": [-2, 2],
                "domain.y2": [0, 1],
                "tolerance.covariance": 1e-6,
                "expect_fail": "is_kspray, sequence_constancy",
            }
        )
        self.assertEqual([c.name for c in problem.charts], ["a", "b"])
        self.assertEqual(problem.charts[0].box, (0.5, 1.5))
        self.assertEqual(problem.charts[1].box, (-2.0, 2.0))
        self.assertEqual(problem.domain, {0: (-2.0, 2.0), 2: (0.0, 1.0)})
        self.assertEqual(problem.tolerances.covariance, 1e-6)
        self.assertEqual(
            problem.expect_fail, ["is_kspray", "sequence_constancy"]
        )

    def test_problem_file_errors(self):
        for values in [
            {"k": 2, "semispray": "0"},
            {"n": 1, "k": 2},
            {"n": 1, "k": 2, "semispray": "0", "lagrangian": "y(1,1)^2"},
            {"n": 1, "k": 2, "semispray": "0", "colour": "red"},
            {"n": 1, "k": 2, "semispray": "0", "domain.z": [0, 1]},
            {"n": 1, "k": 2, "semispray": "0", "domain.x": [1, 0]},
            {"n": 1, "k": 2, "semispray": "0", "chart.a.box": [0, 1]},
            {"n": 1, "k": 2, "semispray": "0", "samples": 0},
            {"n": 1, "k": 2, "semispray": "0", "horizon": -1},
            {"n": "one", "k": 2, "semispray": "0"},
        ]:
            with self.assertRaises(ProblemFileError, msg=str(values)):
                ProblemFile.from_dict(values)

    def test_split_top_level(self):
        self.assertEqual(
            split_top_level("y(1,1)*x(1), y(2,1)"), ["y(1,1)*x(1)", "y(2,1)"]
        )
        self.assertEqual(split_top_level(" , "), [])
        self.assertEqual(split_top_level("a;b(1;2)", ";"), ["a", "b(1;2)"])

    def test_report(self):
        report = Report(
            command="verify",
            input_sha256="ab",
            checks=[
                CheckLine("is_kspray", "fail", 0.5, [0.0, 1.0], "fail"),
                CheckLine("frame_duality", "pass", 0.0, None),
            ],
            results=["G1 = 0"],
            elapsed_ms=3.0,
        )
        decoded = json.loads(report.to_json())
        self.assertEqual(
            set(decoded.keys()),
            {"command", "input_sha256", "checks", "results", "elapsed_ms"},
        )
        self.assertEqual(decoded["checks"][0]["expected"], "fail")
        self.assertNotIn("expected", decoded["checks"][1])
        table = report.to_table()
        self.assertIn("(expected fail)", table)
        self.assertIn("G1 = 0", table)
        self.assertTrue(table.endswith("elapsed_ms: 3"))
        self.assertFalse(report.has_errors())
        report.checks.append(CheckLine("kpath", "error", None, None))
        self.assertTrue(report.has_errors())
