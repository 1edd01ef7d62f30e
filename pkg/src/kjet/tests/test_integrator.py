import math
import os

import numpy as np

from kjet.connections import autoparallel_rhs, bucataru_connection
from kjet.integrator import (
    integrate,
    integrate_batch,
    kpath_system,
    residual_along,
    trajectory_gap,
    trajectory_header,
    write_trajectory_csv,
)
from kjet.models.geometry import KSemispray
from kjet.models.integrator import (
    IntegratorConfig,
    InvalidIntegratorConfig,
    OdeSystem,
    Trajectory,
)
from kjet.models.phase import Box, InadmissiblePoint
from kjet.models.symbolic import EvalError, ShapeMismatch
from kjet.semispray import next_semispray
from kjet.tests import BaseTest


def exponential_kpath(t: float) -> list[float]:
    """
    Closed form k-path of G = -y(1,1)/3 from (0, 1, 1): y(1)'' = 2 y(1)
    """
    r = math.sqrt(2)
    y1 = math.cosh(r * t) + r * math.sinh(r * t)
    y2 = math.cosh(r * t) + math.sinh(r * t) / r
    x = math.sinh(r * t) / r + math.cosh(r * t) - 1
    return [x, y1, y2]


class IntegratorTest(BaseTest):
    def semispray(self, coefficients, ctx) -> KSemispray:
        return KSemispray(
            ctx, tuple(self.parse(g, ctx) for g in coefficients)
        )

    def test_kpath_system(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["y(1,1)^3"], ctx))
        self.assertEqual(system.name, "kpath")
        self.assertEqual(
            list(system.rhs),
            [
                self.parse(e, ctx)
                for e in ["y(1,1)", "2*y(2,1)", "-3*y(1,1)^3"]
            ],
        )
        with self.assertRaises(ShapeMismatch):
            OdeSystem(ctx, system.rhs[:2])

    def test_flat_kpath(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        trajectory = integrate(system, init, 0.0, 1.0)
        self.assertEqual(len(trajectory), 1001)
        self.assertFalse(trajectory.left_slit_domain)
        np.testing.assert_allclose(
            trajectory.final.to_list(), [2.0, 3.0, 1.0], atol=1e-8
        )
        self.assertAlmostEqual(trajectory.times[-1], 1.0, delta=1e-12)

    def test_zero_interval(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        trajectory = integrate(system, init, 0.5, 0.5)
        self.assertEqual(len(trajectory), 1)
        self.assertEqual(trajectory.final, init)

    def test_inadmissible_init(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        with self.assertRaises(InadmissiblePoint):
            integrate(system, self.point(ctx, [0.0], [0.05], [1.0]), 0, 1)

    def test_invalid_config(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        for cfg, t1 in [
            (IntegratorConfig(step=0.0), 1.0),
            (IntegratorConfig(step=-0.1), 1.0),
            (IntegratorConfig(step=0.3), 1.0),
            (IntegratorConfig(method="euler"), 1.0),
            (IntegratorConfig(), -1.0),
        ]:
            with self.assertRaises(InvalidIntegratorConfig, msg=str(cfg)):
                integrate(system, init, 0.0, t1, cfg)

    def test_steps(self):
        self.assertEqual(IntegratorConfig(step=0.1).steps(0.0, 1.0), 10)
        self.assertEqual(IntegratorConfig(step=1e-3).steps(0.0, 0.5), 500)
        self.assertEqual(IntegratorConfig().steps(1.0, 1.0), 0)

    def test_fourth_order_convergence(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["-y(1,1)/3"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        exact = np.array(exponential_kpath(1.0))
        errors = []
        for step in (0.1, 0.05):
            trajectory = integrate(
                system, init, 0.0, 1.0, IntegratorConfig(step=step)
            )
            errors.append(
                float(np.max(np.abs(trajectory.final.as_vector() - exact)))
            )
        self.assertGreater(errors[1], 0.0)
        self.assertGreaterEqual(errors[0] / errors[1], 12.0)
        fine = integrate(system, init, 0.0, 1.0)
        np.testing.assert_allclose(
            fine.final.to_list(), exact, rtol=1e-10, atol=1e-10
        )

    def test_slit_exit(self):
        ctx = self.context(1, 2)
        # y(1) = 1 - 2t reaches the margin at t = 0.45
        system = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [-1.0])
        trajectory = integrate(system, init, 0.0, 1.0)
        self.assertTrue(trajectory.left_slit_domain)
        self.assertAlmostEqual(trajectory.exit_time, 0.451, delta=2e-3)
        self.assertLess(len(trajectory), 1001)
        self.assertLess(abs(trajectory.final.y[0][0]), 0.1)

    def test_eval_error_reports_time(self):
        ctx = self.context(1, 1)
        system = kpath_system(self.semispray(["sqrt(x(1))"], ctx))
        init = self.point(ctx, [-1.0], [1.0])
        with self.assertRaises(EvalError) as error:
            integrate(system, init, 0.0, 2.0, IntegratorConfig(step=0.5))
        self.assertIn("at t=", str(error.exception))

    def test_residual_along(self):
        ctx = self.context(1, 2)
        flat = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        trajectory = integrate(flat, init, 0.0, 1.0)
        self.assertLessEqual(residual_along(trajectory, flat), 1e-8)
        other = kpath_system(self.semispray(["-y(1,1)/3"], ctx))
        self.assertGreater(residual_along(trajectory, other), 1.0)
        short = Trajectory(trajectory.times[:2], trajectory.states[:2])
        self.assertEqual(residual_along(short, other), 0.0)
        with self.assertRaises(ShapeMismatch):
            residual_along(Trajectory((), ()), flat)

    def test_autoparallels_follow_the_next_kpaths(self):
        ctx = self.context(1, 2)
        box = Box(((-1.0, 1.0), (0.2, 0.8), (-0.3, 0.3)))
        inits = self.sampler(ctx, 10, box=box).points()
        cfg = IntegratorConfig(step=1e-3)
        for text in ["y(1,1)*y(2,1)", "-y(1,1)/3"]:
            s = self.semispray([text], ctx)
            autoparallel = autoparallel_rhs(bucataru_connection(s))
            target = kpath_system(next_semispray(s))
            trajectories = integrate_batch(autoparallel, inits, 0.0, 0.5, cfg)
            following = integrate_batch(target, inits, 0.0, 0.5, cfg)
            for a, b in zip(trajectories, following):
                self.assertLessEqual(residual_along(a, target), 1e-5, text)
                self.assertLessEqual(trajectory_gap(a, b), 1e-10, text)

    def test_kpaths_of_sprays_coincide(self):
        ctx = self.context(1, 2)
        inits = self.sampler(ctx, 10).points()
        spray = self.semispray(["y(1,1)*y(2,1)"], ctx)
        first = integrate_batch(kpath_system(spray), inits, 0.0, 0.5)
        second = integrate_batch(
            kpath_system(next_semispray(spray)), inits, 0.0, 0.5
        )
        for a, b in zip(first, second):
            self.assertLessEqual(trajectory_gap(a, b), 1e-8)

    def test_kpaths_of_non_sprays_separate(self):
        ctx = self.context(1, 2)
        s = self.semispray(["-y(1,1)/3"], ctx)
        # y(2) >= 0 keeps y(1) away from the null section
        box = Box(((-1.0, 1.0), (0.2, 1.5), (0.0, 1.0)))
        inits = self.sampler(ctx, 10, box=box).points()
        first = integrate_batch(kpath_system(s), inits, 0.0, 1.0)
        second = integrate_batch(
            kpath_system(next_semispray(s)), inits, 0.0, 1.0
        )
        for a, b in zip(first, second):
            self.assertGreaterEqual(trajectory_gap(a, b), 1e-3)

    def test_batch_keeps_input_order(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        inits = [
            self.point(ctx, [float(i)], [1.0], [0.5]) for i in range(6)
        ]
        trajectories = integrate_batch(
            system, inits, 0.0, 0.1, IntegratorConfig(step=0.01), workers=3
        )
        self.assertEqual(len(trajectories), 6)
        for i, trajectory in enumerate(trajectories):
            self.assertEqual(trajectory.states[0], inits[i])
            self.assertAlmostEqual(
                trajectory.final.x[0], i + 0.1 + 0.005, delta=1e-12
            )

    def test_batch_propagates_errors(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        inits = [
            self.point(ctx, [0.0], [1.0], [0.0]),
            self.point(ctx, [0.0], [0.0], [0.0]),
        ]
        with self.assertRaises(InadmissiblePoint):
            integrate_batch(system, inits, 0.0, 0.1)

    def test_trajectory_gap(self):
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        a = integrate(system, init, 0.0, 0.1)
        self.assertEqual(trajectory_gap(a, a), 0.0)
        b = integrate(system, init, 0.0, 0.1, IntegratorConfig(step=0.01))
        with self.assertRaises(ShapeMismatch):
            trajectory_gap(a, b)

    def test_trajectory_csv(self):
        self.assertEqual(trajectory_header(1, 2), "t,x1,y1_1,y2_1")
        self.assertEqual(
            trajectory_header(2, 1), "t,x1,x2,y1_1,y1_2"
        )
        ctx = self.context(1, 2)
        system = kpath_system(self.semispray(["0"], ctx))
        init = self.point(ctx, [0.0], [1.0], [1.0])
        trajectory = integrate(
            system, init, 0.0, 1.0, IntegratorConfig(step=0.25)
        )
        path = os.path.join(self.tmp_dir.name, "flat.csv")
        write_trajectory_csv(trajectory, path)
        with open(path) as stream:
            lines = stream.read().splitlines()
        self.assertEqual(lines[0], "t,x1,y1_1,y2_1")
        self.assertEqual(len(lines), 6)
        self.assertEqual(lines[1], "0,0,1,1")
        values = [float(v) for v in lines[-1].split(",")]
        np.testing.assert_allclose(values, [1.0, 2.0, 3.0, 1.0], atol=1e-12)
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(rows[:, 0], trajectory.times)
