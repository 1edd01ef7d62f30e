import logging
from concurrent.futures import Future, ThreadPoolExecutor, wait
from typing import Optional

import numpy as np

from kjet.models.geometry import KSemispray
from kjet.models.integrator import IntegratorConfig, OdeSystem, Trajectory
from kjet.models.phase import InadmissiblePoint, PhasePoint
from kjet.models.symbolic import EvalError, ShapeMismatch
from kjet.semispray import assemble_field
from kjet.symbolic import Evaluator, compile_evaluator
from kjet.utils import SafeLogger


def kpath_system(s: KSemispray) -> OdeSystem:
    """
    The k-path system of a k-semispray: the components of its vector
    field read as state derivatives

    :param s: the k-semispray
    :return: the first-order system
    """
    return OdeSystem(s.ctx, assemble_field(s).components, name="kpath")


def _rk4_step(
    rhs: Evaluator, state: np.ndarray, aux: np.ndarray, step: float
) -> np.ndarray:
    def derivative(values: np.ndarray) -> np.ndarray:
        return rhs(np.concatenate([values, aux]))

    k1 = derivative(state)
    k2 = derivative(state + 0.5 * step * k1)
    k3 = derivative(state + 0.5 * step * k2)
    k4 = derivative(state + step * k3)
    return state + step / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)


def integrate(
    sys: OdeSystem,
    init: PhasePoint,
    t0: float,
    t1: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> Trajectory:
    """
    Fixed step classical Runge-Kutta integration on the uniform grid
    t0, t0 + step, .., t1. When y(1) enters the null-section margin the
    integration stops and the trajectory is flagged.

    :param sys: the system
    :param init: the initial state, admissible
    :param t0: initial time
    :param t1: final time
    :param cfg: step, method and slit policy
    :return: the trajectory
    :raises InadmissiblePoint: if the initial state is not admissible
    :raises EvalError: if the right-hand side fails, with the time
    """
    ctx = sys.ctx
    init.check_shape(ctx)
    if not init.is_admissible(cfg.margin):
        raise InadmissiblePoint(
            f"initial state {init.to_list()} is within {cfg.margin} of "
            f"the null section"
        )
    count = cfg.steps(t0, t1)
    rhs = compile_evaluator(sys.rhs, ctx)
    aux = np.array(init.aux[: ctx.aux], dtype=float)
    state = init.as_vector()
    times = [float(t0)]
    states = [init]
    logging.debug(
        "integrating %s over [%s, %s] with %d steps", sys.name, t0, t1, count
    )
    for index in range(1, count + 1):
        time = t0 + index * cfg.step
        try:
            state = _rk4_step(rhs, state, aux, cfg.step)
        except EvalError as e:
            logging.error("%s failed at t=%s: %s", sys.name, time, e)
            raise EvalError(f"{e} at t={time}")
        point = PhasePoint.from_vector(state, ctx, init.aux)
        times.append(float(time))
        states.append(point)
        if not point.is_admissible(cfg.margin):
            logging.info(
                "%s left the slit domain at t=%s", sys.name, time
            )
            return Trajectory(
                tuple(times), tuple(states), True, float(time)
            )
    return Trajectory(tuple(times), tuple(states))


class IntegrationPool:
    """
    Runs the integration of several initial states of the same system
    on a thread pool. The join method waits for all of them and returns
    the trajectories in the order the states were pushed.
    """

    def __init__(
        self,
        sys: OdeSystem,
        cfg: IntegratorConfig,
        workers: Optional[int] = None,
        logger: Optional[SafeLogger] = None,
    ):
        self.sys = sys
        self.cfg = cfg
        self.workers = workers
        self.logger = logger if logger is not None else SafeLogger()
        self.jobs: list[tuple[PhasePoint, float, float]] = []
        # compiled once, the workers only read the cache
        compile_evaluator(sys.rhs, sys.ctx)

    def push(self, init: PhasePoint, t0: float, t1: float):
        self.jobs.append((init, t0, t1))

    def join(self) -> list[Trajectory]:
        """
        waits all the integrations pushed into the pool to finish

        :return: the trajectories, in push order
        """
        futures: list[Future] = []
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            for init, t0, t1 in self.jobs:
                futures.append(
                    executor.submit(
                        integrate, self.sys, init, t0, t1, self.cfg
                    )
                )
            wait(futures)
        trajectories = []
        for future, (init, _, _) in zip(futures, self.jobs):
            exception = future.exception()
            if exception is not None:
                self.logger.error(
                    f"{self.sys.name} from {init.to_list()}: {exception}"
                )
                raise exception
            trajectories.append(future.result())
        self.logger.debug(
            f"{self.sys.name}: {len(trajectories)} trajectories integrated"
        )
        return trajectories


def integrate_batch(
    sys: OdeSystem,
    inits: list[PhasePoint],
    t0: float,
    t1: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    workers: Optional[int] = None,
    logger: Optional[SafeLogger] = None,
) -> list[Trajectory]:
    """
    Integrates several initial states in parallel.

    :param sys: the system
    :param inits: the initial states
    :param t0: initial time
    :param t1: final time
    :param cfg: integrator configuration
    :param workers: pool size, the executor default when None
    :param logger: optional SafeLogger for the pool messages
    :return: the trajectories in input order
    """
    pool = IntegrationPool(sys, cfg, workers, logger)
    for init in inits:
        pool.push(init, t0, t1)
    return pool.join()


def residual_along(traj: Trajectory, sys: OdeSystem) -> float:
    """
    How far a trajectory is from solving a system: the largest
    max-norm gap between the central difference of the states and the
    right-hand side, over the interior grid points

    :param traj: the trajectory
    :param sys: the system the trajectory is measured against
    :return: the residual, 0 for fewer than three points
    """
    if len(traj) == 0:
        raise ShapeMismatch("empty trajectory")
    if len(traj) < 3:
        return 0.0
    rhs = compile_evaluator(sys.rhs, sys.ctx)
    states = np.array([p.as_vector() for p in traj.states])
    times = np.array(traj.times)
    aux = np.array(traj.states[0].aux[: sys.ctx.aux], dtype=float)
    residual = 0.0
    for index in range(1, len(traj) - 1):
        difference = (states[index + 1] - states[index - 1]) / (
            times[index + 1] - times[index - 1]
        )
        value = rhs(np.concatenate([states[index], aux]))
        residual = max(residual, float(np.max(np.abs(difference - value))))
    return residual


def trajectory_gap(a: Trajectory, b: Trajectory) -> float:
    """
    Largest max-norm gap between two trajectories on their common grid

    :raises ShapeMismatch: if the grids differ
    """
    length = min(len(a), len(b))
    if not np.allclose(a.times[:length], b.times[:length], atol=1e-12):
        raise ShapeMismatch("trajectories are not on the same grid")
    gap = 0.0
    for p, q in zip(a.states[:length], b.states[:length]):
        gap = max(gap, float(np.max(np.abs(p.as_vector() - q.as_vector()))))
    return gap


def trajectory_header(n: int, k: int) -> str:
    columns = ["t"] + [f"x{i}" for i in range(1, n + 1)]
    for m in range(1, k + 1):
        columns.extend(f"y{m}_{i}" for i in range(1, n + 1))
    return ",".join(columns)


def write_trajectory_csv(traj: Trajectory, path: str):
    """
    Writes a trajectory as CSV, one row per grid point, header
    t,x1..xn,y1_1..y1_n,..,yk_1..yk_n and 17 significant digits

    :param traj: the trajectory
    :param path: the output file
    """
    first = traj.states[0]
    rows = np.array(
        [[t] + p.to_list() for t, p in zip(traj.times, traj.states)],
        dtype=float,
    )
    np.savetxt(
        path,
        rows,
        fmt="%.17g",
        delimiter=",",
        header=trajectory_header(first.n, first.k),
        comments="",
    )
