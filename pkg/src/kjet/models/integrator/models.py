from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import sympy as sp

from kjet.models.phase import PhasePoint
from kjet.models.symbolic import Context, KjetException, ShapeMismatch


class InvalidIntegratorConfig(KjetException):
    pass


class SlitPolicy(str, Enum):
    stop = "stop"


@dataclass(frozen=True, order=False)
class OdeSystem:
    """
    First-order system on the (k+1)n natural coordinates, the right
    hand side listed in natural-frame order
    """

    ctx: Context
    rhs: tuple[sp.Expr, ...]
    name: str = "system"

    def __post_init__(self):
        if len(self.rhs) != self.ctx.dimension:
            raise ShapeMismatch(
                f"system {self.name} needs {self.ctx.dimension} "
                f"right-hand sides, {len(self.rhs)} given"
            )


@dataclass(frozen=True, order=False)
class IntegratorConfig:
    step: float = 1e-3
    method: str = "rk4"
    slit_policy: SlitPolicy = SlitPolicy.stop
    margin: float = 0.1

    def steps(self, t0: float, t1: float) -> int:
        """
        Number of fixed steps covering [t0, t1]

        :raises InvalidIntegratorConfig: if the interval is not an
            integer multiple of the step
        """
        if self.step <= 0:
            raise InvalidIntegratorConfig("step must be positive")
        if self.method != "rk4":
            raise InvalidIntegratorConfig(
                f"unsupported integration method {self.method}"
            )
        if t1 < t0:
            raise InvalidIntegratorConfig("t1 must not precede t0")
        count = (t1 - t0) / self.step
        rounded = round(count)
        if abs(count - rounded) > 1e-9 * max(1.0, count):
            raise InvalidIntegratorConfig(
                f"(t1 - t0)/step = {count} is not an integer"
            )
        return int(rounded)


@dataclass(frozen=True, order=False)
class Trajectory:
    """
    Fixed-grid solution of an OdeSystem
    """

    times: tuple[float, ...]
    states: tuple[PhasePoint, ...]
    left_slit_domain: bool = False
    """
    set when the integration stopped because y(1) entered the margin
    """
    exit_time: Optional[float] = None

    @property
    def final(self) -> PhasePoint:
        return self.states[-1]

    def __len__(self):
        return len(self.states)
