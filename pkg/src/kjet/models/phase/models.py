from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

from kjet.models.symbolic import (
    Context,
    CoordId,
    KjetException,
    ShapeMismatch,
)

DEFAULT_SLIT_MARGIN = 0.1


class InvalidChart(KjetException):
    """
    A chart map depends on fibre coordinates or has no invertible
    Jacobian on its box
    """

    pass


class SingularJacobian(InvalidChart):
    pass


class IndexOutOfRange(KjetException):
    pass


class InvalidDomain(KjetException):
    """
    The sampling box cannot produce points of the slit bundle
    """

    pass


class InadmissiblePoint(KjetException):
    """
    A point lies on (or within the margin of) the null section
    """

    pass


@dataclass(frozen=True, order=False)
class PhasePoint:
    """
    Numeric point (x, y(1), .., y(k)) of the k-tangent bundle
    """

    x: tuple[float, ...]
    """
    base coordinates x[i-1] = x^i
    """
    y: tuple[tuple[float, ...], ...]
    """
    fibre coordinates y[m-1][i-1] = y^(m)i
    """
    aux: tuple[float, ...] = ()
    """
    values of the auxiliary coordinates, if any
    """

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def k(self) -> int:
        return len(self.y)

    def as_vector(self) -> np.ndarray:
        """
        Flat state in natural-frame order, auxiliary values excluded
        """
        return np.array(
            list(self.x) + [v for level in self.y for v in level],
            dtype=float,
        )

    def arguments(self) -> np.ndarray:
        return np.concatenate([self.as_vector(), np.array(self.aux, float)])

    @staticmethod
    def from_vector(
        vector, ctx: Context, aux: tuple[float, ...] = ()
    ) -> PhasePoint:
        values = [float(v) for v in vector]
        if len(values) != ctx.dimension:
            raise ShapeMismatch(
                f"expected {ctx.dimension} values, got {len(values)}"
            )
        n = ctx.n
        return PhasePoint(
            x=tuple(values[:n]),
            y=tuple(
                tuple(values[m * n : (m + 1) * n])
                for m in range(1, ctx.k + 1)
            ),
            aux=tuple(float(a) for a in aux),
        )

    def with_aux(self, aux: tuple[float, ...]) -> PhasePoint:
        return PhasePoint(self.x, self.y, tuple(float(a) for a in aux))

    def is_admissible(self, margin: float = DEFAULT_SLIT_MARGIN) -> bool:
        """
        Membership in the slit bundle: y(1) is not within `margin`
        of the null section (max norm)
        """
        return max(abs(v) for v in self.y[0]) >= margin

    def check_shape(self, ctx: Context):
        if self.n != ctx.n or self.k != ctx.k or len(self.aux) < ctx.aux:
            raise ShapeMismatch(
                f"point of shape (n={self.n}, k={self.k}) "
                f"does not match context (n={ctx.n}, k={ctx.k})"
            )

    def to_list(self) -> list[float]:
        return [float(v) for v in self.as_vector()]


@dataclass(frozen=True, order=False)
class VectorField:
    """
    A vector field on the k-tangent bundle given by its components in
    the natural frame (d/dx, d/dy(1), .., d/dy(k))
    """

    ctx: Context
    components: tuple[sp.Expr, ...]

    def __post_init__(self):
        if len(self.components) != self.ctx.dimension:
            raise ShapeMismatch(
                f"a vector field needs {self.ctx.dimension} components, "
                f"{len(self.components)} given"
            )

    def block(self, level: int) -> tuple[sp.Expr, ...]:
        n = self.ctx.n
        return self.components[level * n : (level + 1) * n]

    @staticmethod
    def from_blocks(ctx: Context, blocks) -> VectorField:
        return VectorField(
            ctx, tuple(sp.sympify(c) for block in blocks for c in block)
        )


@dataclass(frozen=True, order=False)
class Box:
    """
    Closed sampling intervals per coordinate level, shared by all
    the indices of a level
    """

    bounds: tuple[tuple[float, float], ...]
    """
    bounds[m] = (lo, hi) for level m, m = 0..k
    """

    def level(self, level: int) -> tuple[float, float]:
        return self.bounds[level]

    @staticmethod
    def uniform(
        k: int,
        x: tuple[float, float] = (-1.0, 1.0),
        y1: tuple[float, float] = (0.2, 1.5),
        y: tuple[float, float] = (-1.0, 1.0),
    ) -> Box:
        return Box(
            tuple([tuple(x), tuple(y1)] + [tuple(y) for _ in range(k - 1)])
        )


@dataclass(frozen=True, order=False)
class ChartMap:
    """
    A change of base coordinates x~ = x~(x) prolonged to the whole
    bundle, with the box on which its Jacobian is certified
    """

    ctx: Context
    targets: tuple[sp.Expr, ...]
    """
    x~^i as expressions of the level-0 coordinates
    """
    box: Box
    name: str = "chart"

    def __post_init__(self):
        if len(self.targets) != self.ctx.n:
            raise InvalidChart(
                f"chart {self.name} needs {self.ctx.n} target expressions"
            )
        for target in self.targets:
            for symbol in target.free_symbols:
                if CoordId.from_symbol(symbol).level >= 1:
                    raise InvalidChart(
                        f"chart {self.name} depends on the fibre "
                        f"coordinate {symbol}"
                    )


@dataclass(order=False)
class CheckReport:
    """
    Outcome of a numeric or symbolic verification
    """

    name: str
    passed: bool
    residual: float = 0.0
    """
    worst residual found, relative when the check says so
    """
    worst_point: Optional[list[float]] = None
    details: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def merge(self, other: CheckReport) -> CheckReport:
        """
        Combines two reports, keeping the worst residual
        """
        worst = self
        if other.residual > self.residual:
            worst = other
        return CheckReport(
            name=self.name,
            passed=self.passed and other.passed,
            residual=worst.residual,
            worst_point=worst.worst_point,
            details=self.details + other.details,
        )
