from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Optional

from kjet.models.symbolic import KjetException
from kjet.utils.functions import get_yaml_item_value


PROBLEM_KEYS = (
    "n",
    "k",
    "lagrangian",
    "semispray",
    "finsler",
    "seed",
    "samples",
    "margin",
    "horizon",
    "iterations",
    "expect_fail",
)


class ProblemFileError(KjetException):
    """
    A problem file is malformed or misses mandatory fields
    """

    pass


class UsageError(KjetException):
    pass


@dataclass(order=False)
class Tolerances:
    """
    Numeric thresholds of the verification checks
    """

    derivative: float = 1e-5
    euler: float = 1e-9
    covariance: float = 1e-8
    pairing: float = 1e-10
    kpath_residual: float = 1e-5
    coincidence: float = 1e-8
    sequence: float = 1e-9
    determinant: float = 1e-8
    divergence: float = 1e-3

    @staticmethod
    def from_dict(overrides: dict[str, any]) -> Tolerances:
        tolerances = Tolerances()
        known = {f.name for f in fields(Tolerances)}
        for name, value in overrides.items():
            if name not in known:
                raise ProblemFileError(f"unknown tolerance: {name}")
            try:
                setattr(tolerances, name, float(value))
            except (TypeError, ValueError):
                raise ProblemFileError(
                    f"tolerance {name} is not a number: {value}"
                )
        return tolerances


@dataclass(order=False)
class ChartSpec:
    name: str
    targets: list[str]
    box: tuple[float, float]


@dataclass(order=False)
class ProblemFile:
    """
    The decoded content of a kjet problem file
    """

    n: int
    k: int
    lagrangian: Optional[str] = None
    semispray: Optional[list[str]] = None
    finsler: bool = False
    charts: list[ChartSpec] = field(default_factory=list)
    domain: dict[int, tuple[float, float]] = field(default_factory=dict)
    """
    level -> (lo, hi)
    """
    seed: int = 42
    samples: int = 50
    margin: float = 0.1
    horizon: float = 0.5
    """
    length of the time interval of the k-path checks
    """
    iterations: int = 4
    tolerances: Tolerances = field(default_factory=Tolerances)
    expect_fail: list[str] = field(default_factory=list)

    @staticmethod
    def from_dict(values: dict[str, any]) -> ProblemFile:
        """
        Builds a problem from the flat key/value mapping of a problem
        file. Dotted keys (`chart.<name>`, `chart.<name>.box`,
        `domain.x`, `domain.y<m>`, `tolerance.<name>`) are grouped.

        :param values: decoded key/value pairs
        :return: the problem
        """
        lagrangian = values.get("lagrangian")
        semispray = values.get("semispray")
        missing_fields = []
        for mandatory in ["n", "k"]:
            if values.get(mandatory) is None:
                missing_fields.append(mandatory)
        if lagrangian is None and semispray is None:
            missing_fields.append("lagrangian|semispray")
        if len(missing_fields) > 0:
            missing = ",".join(missing_fields)
            raise ProblemFileError(
                f"missing mandatory fields on problem file: {missing}"
            )
        if lagrangian is not None and semispray is not None:
            raise ProblemFileError(
                "please use either lagrangian or semispray, not both"
            )

        try:
            problem = ProblemFile(n=int(values["n"]), k=int(values["k"]))
            problem.seed = int(get_yaml_item_value(values, "seed", 42))
            problem.samples = int(get_yaml_item_value(values, "samples", 50))
            problem.margin = float(get_yaml_item_value(values, "margin", 0.1))
            problem.horizon = float(
                get_yaml_item_value(values, "horizon", 0.5)
            )
            problem.iterations = int(
                get_yaml_item_value(values, "iterations", 4)
            )
        except (TypeError, ValueError) as e:
            raise ProblemFileError(f"invalid numeric field: {e}")
        if problem.samples < 1 or problem.iterations < 1:
            raise ProblemFileError("samples and iterations must be >= 1")
        if problem.horizon <= 0:
            raise ProblemFileError("horizon must be positive")

        if lagrangian is not None:
            problem.lagrangian = str(lagrangian)
        if semispray is not None:
            if not isinstance(semispray, list):
                # an unquoted number decodes as int or float
                semispray = split_top_level(str(semispray))
            problem.semispray = [str(s) for s in semispray]
            if not problem.semispray:
                raise ProblemFileError("semispray has no coefficients")
        problem.finsler = bool(get_yaml_item_value(values, "finsler", False))

        expect_fail = get_yaml_item_value(values, "expect_fail", [])
        if isinstance(expect_fail, str):
            expect_fail = [e.strip() for e in expect_fail.split(",")]
        problem.expect_fail = list(expect_fail)

        tolerance_overrides = {}
        chart_targets = {}
        chart_boxes = {}
        for key, value in values.items():
            parts = key.split(".")
            if parts[0] == "tolerance" and len(parts) == 2:
                tolerance_overrides[parts[1]] = value
            elif parts[0] == "chart" and len(parts) == 2:
                targets = value
                if isinstance(targets, str):
                    targets = split_top_level(targets)
                chart_targets[parts[1]] = [str(t) for t in targets]
            elif parts[0] == "chart" and len(parts) == 3 and parts[2] == "box":
                chart_boxes[parts[1]] = _interval(key, value)
            elif parts[0] == "domain" and len(parts) == 2:
                problem.domain[_domain_level(key, parts[1])] = _interval(
                    key, value
                )
            elif len(parts) > 1 or key not in PROBLEM_KEYS:
                raise ProblemFileError(f"unknown key: {key}")

        problem.tolerances = Tolerances.from_dict(tolerance_overrides)
        for name in sorted(chart_targets.keys()):
            problem.charts.append(
                ChartSpec(
                    name=name,
                    targets=chart_targets[name],
                    box=chart_boxes.get(name, problem.domain.get(0, (-1, 1))),
                )
            )
        unknown_boxes = set(chart_boxes.keys()) - set(chart_targets.keys())
        if unknown_boxes:
            raise ProblemFileError(
                f"box given for undefined charts: {sorted(unknown_boxes)}"
            )
        return problem


def split_top_level(text: str, separator: str = ",") -> list[str]:
    """
    Splits a list of expressions on the separators that are not
    enclosed in parentheses, so that `y(1,1)*x(1), y(2,1)` yields two
    items

    :param text: the joined expressions
    :param separator: single character separator
    :return: the stripped items
    """
    items = []
    depth = 0
    current = []
    for char in text:
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        if char == separator and depth == 0:
            items.append("".join(current).strip())
            current = []
        else:
            current.append(char)
    items.append("".join(current).strip())
    return [item for item in items if item]


def _interval(key: str, value: any) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{key} must be an interval [lo, hi]")
    if lo > hi:
        raise ProblemFileError(f"{key} has lo > hi")
    return lo, hi


def _domain_level(key: str, name: str) -> int:
    if name == "x":
        return 0
    if name.startswith("y") and name[1:].isdigit():
        return int(name[1:])
    raise ProblemFileError(f"unknown domain key: {key}")


@dataclass(order=False)
class CheckLine:
    """
    One verification line of a report
    """

    name: str
    status: str
    """
    pass, fail or error
    """
    residual: Optional[float]
    point: Optional[list[float]]
    expected: Optional[str] = None
    """
    set to `fail` when the problem file annotates the check as an
    expected failure
    """

    def to_dict(self) -> dict[str, any]:
        line = {
            "name": self.name,
            "status": self.status,
            "residual": self.residual,
            "point": self.point,
        }
        if self.expected:
            line["expected"] = self.expected
        return line


@dataclass(order=False)
class Report:
    """
    Machine-readable outcome of a kjet command
    """

    command: str
    input_sha256: str
    checks: list[CheckLine] = field(default_factory=list)
    results: list[str] = field(default_factory=list)
    elapsed_ms: float = 0.0

    def to_dict(self) -> dict[str, any]:
        return {
            "command": self.command,
            "input_sha256": self.input_sha256,
            "checks": [c.to_dict() for c in self.checks],
            "results": self.results,
            "elapsed_ms": self.elapsed_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=4)

    def to_table(self) -> str:
        lines = [f"command: {self.command}"]
        lines.extend(self.results)
        if self.checks:
            width = max(len(c.name) for c in self.checks)
            for check in self.checks:
                residual = (
                    "-" if check.residual is None else f"{check.residual:.3e}"
                )
                point = (
                    ""
                    if check.point is None
                    else " at (" + ", ".join(f"{v:.6g}" for v in check.point)
                    + ")"
                )
                annotation = " (expected fail)" if check.expected else ""
                lines.append(
                    f"{check.name.ljust(width)}  {check.status:5}  "
                    f"{residual}{point}{annotation}"
                )
        lines.append(f"elapsed_ms: {self.elapsed_ms:.0f}")
        return "\n".join(lines)

    def has_errors(self) -> bool:
        return any(c.status == "error" for c in self.checks)
