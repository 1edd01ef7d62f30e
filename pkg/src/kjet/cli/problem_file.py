import logging
import os
from typing import Optional

import yaml

from kjet.lagrange_finsler import canonical_semispray
from kjet.models.geometry import KSemispray, LagrangianSpec
from kjet.models.phase import Box, ChartMap
from kjet.models.report import ProblemFile, ProblemFileError
from kjet.models.symbolic import Context
from kjet.phase_space import PointSampler
from kjet.symbolic import parse_expr
from kjet.utils import file_sha256

SEED_VARIABLE = "KJET_SEED"


def strip_comment(line: str) -> str:
    """
    Removes a `#` comment, unless the `#` is quoted
    """
    quote = None
    for index, char in enumerate(line):
        if quote:
            if char == quote:
                quote = None
        elif char in ("'", '"'):
            quote = char
        elif char == "#":
            return line[:index]
    return line


def decode_problem(text: str) -> dict[str, any]:
    """
    Decodes the `key = value` lines of a problem file, each value
    being read as a YAML scalar or flow list

    :param text: the file content
    :return: the flat key/value mapping
    :raises ProblemFileError: on malformed lines or duplicated keys
    """
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ProblemFileError(f"line {number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ProblemFileError(f"line {number}: empty key")
        if key in values:
            raise ProblemFileError(f"line {number}: duplicated key {key}")
        try:
            values[key] = yaml.safe_load(value) if value else None
        except yaml.YAMLError as e:
            raise ProblemFileError(f"line {number}: {key}: {e}")
    return values


def read_problem_file(path: str) -> tuple[ProblemFile, bytes]:
    """
    Reads and decodes a problem file

    :param path: the file path
    :return: the problem and the raw bytes, digested in the reports
    :raises ProblemFileError: if the file is unreadable or malformed
    """
    try:
        with open(path, "rb") as stream:
            content = stream.read()
    except OSError as e:
        raise ProblemFileError(f"unable to read {path}: {e}")
    try:
        text = content.decode("utf-8")
    except UnicodeDecodeError:
        raise ProblemFileError(f"{path} is not a utf-8 text file")
    return ProblemFile.from_dict(decode_problem(text)), content


class Problem:
    """
    A problem file turned into the engine objects: context, sampling
    box, sampler, charts and the k-semispray (given directly or
    derived from the Lagrangian).
    """

    def __init__(self, problem: ProblemFile, content: bytes = b""):
        self.problem = problem
        self.digest = file_sha256(content)
        self.ctx = Context(problem.n, problem.k)
        self.box = self._box()
        self.seed = self._seed()
        self._semispray: Optional[KSemispray] = None

    @staticmethod
    def load(path: str) -> "Problem":
        problem, content = read_problem_file(path)
        return Problem(problem, content)

    def _box(self) -> Box:
        bounds = list(Box.uniform(self.problem.k).bounds)
        for level, interval in self.problem.domain.items():
            if level > self.problem.k:
                raise ProblemFileError(
                    f"domain.y{level} is above the order k={self.problem.k}"
                )
            bounds[level] = interval
        return Box(tuple(bounds))

    def _seed(self) -> int:
        override = os.environ.get(SEED_VARIABLE)
        if override is None:
            return self.problem.seed
        try:
            seed = int(override)
        except ValueError:
            raise ProblemFileError(
                f"{SEED_VARIABLE} must be an integer, {override} given"
            )
        logging.info("seed %d taken from %s", seed, SEED_VARIABLE)
        return seed

    @property
    def is_lagrangian(self) -> bool:
        return self.problem.lagrangian is not None

    def sampler(self, count: Optional[int] = None) -> PointSampler:
        return PointSampler(
            self.ctx,
            self.box,
            count if count is not None else self.problem.samples,
            self.seed,
            self.problem.margin,
        )

    def lagrangian(self) -> LagrangianSpec:
        """
        :raises ProblemFileError: if the file gives a semispray instead
        """
        if not self.is_lagrangian:
            raise ProblemFileError("the problem file has no lagrangian")
        return LagrangianSpec(
            self.ctx,
            parse_expr(self.problem.lagrangian, self.ctx),
            self.problem.finsler,
            self.box,
        )

    def semispray(self) -> KSemispray:
        """
        The k-semispray of the problem. A Lagrangian is turned into its
        canonical semispray with the symbolic inverse metric, the
        coefficients being printed and differentiated afterwards.

        :raises SingularMetric: if the Lagrangian is not regular
        """
        if self._semispray is None:
            if self.is_lagrangian:
                self._semispray = canonical_semispray(
                    self.lagrangian(), force_symbolic=True
                )
            else:
                coefficients = self.problem.semispray
                if len(coefficients) != self.ctx.n:
                    raise ProblemFileError(
                        f"semispray needs {self.ctx.n} coefficients, "
                        f"{len(coefficients)} given"
                    )
                self._semispray = KSemispray(
                    self.ctx,
                    tuple(parse_expr(g, self.ctx) for g in coefficients),
                )
        return self._semispray

    def charts(self) -> list[ChartMap]:
        maps = []
        for chart in self.problem.charts:
            bounds = list(self.box.bounds)
            bounds[0] = chart.box
            maps.append(
                ChartMap(
                    self.ctx,
                    tuple(parse_expr(t, self.ctx) for t in chart.targets),
                    Box(tuple(bounds)),
                    chart.name,
                )
            )
        return maps

    def chart_sampler(self, chart: ChartMap) -> PointSampler:
        return PointSampler(
            self.ctx,
            chart.box,
            self.problem.samples,
            self.seed,
            self.problem.margin,
        )
