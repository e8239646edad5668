"""Admissibility of bandwidth schedules for the two estimation stages.

Power-law schedules b(n) = c * n^(-a) are the canonical case and admit
closed-form admissibility regions:

  regression stage   0 < a < 1 / max(d + 2, 2 d)
  density stage      0 < gamma < (d + 8) / (7 (d + 4))

The regression bound makes the local kernel mass grow fast enough at
the critical dimension exponent; the density bound keeps every term of
the third-order expansion negligible after centering.  A slower-decay
condition, ln(1/b(n)) / ln ln n -> infinity, holds automatically for
power laws but rules out schedules like 1 / ln n; a numeric trend check
covers schedules given as black-box callables.

Nine reference verdicts, reproduced exactly by the acceptance suite
(bounds are open, so hitting a bound is inadmissible):

  1. regression  d=1  a=0.20           admissible    (bound 1/3)
  2. regression  d=1  a=1/3            inadmissible  (at the bound)
  3. regression  d=2  a=0.20           admissible    (bound 1/4)
  4. density     d=1  gamma=0.20       admissible    (bound 9/35)
  5. density     d=1  gamma=9/35       inadmissible  (at the bound)
  6. density     d=3  gamma=0.22       admissible    (bound 11/49)
  7. CLI  --d 1 --a 0.2 --gamma 0.2    exit 0  (both stages admissible)
  8. CLI  --d 1 --a 0.4 --gamma 0.2    exit 1  (regression stage fails)
  9. CLI  --d 0 --a 0.2 --gamma 0.2    exit 2  (dimension unusable)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

REGRESSION = "regression"
DENSITY = "density"


def critical_dimension_exponent(d: int) -> int:
    """max(d + 2, 2 d): the dimension exponent that binds the regression stage."""
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    return max(d + 2, 2 * d)


def regression_exponent_bound(d: int) -> float:
    return 1.0 / critical_dimension_exponent(d)


def density_exponent_bound(d: int) -> float:
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    return (d + 8.0) / (7.0 * (d + 4.0))


@dataclass(frozen=True)
class PowerSchedule:
    """b(n) = coefficient * n^(-exponent)."""

    coefficient: float
    exponent: float

    def __post_init__(self):
        if not (np.isfinite(self.coefficient) and self.coefficient > 0):
            raise ConfigError("schedule coefficient must be finite and positive")
        if not np.isfinite(self.exponent):
            raise ConfigError("schedule exponent must be finite")

    def __call__(self, n) -> float:
        return self.coefficient * float(n) ** (-self.exponent)


@dataclass(frozen=True)
class ScheduleCondition:
    name: str
    satisfied: bool
    detail: str


@dataclass(frozen=True)
class ScheduleReport:
    """Admissibility verdict for one stage's bandwidth schedule."""

    stage: str
    d: int
    schedule: PowerSchedule
    conditions: tuple[ScheduleCondition, ...]

    @property
    def satisfied(self) -> bool:
        return all(c.satisfied for c in self.conditions)

    def render(self) -> str:
        lines = [
            f"{self.stage} bandwidth b(n) = {self.schedule.coefficient:g}"
            f" * n^(-{self.schedule.exponent:g}), d = {self.d}"
        ]
        for c in self.conditions:
            mark = "ok  " if c.satisfied else "FAIL"
            lines.append(f"  [{mark}] {c.name}: {c.detail}")
        lines.append(f"overall: {'ADMISSIBLE' if self.satisfied else 'INADMISSIBLE'}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "d": self.d,
            "coefficient": self.schedule.coefficient,
            "exponent": self.schedule.exponent,
            "satisfied": self.satisfied,
            "conditions": [
                {"name": c.name, "satisfied": c.satisfied, "detail": c.detail}
                for c in self.conditions
            ],
        }


def validate_regression_bandwidth(schedule: PowerSchedule, d: int) -> ScheduleReport:
    a = schedule.exponent
    bound = regression_exponent_bound(d)
    conditions = (
        ScheduleCondition(
            "bandwidth decays",
            a > 0.0,
            f"exponent {a:g} must be > 0",
        ),
        ScheduleCondition(
            "local mass grows at the critical dimension exponent",
            a < bound,
            f"exponent {a:g} must be < 1/{critical_dimension_exponent(d)} = {bound:.6g}",
        ),
        ScheduleCondition(
            "decay beats every iterated logarithm",
            a > 0.0,
            "automatic for power laws with positive exponent",
        ),
    )
    return ScheduleReport(REGRESSION, d, schedule, conditions)


def validate_density_bandwidth(schedule: PowerSchedule, d: int) -> ScheduleReport:
    gamma = schedule.exponent
    bound = density_exponent_bound(d)
    conditions = (
        ScheduleCondition(
            "bandwidth decays",
            gamma > 0.0,
            f"exponent {gamma:g} must be > 0",
        ),
        ScheduleCondition(
            "expansion terms stay negligible",
            gamma < bound,
            f"exponent {gamma:g} must be < (d+8)/(7(d+4)) = {bound:.6g}",
        ),
    )
    return ScheduleReport(DENSITY, d, schedule, conditions)


@dataclass(frozen=True)
class TrendCheck:
    """Numeric stand-in for ln(1/b(n)) / ln ln n -> infinity.

    A schedule passes when the ratio grows by at least ``min_gain``
    relative at every step of the (log-spaced) grid.  Power laws gain
    ~10% per decade; 1/ln n is exactly flat and fails.
    """

    n_grid: np.ndarray
    ratios: np.ndarray
    min_gain: float

    @property
    def satisfied(self) -> bool:
        r = self.ratios
        return bool(np.all(r[1:] >= r[:-1] * (1.0 + self.min_gain)))


def slow_decay_trend(schedule, n_grid=None, min_gain: float = 0.02) -> TrendCheck:
    """Evaluate the slow-decay ratio for a black-box schedule b(n)."""
    if n_grid is None:
        n_grid = np.logspace(2, 12, 11)
    n_grid = np.asarray(n_grid, dtype=float)
    if n_grid.size < 3 or np.any(np.diff(n_grid) <= 0):
        raise ConfigError("trend check needs an increasing grid of >= 3 sizes")
    ratios = []
    for n in n_grid:
        b = float(schedule(n))
        if not (0.0 < b):
            raise ConfigError(f"schedule must be positive, got b({n:g}) = {b!r}")
        ratios.append(np.log(1.0 / b) / np.log(np.log(n)))
    return TrendCheck(n_grid=n_grid, ratios=np.asarray(ratios), min_gain=min_gain)
