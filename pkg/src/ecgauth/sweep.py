"""Parameter-dependency studies: accuracy vs slicing time or training period.

Each grid point re-enrolls the corpus with the varied parameter and replays
the trial set, repeating with per-repeat trial subsampling. Seeding derives
from (base seed, repeat, parameter value bits), so points are independent of
their position in the grid and identical plans reproduce identical curves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .authenticate import metrics, run_trials
from .config import merged_config, toolkit_config
from .enrollment import enroll, new_db
from .errors import EcgAuthError, ValidationError

VAR_WINDOW = "window_s"
VAR_TRAIN_PERIOD = "train_period_s"
_VARIABLES = (VAR_WINDOW, VAR_TRAIN_PERIOD)

CURVE_HEADER = ["value_s", "accuracy_mean", "accuracy_std", "rejected_mean"]


@dataclass(frozen=True)
class SweepCorpus:
    """Enrollment records (entity id = subject_id) plus labeled trial candidates."""

    enroll_records: tuple
    trial_candidates: tuple
    trials_per_repeat: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "enroll_records", tuple(self.enroll_records))
        object.__setattr__(self, "trial_candidates", tuple(self.trial_candidates))
        if not self.enroll_records:
            raise ValidationError("corpus needs enrollment records")
        if not self.trial_candidates:
            raise ValidationError("corpus needs trial candidates")
        if self.trials_per_repeat is not None and self.trials_per_repeat < 1:
            raise ValidationError("trials_per_repeat must be >= 1")


@dataclass(frozen=True)
class SweepPlan:
    variable: str
    grid: tuple
    corpus: SweepCorpus
    fixed: dict = field(default_factory=dict)
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        if self.variable not in _VARIABLES:
            raise ValidationError(f"variable must be one of {_VARIABLES}")
        if not self.grid:
            raise ValidationError("grid must be non-empty")
        if any(v <= 0 for v in self.grid):
            raise ValidationError("grid values must be > 0")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid must be strictly ascending")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        merged_config(self.fixed)  # validate keys early


@dataclass(frozen=True)
class SweepPoint:
    value: float
    accuracy_mean: float
    accuracy_std: float
    n_rejected_mean: float

    @property
    def feasible(self) -> bool:
        return not math.isnan(self.accuracy_mean)


@dataclass(frozen=True)
class SweepCurve:
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def argmax_value(self) -> Optional[float]:
        """Grid value of the highest mean accuracy; ties take the smallest value."""
        best = None
        for p in self.points:
            if p.feasible and (best is None or p.accuracy_mean > best.accuracy_mean):
                best = p
        return best.value if best else None


def _point_rng(seed: int, repeat: int, value: float) -> np.random.Generator:
    value_bits = int(np.float64(value).view(np.uint64))
    return np.random.default_rng(np.random.SeedSequence([seed, repeat, value_bits]))


def _select_trials(corpus: SweepCorpus, rng: np.random.Generator) -> list:
    candidates = corpus.trial_candidates
    if corpus.trials_per_repeat is None or corpus.trials_per_repeat >= len(candidates):
        return list(candidates)
    picked = rng.choice(len(candidates), size=corpus.trials_per_repeat, replace=False)
    return [candidates[i] for i in sorted(picked)]


def _run_point(plan: SweepPlan, value: float) -> SweepPoint:
    accuracies = []
    rejected = []
    for repeat in range(plan.repeats):
        rng = _point_rng(plan.seed, repeat, value)
        flat = dict(plan.fixed)
        flat[plan.variable] = value
        config = toolkit_config(flat)
        db = new_db(config)
        try:
            for record in plan.corpus.enroll_records:
                enroll(db, record.subject_id, record)
            cm, _ = run_trials(db, _select_trials(plan.corpus, rng))
            if cm.total == 0:
                raise ValidationError("all trials rejected")
        except EcgAuthError:
            return SweepPoint(value, math.nan, math.nan, math.nan)
        accuracies.append(metrics(cm).accuracy)
        rejected.append(cm.n_rejected)
    return SweepPoint(
        value=value,
        accuracy_mean=float(np.mean(accuracies)),
        accuracy_std=float(np.std(accuracies)),
        n_rejected_mean=float(np.mean(rejected)),
    )


def run_sweep(plan: SweepPlan) -> SweepCurve:
    """Evaluate every grid point; infeasible points carry NaN and the sweep continues."""
    return SweepCurve(points=tuple(_run_point(plan, v) for v in plan.grid))


def _fmt6(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".6g")


def emit_curve(curve: SweepCurve, stream: IO[str]) -> None:
    """Write the curve as CSV with 6 significant digits."""
    if not curve.points:
        raise ValidationError("cannot emit an empty curve")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for p in curve.points:
        writer.writerow(
            [_fmt6(p.value), _fmt6(p.accuracy_mean), _fmt6(p.accuracy_std), _fmt6(p.n_rejected_mean)]
        )


def parse_curve(stream: IO[str]) -> SweepCurve:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != CURVE_HEADER:
        raise ValidationError(f"unexpected curve header {header!r}")
    points = [SweepPoint(*(float(cell) for cell in row)) for row in reader if row]
    if not points:
        raise ValidationError("curve file has no points")
    return SweepCurve(points=tuple(points))
