"""Testing phase: quality gate, nearest-reference matching, and metrics.

A trial is Rejected when its slices are mutually inconsistent (slice-to-mean
MSE above the gate limit) or when detection/slicing fails. Otherwise the
entity whose reference tree gives the lowest mean squared error wins, and the
trial is Known only if that error stays under the winner's stored control
limit. Rejected trials never enter the 2x2 confusion matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import tree as dtree
from .enrollment import EnrollmentDb, feature_matrix
from .errors import (
    EcgAuthError,
    EmptyDetectionError,
    EmptySliceSetError,
    InsufficientDataError,
    ValidationError,
)
from .preprocess import preprocess_pipeline
from .records import EcgRecord
from .slicing import detect_r_peaks, slice_record

KNOWN = "known"
UNKNOWN = "unknown"
REJECTED = "rejected"

LABEL_UNKNOWN = "unknown"
LABEL_KNOWN_PREFIX = "known:"


@dataclass(frozen=True)
class AuthDecision:
    outcome: str
    best_id: Optional[str] = None
    best_mse: Optional[float] = None
    gate_mse: Optional[float] = None
    scores: Optional[dict] = None
    trial_id: Optional[str] = None
    reason: Optional[str] = None


@dataclass
class ConfusionMatrix:
    """2x2 detection counts (predicted x actual), named predicted-then-actual."""

    known_known: int = 0
    known_unknown: int = 0
    unknown_known: int = 0
    unknown_unknown: int = 0
    n_rejected: int = 0
    n_known_correct_id: int = 0

    @property
    def total(self) -> int:
        return self.known_known + self.known_unknown + self.unknown_known + self.unknown_unknown

    def validate(self) -> None:
        if self.n_known_correct_id > self.known_known:
            raise ValidationError("n_known_correct_id cannot exceed the (known, known) cell")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    recall_unknown: float
    identification_accuracy: float


def gate_limit(db: EnrollmentDb) -> float:
    """Quality cutoff: gate_limit_factor x the median enrolled mean MSE."""
    if not db.models:
        raise ValidationError("database has no enrolled entities")
    medians = np.median([m.mean_mse for m in db.models.values()])
    return float(db.config.gate_limit_factor * medians)


def authenticate(
    db: EnrollmentDb,
    record: EcgRecord,
    test_period_s: Optional[float] = None,
    trial_id: Optional[str] = None,
) -> AuthDecision:
    """Match one test record against every enrolled reference."""
    if not db.models:
        raise ValidationError("cannot authenticate against an empty database")
    config = db.config
    period = config.test_period_s if test_period_s is None else test_period_s
    if record.duration_seconds + 1e-9 < period:
        raise InsufficientDataError(
            f"record is {record.duration_seconds:.3f} s, need {period} s"
        )
    prepared = preprocess_pipeline(record.truncated(period), config.preprocess)
    try:
        peaks = detect_r_peaks(prepared)
        ss = slice_record(prepared, peaks, config.window_s, config.anchor_fraction)
    except EmptyDetectionError:
        return AuthDecision(REJECTED, trial_id=trial_id, reason="no R peaks detected")
    except EmptySliceSetError:
        return AuthDecision(REJECTED, trial_id=trial_id, reason="no complete slices")

    mean_waveform = ss.slices.mean(axis=0)
    gate_mse = float(np.mean((ss.slices - mean_waveform) ** 2))
    limit = gate_limit(db)
    if gate_mse > limit:
        return AuthDecision(
            REJECTED,
            gate_mse=gate_mse,
            trial_id=trial_id,
            reason=f"quality gate: slice consistency {gate_mse:.6g} > limit {limit:.6g}",
        )

    # Offsets come from the test record's own grid; reference trees answer at
    # arbitrary offsets, so differing sampling rates need no resampling.
    X_full = feature_matrix(ss, config.beat_features)
    amplitudes = ss.slices.ravel()
    row_offsets = np.arange(ss.row_length) / ss.fs

    scores = {}
    for entity_id, model in db.models.items():
        if model.feature_indices == (0,):
            preds = dtree.predict_many(model.tree, row_offsets)
            residuals = ss.slices - preds[np.newaxis, :]
            scores[entity_id] = float(np.mean(residuals**2))
        else:
            X = X_full[:, list(model.feature_indices)]
            residuals = dtree.predict_many(model.tree, X) - amplitudes
            scores[entity_id] = float(np.mean(residuals**2))

    best_id = min(sorted(scores), key=lambda e: scores[e])
    best_mse = scores[best_id]
    outcome = KNOWN if best_mse <= db.models[best_id].ucl_mse else UNKNOWN
    return AuthDecision(
        outcome,
        best_id=best_id,
        best_mse=best_mse,
        gate_mse=gate_mse,
        scores=scores,
        trial_id=trial_id,
    )


def parse_actual_label(label: str) -> tuple[bool, Optional[str]]:
    """'known:<id>' -> (True, id); 'unknown' -> (False, None)."""
    if label == LABEL_UNKNOWN:
        return False, None
    if label.startswith(LABEL_KNOWN_PREFIX) and len(label) > len(LABEL_KNOWN_PREFIX):
        return True, label[len(LABEL_KNOWN_PREFIX) :]
    raise ValidationError(f"trial label must be 'known:<id>' or 'unknown', got {label!r}")


def run_trials(
    db: EnrollmentDb,
    trials: Iterable[tuple[EcgRecord, str]],
    test_period_s: Optional[float] = None,
    seed: Optional[int] = None,
) -> tuple[ConfusionMatrix, list[AuthDecision]]:
    """Authenticate each (record, actual-label) trial and tally the matrix.

    Per-trial failures become Rejected decisions; the batch never aborts.
    Decisions are deterministic given (db, trials); ``seed`` is accepted for
    call-site stability but the matcher itself draws no randomness.
    """
    del seed
    cm = ConfusionMatrix()
    decisions = []
    for index, (record, label) in enumerate(trials):
        actual_known, actual_id = parse_actual_label(label)
        trial_id = str(index)
        try:
            decision = authenticate(db, record, test_period_s, trial_id=trial_id)
        except EcgAuthError as exc:
            decision = AuthDecision(REJECTED, trial_id=trial_id, reason=str(exc))
        decisions.append(decision)

        if decision.outcome == REJECTED:
            cm.n_rejected += 1
        elif decision.outcome == KNOWN:
            if actual_known:
                cm.known_known += 1
                if decision.best_id == actual_id:
                    cm.n_known_correct_id += 1
            else:
                cm.known_unknown += 1
        else:
            if actual_known:
                cm.unknown_known += 1
            else:
                cm.unknown_unknown += 1
    cm.validate()
    return cm, decisions


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Detection accuracy, unknown recall, and exact-id accuracy from the matrix."""
    total = cm.total
    if total <= 0:
        raise ValidationError("confusion matrix is empty")
    actual_unknown = cm.known_unknown + cm.unknown_unknown
    return Metrics(
        accuracy=(cm.known_known + cm.unknown_unknown) / total,
        recall_unknown=(cm.unknown_unknown / actual_unknown) if actual_unknown else 0.0,
        identification_accuracy=(
            cm.n_known_correct_id / cm.known_known if cm.known_known else 1.0
        ),
    )
