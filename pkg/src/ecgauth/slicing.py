"""R-peak detection and fixed-width, peak-anchored window slicing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDetectionError, EmptySliceSetError, ValidationError
from .records import STAGE_PREPROCESSED, EcgRecord

THRESHOLD_FACTOR = 0.6
THRESHOLD_PERCENTILE = 95.0
REFRACTORY_S = 0.25


@dataclass(frozen=True)
class SliceSet:
    """Fixed-width windows cut around detected R peaks, one row per beat."""

    window_s: float
    anchor_fraction: float
    fs: float
    slices: np.ndarray
    anchor_times_s: np.ndarray

    def __post_init__(self):
        slices = np.asarray(self.slices, dtype=np.float64)
        anchors = np.asarray(self.anchor_times_s, dtype=np.float64)
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "anchor_times_s", anchors)
        if self.window_s <= 0:
            raise ValidationError("window_s must be > 0")
        if slices.ndim != 2 or slices.shape[0] < 1 or slices.shape[1] < 2:
            raise ValidationError("slices must be a non-empty matrix with rows of length >= 2")
        if anchors.shape != (slices.shape[0],):
            raise ValidationError("anchor_times_s must match the number of slices")
        if slices.shape[0] > 1 and not np.all(np.diff(anchors) > 0):
            raise ValidationError("anchor_times_s must be strictly increasing")

    @property
    def n_slices(self) -> int:
        return int(self.slices.shape[0])

    @property
    def row_length(self) -> int:
        return int(self.slices.shape[1])


@dataclass(frozen=True)
class TrainingTable:
    """(offset within window, amplitude) pairs pooled over all slices."""

    offsets: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        amps = np.asarray(self.amplitudes, dtype=np.float64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "amplitudes", amps)
        if offsets.shape != amps.shape or offsets.ndim != 1:
            raise ValidationError("offsets and amplitudes must be equal-length vectors")
        if offsets.size and offsets.min() < 0:
            raise ValidationError("offsets must be non-negative")

    def __len__(self) -> int:
        return int(self.offsets.size)


def detect_r_peaks(record: EcgRecord) -> np.ndarray:
    """Adaptive-threshold peak picking on a preprocessed, upright record.

    Candidates are local maxima above 0.6 x the 95th-percentile amplitude;
    peaks closer than the 0.25 s refractory spacing are resolved by keeping
    the larger one. Returns ascending sample indices.
    """
    if record.stage != STAGE_PREPROCESSED:
        raise ValidationError("detect_r_peaks expects a preprocessed record")
    x = record.samples
    threshold = THRESHOLD_FACTOR * float(np.percentile(x, THRESHOLD_PERCENTILE))
    interior = (x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]) & (x[1:-1] > threshold)
    candidates = np.flatnonzero(interior) + 1
    if candidates.size == 0:
        raise EmptyDetectionError("no peaks above threshold")

    refractory = REFRACTORY_S * record.fs
    kept = [int(candidates[0])]
    for idx in candidates[1:]:
        idx = int(idx)
        if idx - kept[-1] < refractory:
            if x[idx] > x[kept[-1]]:
                kept[-1] = idx
        else:
            kept.append(idx)
    return np.array(kept, dtype=np.intp)


def slice_record(
    record: EcgRecord, peaks: np.ndarray, window_s: float, anchor_fraction: float
) -> SliceSet:
    """Cut one window per peak; windows extending past the record are dropped.

    Each window spans [t - anchor_fraction*window_s, t + (1-anchor_fraction)*window_s)
    around the peak time t and contributes round(window_s * fs) samples.
    """
    if window_s <= 0:
        raise ValidationError("window_s must be > 0")
    if not (0 <= anchor_fraction < 1):
        raise ValidationError("anchor_fraction must be in [0, 1)")
    peaks = np.asarray(peaks, dtype=np.intp)
    if peaks.size and (np.any(np.diff(peaks) <= 0) or peaks[0] < 0 or peaks[-1] >= record.n_samples):
        raise ValidationError("peaks must be ascending indices within the record")

    row_len = int(round(window_s * record.fs))
    if row_len < 2:
        raise ValidationError(f"window_s {window_s} is too narrow for fs {record.fs}")
    pre = int(round(anchor_fraction * window_s * record.fs))

    rows = []
    anchors = []
    for p in peaks:
        start = int(p) - pre
        stop = start + row_len
        if start < 0 or stop > record.n_samples:
            continue
        rows.append(record.samples[start:stop])
        anchors.append(p / record.fs)
    if not rows:
        raise EmptySliceSetError("no complete windows inside the record")
    return SliceSet(
        window_s=window_s,
        anchor_fraction=anchor_fraction,
        fs=record.fs,
        slices=np.vstack(rows),
        anchor_times_s=np.array(anchors),
    )


def to_training_table(ss: SliceSet) -> TrainingTable:
    """Pool all slices into (offset, amplitude) pairs, row-major."""
    offsets = np.tile(np.arange(ss.row_length) / ss.fs, ss.n_slices)
    return TrainingTable(offsets=offsets, amplitudes=ss.slices.ravel())
