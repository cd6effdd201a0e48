"""Single-lead ECG records and the Record-CSV text format.

Record-CSV layout: header line ``fs=<float>,subject=<string>,lead=<string>``,
optional ``#`` comment lines (``# rpeak=<t>`` carries generator ground truth),
then one amplitude in mV per line. UTF-8, LF endings. Files written by
:func:`write_record` round-trip byte-identically through :func:`read_record`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import IO, Optional

import numpy as np

from .errors import FormatError, ParseError, ValidationError

STAGE_RAW = "raw"
STAGE_PREPROCESSED = "preprocessed"

_STAGES = (STAGE_RAW, STAGE_PREPROCESSED)


def fmt9(x: float) -> str:
    """Format a real with 9 significant digits (compact, round-trip safe)."""
    return format(float(x), ".9g")


@dataclass(frozen=True)
class EcgRecord:
    """One single-lead recording: amplitudes in mV at a fixed sampling rate.

    ``rpeak_times`` is optional ground-truth metadata (seconds) carried by
    synthetic records; consumers never require it.
    """

    subject_id: str
    fs: float
    samples: np.ndarray
    lead: str = "I"
    stage: str = STAGE_RAW
    rpeak_times: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValidationError("record needs at least 2 samples")
        if not np.isfinite(samples).all():
            raise ValidationError("record amplitudes must be finite")
        if not (self.fs > 0):
            raise ValidationError(f"fs must be > 0, got {self.fs}")
        if self.stage not in _STAGES:
            raise ValidationError(f"unknown stage {self.stage!r}")
        if self.rpeak_times is not None:
            peaks = np.asarray(self.rpeak_times, dtype=np.float64)
            object.__setattr__(self, "rpeak_times", peaks)
            peaks.flags.writeable = False
        samples.flags.writeable = False

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_seconds(self) -> float:
        return (self.samples.size - 1) / self.fs

    def with_samples(self, samples: np.ndarray, stage: Optional[str] = None) -> "EcgRecord":
        """Copy of this record with new amplitudes (and optionally a new stage)."""
        return replace(self, samples=samples, stage=stage or self.stage)

    def truncated(self, period_s: float) -> "EcgRecord":
        """Keep the first ``period_s`` seconds (duration becomes exactly ``period_s``)."""
        n_keep = int(round(period_s * self.fs)) + 1
        if n_keep > self.samples.size:
            raise ValidationError(
                f"cannot truncate to {period_s} s: record is {self.duration_seconds:.3f} s"
            )
        if n_keep == self.samples.size:
            return self
        peaks = self.rpeak_times
        if peaks is not None:
            peaks = peaks[peaks <= (n_keep - 1) / self.fs]
        return replace(self, samples=self.samples[:n_keep], rpeak_times=peaks)


def read_record(stream: IO[str]) -> EcgRecord:
    """Parse Record-CSV from a text stream; the result always has stage=raw."""
    header = stream.readline()
    if not header:
        raise FormatError("empty stream")
    parts = header.strip().split(",")
    if len(parts) != 3:
        raise FormatError(f"header must have 3 comma-separated fields, got {len(parts)}")
    keys = ("fs", "subject", "lead")
    values = {}
    for part, key in zip(parts, keys):
        if not part.startswith(key + "="):
            raise FormatError(f"expected '{key}=' field in header, got {part!r}")
        values[key] = part[len(key) + 1 :]
    try:
        fs = float(values["fs"])
    except ValueError:
        raise FormatError(f"non-numeric fs {values['fs']!r}") from None
    if fs <= 0:
        raise ValidationError(f"fs must be > 0, got {fs}")

    samples = []
    rpeaks = []
    for line_no, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("rpeak="):
                try:
                    rpeaks.append(float(body[6:]))
                except ValueError:
                    raise ParseError(f"bad rpeak comment {line!r}", line_no) from None
            continue
        try:
            samples.append(float(line))
        except ValueError:
            raise ParseError(f"non-numeric sample {line!r}", line_no) from None

    return EcgRecord(
        subject_id=values["subject"],
        fs=fs,
        samples=np.array(samples, dtype=np.float64),
        lead=values["lead"],
        stage=STAGE_RAW,
        rpeak_times=np.array(rpeaks, dtype=np.float64) if rpeaks else None,
    )


def write_record(record: EcgRecord, stream: IO[str]) -> None:
    """Emit Record-CSV (9 significant digits, LF endings)."""
    if not isinstance(record, EcgRecord):
        raise ValidationError("write_record expects an EcgRecord")
    for name in (record.subject_id, record.lead):
        if "," in name or "\n" in name:
            raise ValidationError(f"subject/lead labels may not contain commas: {name!r}")
    stream.write(f"fs={fmt9(record.fs)},subject={record.subject_id},lead={record.lead}\n")
    if record.rpeak_times is not None:
        for t in record.rpeak_times:
            stream.write(f"# rpeak={fmt9(t)}\n")
    for x in record.samples:
        stream.write(fmt9(x) + "\n")


def read_record_path(path) -> EcgRecord:
    with open(path, "r", encoding="utf-8") as fh:
        return read_record(fh)


def write_record_path(record: EcgRecord, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_record(record, fh)
