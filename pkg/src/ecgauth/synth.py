"""Seeded synthetic ECG generator: per-subject PQRST Gaussian templates.

Stands in for a real corpus. Each subject gets a fixed template of 5 Gaussian
bumps whose parameters are drawn once from a seeded PRNG; the template repeats
at the configured heart rate with +/-3% per-beat jitter, plus optional linear
drift, a powerline tone, and white noise. Ground-truth R-peak times ride along
as record metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .records import STAGE_RAW, EcgRecord

# Per-wave parameter ranges: (center_lo, center_hi, amp_lo, amp_hi, sigma_lo,
# sigma_hi). Centers are seconds relative to the R peak. The R bump dominates
# every other deflection so detection thresholds keyed to high percentiles
# stay well above the T wave; P sits inside the refractory spacing of its R.
_WAVE_RANGES = {
    "P": (-0.24, -0.16, 0.04, 0.15, 0.012, 0.030),
    "Q": (-0.055, -0.030, -0.40, -0.05, 0.006, 0.014),
    "R": (0.0, 0.0, 1.20, 1.80, 0.018, 0.030),
    "S": (0.025, 0.055, -0.80, -0.15, 0.007, 0.020),
    "T": (0.20, 0.36, 0.05, 0.10, 0.035, 0.070),
}
_WAVE_ORDER = ("P", "Q", "R", "S", "T")

# Fraction of subjects with an inverted T wave (a common morphology variant;
# negative deflections are never detector candidates).
T_INVERT_PROB = 0.35

BEAT_JITTER = 0.03


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic corpus (shared by all its subjects)."""

    n_subjects: int
    fs: float = 250.0
    duration_s: float = 60.0
    heart_rate_bpm: float = 60.0
    morphology_seed: int = 0
    noise_snr_db: float = math.inf
    baseline_drift_mv_per_s: float = 0.0
    pli_amplitude_mv: float = 0.0
    pli_freq_hz: float = 50.0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValidationError("n_subjects must be >= 1")
        if self.fs <= 0 or self.duration_s <= 0:
            raise ValidationError("fs and duration_s must be positive")
        if not (40.0 <= self.heart_rate_bpm <= 180.0):
            raise ValidationError("heart_rate_bpm must be in [40, 180]")
        if self.pli_freq_hz not in (50.0, 60.0):
            raise ValidationError("pli_freq_hz must be 50 or 60")
        if self.fs < 4 * self.pli_freq_hz:
            raise ValidationError("fs must be >= 4 x pli_freq_hz")
        if self.duration_s <= 2 * (60.0 / self.heart_rate_bpm):
            raise ValidationError("duration_s must exceed two heartbeat intervals")
        if self.pli_amplitude_mv < 0:
            raise ValidationError("pli_amplitude_mv must be >= 0")
        if self.morphology_seed < 0:
            raise ValidationError("morphology_seed must be >= 0")


def _morphology(spec: SynthSpec, subject_index: int) -> dict:
    """Draw the subject's fixed PQRST template parameters (one rng, fixed order)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.morphology_seed, subject_index]))
    waves = {}
    for name in _WAVE_ORDER:
        c_lo, c_hi, a_lo, a_hi, s_lo, s_hi = _WAVE_RANGES[name]
        waves[name] = (
            rng.uniform(c_lo, c_hi),
            rng.uniform(a_lo, a_hi),
            rng.uniform(s_lo, s_hi),
        )
    if rng.random() < T_INVERT_PROB:
        center, amp, sigma = waves["T"]
        waves["T"] = (center, -amp, sigma)
    return waves


def beat_template(spec: SynthSpec, subject_index: int, span_s=(-0.4, 0.5)) -> np.ndarray:
    """Sample one noise-free beat of a subject's template on the spec's grid.

    Useful for morphology comparisons (normalized cross-correlation between
    subjects) without generating full records.
    """
    _check_subject(spec, subject_index)
    waves = _morphology(spec, subject_index)
    t = np.arange(round(span_s[0] * spec.fs), round(span_s[1] * spec.fs) + 1) / spec.fs
    out = np.zeros_like(t)
    for center, amp, sigma in waves.values():
        out += amp * np.exp(-0.5 * ((t - center) / sigma) ** 2)
    return out


def template_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Peak normalized cross-correlation between two equal-grid templates."""
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0:
        return 0.0
    return float(np.max(np.correlate(a, b, mode="full")) / denom)


def _check_subject(spec: SynthSpec, subject_index: int) -> None:
    if not (0 <= subject_index < spec.n_subjects):
        raise ValidationError(
            f"subject_index {subject_index} out of range for {spec.n_subjects} subjects"
        )


def synth_ecg(spec: SynthSpec, subject_index: int, variant: int = 0) -> EcgRecord:
    """Generate one record; bit-deterministic given (spec, subject_index, variant).

    Morphology depends only on (morphology_seed, subject_index); the beat
    jitter, tone phase, and noise realization also depend on ``variant``, so
    distinct variants model repeat acquisitions of the same subject.
    """
    _check_subject(spec, subject_index)
    if variant < 0:
        raise ValidationError("variant must be >= 0")
    waves = _morphology(spec, subject_index)
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.morphology_seed, subject_index, variant])
    )

    period = 60.0 / spec.heart_rate_bpm
    beats = [0.5 * period]
    while True:
        step = period * (1.0 + rng.uniform(-BEAT_JITTER, BEAT_JITTER))
        nxt = beats[-1] + step
        if nxt >= spec.duration_s:
            break
        beats.append(nxt)
    beats = np.array(beats)

    n = int(round(spec.duration_s * spec.fs)) + 1
    t = np.arange(n) / spec.fs
    clean = np.zeros(n)
    for center, amp, sigma in waves.values():
        half = 5.0 * sigma
        for b in beats:
            lo = max(0, int(math.floor((b + center - half) * spec.fs)))
            hi = min(n, int(math.ceil((b + center + half) * spec.fs)) + 1)
            if lo < hi:
                clean[lo:hi] += amp * np.exp(-0.5 * ((t[lo:hi] - b - center) / sigma) ** 2)

    out = clean.copy()
    out += spec.baseline_drift_mv_per_s * t
    phase = rng.uniform(0.0, 2.0 * math.pi)
    if spec.pli_amplitude_mv > 0:
        out += spec.pli_amplitude_mv * np.sin(2.0 * math.pi * spec.pli_freq_hz * t + phase)
    if math.isfinite(spec.noise_snr_db):
        p_signal = float(np.mean(clean**2))
        sigma_n = math.sqrt(p_signal / (10.0 ** (spec.noise_snr_db / 10.0)))
        out += rng.normal(0.0, sigma_n, n)

    return EcgRecord(
        subject_id=f"s{subject_index + 1:02d}",
        fs=spec.fs,
        samples=out,
        lead="I",
        stage=STAGE_RAW,
        rpeak_times=beats,
    )
