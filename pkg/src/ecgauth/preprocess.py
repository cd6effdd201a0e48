"""Signal conditioning: polynomial detrend, spectral notch, flip correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .records import STAGE_PREPROCESSED, EcgRecord

FLIP_TIE_EPS = 1e-12


@dataclass(frozen=True)
class PreprocessConfig:
    poly_order: int = 5
    pli_freq_hz: float = 50.0
    pli_bandwidth_hz: float = 1.0
    flip_check: bool = True

    def __post_init__(self):
        if not (0 <= self.poly_order <= 10):
            raise ValidationError("poly_order must be in [0, 10]")
        if self.pli_freq_hz not in (50.0, 60.0):
            raise ValidationError("pli_freq_hz must be 50 or 60")
        if not (0 < self.pli_bandwidth_hz < self.pli_freq_hz / 2):
            raise ValidationError("pli_bandwidth_hz must be in (0, pli_freq_hz/2)")


def remove_baseline(record: EcgRecord, order: int) -> EcgRecord:
    """Subtract the least-squares polynomial trend of the given order.

    The fit runs on time normalized to [-1, 1] for conditioning; the trend
    (including its constant term) is removed, so a constant input with
    order 0 maps to zero.
    """
    if order < 0:
        raise ValidationError("order must be >= 0")
    n = record.n_samples
    if n <= order + 1:
        raise ValidationError(f"need more than order+1={order + 1} samples, got {n}")
    t = np.arange(n) / record.fs
    # Polynomial.fit maps t onto the [-1, 1] window internally.
    poly, diagnostics = np.polynomial.Polynomial.fit(t, record.samples, order, full=True)
    rank = diagnostics[1]
    if rank < order + 1:
        raise NumericalError(f"rank-deficient polynomial fit (rank {rank}, order {order})")
    return record.with_samples(record.samples - poly(t))


def remove_pli(record: EcgRecord, freq_hz: float, bandwidth_hz: float) -> EcgRecord:
    """Zero all DFT bins within [freq-bw, freq+bw] (and the mirror band)."""
    if bandwidth_hz <= 0:
        raise ValidationError("bandwidth_hz must be > 0")
    if freq_hz - bandwidth_hz <= 0:
        raise ValidationError("notch band must not reach DC")
    if freq_hz + bandwidth_hz >= record.fs / 2:
        raise ValidationError(
            f"notch band [{freq_hz - bandwidth_hz}, {freq_hz + bandwidth_hz}] reaches Nyquist "
            f"{record.fs / 2}"
        )
    spectrum = np.fft.fft(record.samples)
    freqs = np.fft.fftfreq(record.n_samples, d=1.0 / record.fs)
    band = np.abs(np.abs(freqs) - freq_hz) <= bandwidth_hz
    spectrum[band] = 0.0
    filtered = np.fft.ifft(spectrum)
    signal_norm = float(np.linalg.norm(record.samples))
    if signal_norm > 0:
        residue = float(np.linalg.norm(filtered.imag)) / signal_norm
        if residue >= 1e-9:
            raise NumericalError(f"imaginary residue {residue:.3e} after inverse transform")
    return record.with_samples(filtered.real)


def correct_flip(record: EcgRecord) -> tuple[EcgRecord, bool]:
    """Negate the record when the dominant deflection is negative.

    Flip statistic is max+min; expects an (approximately) zero-mean input.
    Ties (|statistic| < 1e-12) resolve to not-flipped.
    """
    stat = float(record.samples.max() + record.samples.min())
    if stat < 0 and abs(stat) >= FLIP_TIE_EPS:
        return record.with_samples(-record.samples), True
    return record, False


def preprocess_pipeline(record: EcgRecord, config: PreprocessConfig) -> EcgRecord:
    """Baseline removal, then PLI notch, then optional flip correction."""
    out = remove_baseline(record, config.poly_order)
    out = remove_pli(out, config.pli_freq_hz, config.pli_bandwidth_hz)
    if config.flip_check:
        out, _ = correct_flip(out)
    return out.with_samples(out.samples, stage=STAGE_PREPROCESSED)
