"""Shannon entropy, conditional entropy, and mutual information (bits).

Probabilities are estimated with plain equal-width histograms; no bias
correction is applied, so estimates on independent data carry the usual
(Kx-1)(Ky-1)/(2 N ln 2) plug-in bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import NumericalError, ValidationError

PROB_TOL = 1e-9
RANGE_DATA_MIN_MAX = "data_min_max"


@dataclass(frozen=True)
class Pmf:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        _check_probs(probs)


@dataclass(frozen=True)
class JointPmf:
    """p(x, y) on a grid; rows index x outcomes, columns index y outcomes."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2:
            raise ValidationError("joint pmf must be a matrix")
        _check_probs(probs)

    def marginal_x(self) -> Pmf:
        return Pmf(self.probs.sum(axis=1))

    def marginal_y(self) -> Pmf:
        return Pmf(self.probs.sum(axis=0))


@dataclass(frozen=True)
class HistogramConfig:
    """Equal-width binning; range_policy is 'data_min_max' or a fixed (lo, hi)."""

    n_bins: int = 32
    range_policy: Union[str, tuple] = RANGE_DATA_MIN_MAX

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValidationError("n_bins must be >= 2")
        if self.range_policy != RANGE_DATA_MIN_MAX:
            try:
                lo, hi = self.range_policy
            except (TypeError, ValueError):
                raise ValidationError(
                    f"range_policy must be 'data_min_max' or (lo, hi), got {self.range_policy!r}"
                ) from None
            if not (lo < hi):
                raise ValidationError("fixed range requires lo < hi")


def _check_probs(p: np.ndarray) -> None:
    if p.size == 0:
        raise ValidationError("pmf must be non-empty")
    if np.any(p < 0):
        raise ValidationError("probabilities must be >= 0")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise ValidationError(f"probabilities must sum to 1, got {total}")


def entropy(p: Pmf) -> float:
    """H(x) = -sum p log2 p, with the 0*log(0) = 0 convention."""
    probs = p.probs[p.probs > 0]
    return float(-np.sum(probs * np.log2(probs)))


def conditional_entropy(j: JointPmf) -> float:
    """H(x|y) = -sum_xy p(x,y) log2 p(x,y)/p(y); zero cells contribute 0."""
    p = j.probs
    py = p.sum(axis=0)
    mask = p > 0
    ratio = p / np.where(py > 0, py, 1.0)[np.newaxis, :]
    return float(-np.sum(p[mask] * np.log2(ratio[mask])))


def mutual_information(j: JointPmf) -> float:
    """I(x;y), computed from the double sum and cross-checked against H(x) - H(x|y)."""
    p = j.probs
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mask = p > 0
    outer = np.outer(px, py)
    i_sum = float(np.sum(p[mask] * np.log2(p[mask] / outer[mask])))
    i_chain = entropy(j.marginal_x()) - conditional_entropy(j)
    if abs(i_sum - i_chain) >= 1e-9:
        raise NumericalError(
            f"mutual information forms disagree: {i_sum} vs {i_chain}"
        )
    return i_sum


def bin_indices(xs: np.ndarray, cfg: HistogramConfig) -> tuple[np.ndarray, int]:
    """Map values to equal-width bin indices; the maximum lands in the last bin.

    Under a fixed range, out-of-range values are clipped into the edge bins so
    no mass is lost. Constant data under data_min_max occupies bin 0 only.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if cfg.range_policy == RANGE_DATA_MIN_MAX:
        lo, hi = float(xs.min()), float(xs.max())
    else:
        lo, hi = map(float, cfg.range_policy)
    if hi <= lo:
        return np.zeros(xs.shape, dtype=np.intp), 1
    idx = np.floor((xs - lo) / (hi - lo) * cfg.n_bins).astype(np.intp)
    np.clip(idx, 0, cfg.n_bins - 1, out=idx)
    return idx, cfg.n_bins


def _discrete_codes(ys) -> tuple[np.ndarray, int]:
    _, codes = np.unique(np.asarray(ys), return_inverse=True)
    codes = codes.astype(np.intp).ravel()
    return codes, int(codes.max()) + 1


def estimate_joint(xs: Sequence[float], ys, cfg: HistogramConfig) -> JointPmf:
    """Histogram-based joint pmf of (xs, ys).

    xs must be real-valued and is always binned per cfg; ys is binned likewise
    when real-valued (float dtype) and used directly as discrete labels otherwise.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys_arr = np.asarray(ys)
    if xs.ndim != 1 or xs.size == 0:
        raise ValidationError("xs must be a non-empty vector")
    if ys_arr.shape[0] != xs.size:
        raise ValidationError("xs and ys must have equal length")
    if not np.isfinite(xs).all():
        raise ValidationError("xs must be finite")

    xi, nx = bin_indices(xs, cfg)
    if ys_arr.dtype.kind in "fc":
        if not np.isfinite(ys_arr.astype(np.float64)).all():
            raise ValidationError("ys must be finite")
        yi, ny = bin_indices(ys_arr.astype(np.float64), cfg)
    else:
        yi, ny = _discrete_codes(ys_arr)

    counts = np.bincount(xi * ny + yi, minlength=nx * ny).reshape(nx, ny)
    return JointPmf(counts / xs.size)


def rank_features(features, labels, cfg: HistogramConfig) -> list[tuple[int, float]]:
    """Rank feature columns by estimated I(feature; label), descending.

    Returns (column index, score) pairs; ties break toward the lower index.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, np.newaxis]
    n, d = features.shape
    if n < 2 or d < 1:
        raise ValidationError("need at least 2 samples and 1 feature")
    scores = [mutual_information(estimate_joint(features[:, k], labels, cfg)) for k in range(d)]
    order = sorted(range(d), key=lambda k: (-scores[k], k))
    return [(k, scores[k]) for k in order]
