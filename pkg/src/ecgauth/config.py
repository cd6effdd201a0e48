"""Flat key=value configuration: defaults, file parsing, and merge order.

Precedence is defaults <- config file <- CLI flags. Unknown keys are
rejected so typos fail loudly. The same flat dict is what an enrollment
database persists as its global config line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import ValidationError
from .infotheory import RANGE_DATA_MIN_MAX, HistogramConfig
from .preprocess import PreprocessConfig
from .tree import TreeParams

_BOOL_TRUE = {"true", "1", "yes", "on"}
_BOOL_FALSE = {"false", "0", "no", "off"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _BOOL_TRUE:
        return True
    if low in _BOOL_FALSE:
        return False
    raise ValidationError(f"expected boolean, got {text!r}")


def _parse_opt_int(text: str) -> Optional[int]:
    return None if text.strip().lower() == "none" else int(text)


# key -> (default, parser)
SCHEMA = {
    "poly_order": (5, int),
    "pli_freq_hz": (50.0, float),
    "pli_bandwidth_hz": (1.0, float),
    "flip_check": (True, _parse_bool),
    "window_s": (0.6, float),
    "anchor_fraction": (0.25, float),
    "min_leaf": (4, int),
    "max_depth": (None, _parse_opt_int),
    "min_gain": (0.0, float),
    "ucl_k": (3.0, float),
    "train_period_s": (50.0, float),
    "test_period_s": (15.0, float),
    "gate_limit_factor": (4.0, float),
    "mi_bins": (32, int),
    "mi_range_policy": (RANGE_DATA_MIN_MAX, str),
    "beat_features": (False, _parse_bool),
    "feature_top_k": (2, int),
}


def default_config() -> dict:
    return {key: default for key, (default, _) in SCHEMA.items()}


def coerce(key: str, value) -> object:
    if key not in SCHEMA:
        raise ValidationError(f"unknown config key {key!r}")
    if isinstance(value, str):
        try:
            return SCHEMA[key][1](value)
        except ValueError:
            raise ValidationError(f"bad value for {key}: {value!r}") from None
    return value


def parse_config_lines(lines, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines (blank lines and # comments allowed)."""
    out = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = coerce(key.strip(), value.strip())
    return out


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_lines(fh, source=str(path))


def merged_config(*layers: dict) -> dict:
    """Overlay config dicts onto the defaults; later layers win."""
    out = default_config()
    for layer in layers:
        for key, value in layer.items():
            out[key] = coerce(key, value)
    return out


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def config_line(cfg: dict) -> str:
    """One-line, sorted ``key=value`` rendering (the DB file's config line)."""
    return " ".join(f"{key}={format_value(cfg[key])}" for key in sorted(cfg))


def parse_config_line(line: str) -> dict:
    out = {}
    for token in line.split():
        key, _, value = token.partition("=")
        out[key] = coerce(key, value)
    return out


@dataclass(frozen=True)
class ToolkitConfig:
    """Typed view over the flat config dict."""

    preprocess: PreprocessConfig
    window_s: float
    anchor_fraction: float
    tree: TreeParams
    histogram: HistogramConfig
    ucl_k: float
    train_period_s: float
    test_period_s: float
    gate_limit_factor: float
    beat_features: bool
    feature_top_k: int
    flat: dict

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValidationError("window_s must be > 0")
        if not (0 <= self.anchor_fraction < 1):
            raise ValidationError("anchor_fraction must be in [0, 1)")
        if self.train_period_s <= 0 or self.test_period_s <= 0:
            raise ValidationError("sampling time periods must be > 0")
        if self.gate_limit_factor <= 0:
            raise ValidationError("gate_limit_factor must be > 0")
        if self.feature_top_k < 1:
            raise ValidationError("feature_top_k must be >= 1")


def _range_policy(text: str):
    if text == RANGE_DATA_MIN_MAX:
        return text
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValidationError(f"mi_range_policy must be 'data_min_max' or 'lo:hi', got {text!r}")
    return (float(lo), float(hi))


def toolkit_config(flat: Optional[dict] = None) -> ToolkitConfig:
    cfg = merged_config(flat or {})
    return ToolkitConfig(
        preprocess=PreprocessConfig(
            poly_order=cfg["poly_order"],
            pli_freq_hz=cfg["pli_freq_hz"],
            pli_bandwidth_hz=cfg["pli_bandwidth_hz"],
            flip_check=cfg["flip_check"],
        ),
        window_s=cfg["window_s"],
        anchor_fraction=cfg["anchor_fraction"],
        tree=TreeParams(
            min_leaf=cfg["min_leaf"],
            max_depth=cfg["max_depth"],
            min_gain=cfg["min_gain"],
        ),
        histogram=HistogramConfig(
            n_bins=cfg["mi_bins"],
            range_policy=_range_policy(cfg["mi_range_policy"]),
        ),
        ucl_k=cfg["ucl_k"],
        train_period_s=cfg["train_period_s"],
        test_period_s=cfg["test_period_s"],
        gate_limit_factor=cfg["gate_limit_factor"],
        beat_features=cfg["beat_features"],
        feature_top_k=cfg["feature_top_k"],
        flat=cfg,
    )
