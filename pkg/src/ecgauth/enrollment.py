"""Building and persisting the per-identity reference function database.

Enrollment runs preprocess -> peak detection -> slicing -> tree fit on the
first ``train_period_s`` seconds of a record, then stores the tree together
with per-slice residual MSE statistics and their upper control limit
(mean + k * sample std).

DB file format (AMGDB v1, UTF-8, LF):
  line 1: ``AMGDB v1``
  line 2: ``created=<iso>`` followed by the sorted global config ``key=value`` pairs
  per entity: ``ENTITY <id>``, ``STATS mean= std= ucl= k= n= fs= features=``,
  ``TREE <n_nodes> rmse= mae= n=``, one node line per preorder node
  (``I <feature> <threshold>`` / ``L <prediction> <n_train>``), ``END``.
Reals carry 12 significant digits, so a loaded db re-saves byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Optional

import numpy as np

from . import tree as dtree
from .config import ToolkitConfig, config_line, parse_config_line, toolkit_config
from .errors import (
    DuplicateEntityError,
    EmptyDetectionError,
    EmptySliceSetError,
    EnrollmentError,
    FormatError,
    InsufficientDataError,
    ValidationError,
    VersionError,
)
from .infotheory import rank_features
from .preprocess import preprocess_pipeline
from .records import EcgRecord
from .slicing import SliceSet, detect_r_peaks, slice_record

DB_MAGIC = "AMGDB"
DB_VERSION = 1

DURATION_TOL = 1e-9


def fmt12(x: float) -> str:
    return format(float(x), ".12g")


@dataclass(frozen=True)
class ReferenceModel:
    """One enrolled identity: its regression tree plus residual statistics."""

    entity_id: str
    tree: dtree.TreeModel
    window_s: float
    anchor_fraction: float
    fs_train: float
    mean_mse: float
    std_mse: float
    n_slices: int
    ucl_mse: float
    ucl_k: float
    feature_indices: tuple = (0,)

    def __post_init__(self):
        if self.n_slices < 2:
            raise ValidationError("residual statistics require at least 2 slices")


@dataclass
class EnrollmentDb:
    """entity_id -> ReferenceModel map plus the config everything was built with."""

    version: int
    created: str
    global_config: dict
    models: dict = field(default_factory=dict)

    @property
    def config(self) -> ToolkitConfig:
        return toolkit_config(self.global_config)

    def entity_ids(self) -> list[str]:
        return sorted(self.models)


def new_db(config: Optional[ToolkitConfig] = None) -> EnrollmentDb:
    config = config or toolkit_config()
    created = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return EnrollmentDb(version=DB_VERSION, created=created, global_config=dict(config.flat))


def compute_ucl(residual_mses, k: float) -> float:
    """Upper control limit: mean + k * sample std (n-1 denominator)."""
    mses = np.asarray(residual_mses, dtype=np.float64)
    if mses.size < 2:
        raise ValidationError("need at least 2 residual MSEs")
    return float(mses.mean() + k * mses.std(ddof=1))


def feature_matrix(ss: SliceSet, beat_features: bool) -> np.ndarray:
    """Per-sample feature columns: offset, and optionally beat-local stats.

    Column 0 is always the within-window offset. With beat features enabled,
    columns 1 and 2 carry each sample's slice mean and slice RMS, so the tree
    can condition on beat-level amplitude scale.
    """
    offsets = np.tile(np.arange(ss.row_length) / ss.fs, ss.n_slices)
    if not beat_features:
        return offsets[:, np.newaxis]
    means = np.repeat(ss.slices.mean(axis=1), ss.row_length)
    rms = np.repeat(np.sqrt(np.mean(ss.slices**2, axis=1)), ss.row_length)
    return np.column_stack([offsets, means, rms])


def _select_features(X: np.ndarray, y: np.ndarray, config: ToolkitConfig) -> tuple:
    if X.shape[1] == 1:
        return (0,)
    ranking = rank_features(X, y, config.histogram)
    top = sorted(index for index, _ in ranking[: config.feature_top_k])
    return tuple(top)


def slice_mses(model: dtree.TreeModel, ss: SliceSet, X: np.ndarray) -> np.ndarray:
    """Mean squared residual of the tree on each slice row."""
    residuals = dtree.predict_many(model, X) - ss.slices.ravel()
    return (residuals.reshape(ss.n_slices, ss.row_length) ** 2).mean(axis=1)


def enroll(
    db: EnrollmentDb,
    entity_id: str,
    record: EcgRecord,
    config: Optional[ToolkitConfig] = None,
    replace: bool = False,
) -> EnrollmentDb:
    """Fit and store the entity's reference model; returns the updated db."""
    if config is not None and config.flat != db.global_config:
        raise ValidationError("config does not match the database's global config")
    config = db.config
    if entity_id in db.models and not replace:
        raise DuplicateEntityError(f"entity {entity_id!r} already enrolled")
    if record.duration_seconds + DURATION_TOL < config.train_period_s:
        raise InsufficientDataError(
            f"record is {record.duration_seconds:.3f} s, need {config.train_period_s} s"
        )
    prepared = preprocess_pipeline(record.truncated(config.train_period_s), config.preprocess)
    try:
        peaks = detect_r_peaks(prepared)
        ss = slice_record(prepared, peaks, config.window_s, config.anchor_fraction)
    except (EmptyDetectionError, EmptySliceSetError) as exc:
        raise EnrollmentError(f"enrollment of {entity_id!r} failed: {exc}") from exc
    if ss.n_slices < 2:
        raise EnrollmentError(f"enrollment of {entity_id!r} failed: only one usable slice")

    X_full = feature_matrix(ss, config.beat_features)
    y = ss.slices.ravel()
    selected = _select_features(X_full, y, config)
    X = X_full[:, list(selected)]
    model = dtree.fit(X, y, config.tree)
    mses = slice_mses(model, ss, X)

    db.models[entity_id] = ReferenceModel(
        entity_id=entity_id,
        tree=model,
        window_s=config.window_s,
        anchor_fraction=config.anchor_fraction,
        fs_train=prepared.fs,
        mean_mse=float(mses.mean()),
        std_mse=float(mses.std(ddof=1)),
        n_slices=int(ss.n_slices),
        ucl_mse=compute_ucl(mses, config.ucl_k),
        ucl_k=config.ucl_k,
        feature_indices=selected,
    )
    return db


def merge_dbs(a: EnrollmentDb, b: EnrollmentDb) -> EnrollmentDb:
    """Combine two partial databases built with identical configs."""
    if a.version != b.version:
        raise VersionError(f"version mismatch: {a.version} vs {b.version}")
    if a.global_config != b.global_config:
        raise ValidationError("cannot merge databases with different global configs")
    collisions = set(a.models) & set(b.models)
    if collisions:
        raise DuplicateEntityError(f"entity ids in both databases: {sorted(collisions)}")
    merged = EnrollmentDb(
        version=a.version, created=a.created, global_config=dict(a.global_config)
    )
    merged.models.update(a.models)
    merged.models.update(b.models)
    return merged


def _write_node(node: dtree.Node, out: list) -> None:
    if isinstance(node, dtree.Leaf):
        out.append(f"L {fmt12(node.prediction)} {node.n_train}")
    else:
        out.append(f"I {node.feature} {fmt12(node.threshold)}")
        _write_node(node.left, out)
        _write_node(node.right, out)


def save_db(db: EnrollmentDb, stream: IO[str]) -> None:
    stream.write(f"{DB_MAGIC} v{db.version}\n")
    stream.write(f"created={db.created} {config_line(db.global_config)}\n")
    for entity_id in sorted(db.models):
        model = db.models[entity_id]
        stream.write(f"ENTITY {entity_id}\n")
        stream.write(
            "STATS "
            f"mean={fmt12(model.mean_mse)} std={fmt12(model.std_mse)} "
            f"ucl={fmt12(model.ucl_mse)} k={fmt12(model.ucl_k)} n={model.n_slices} "
            f"fs={fmt12(model.fs_train)} "
            f"features={','.join(str(i) for i in model.feature_indices)}\n"
        )
        stats = model.tree.train_stats
        stream.write(
            f"TREE {model.tree.n_nodes} rmse={fmt12(stats.rmse)} mae={fmt12(stats.mae)} "
            f"n={stats.n}\n"
        )
        lines: list = []
        _write_node(model.tree.root, lines)
        stream.write("\n".join(lines) + "\n")
        stream.write("END\n")


def save_db_path(db: EnrollmentDb, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        save_db(db, fh)


def _tokens_to_dict(tokens, line_no: int) -> dict:
    out = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(f"line {line_no}: expected key=value token, got {token!r}")
        out[key] = value
    return out


class _Lines:
    def __init__(self, stream: IO[str]):
        self._it = iter(stream)
        self.line_no = 0

    def next(self, context: str) -> str:
        for raw in self._it:
            self.line_no += 1
            line = raw.rstrip("\n")
            if line.strip():
                return line
        raise FormatError(f"truncated stream while reading {context}")

    def next_or_none(self) -> Optional[str]:
        for raw in self._it:
            self.line_no += 1
            line = raw.rstrip("\n")
            if line.strip():
                return line
        return None


def _parse_node(lines: _Lines, remaining: list) -> dtree.Node:
    if remaining[0] <= 0:
        raise FormatError(f"line {lines.line_no}: more nodes than declared")
    remaining[0] -= 1
    line = lines.next("tree node")
    parts = line.split()
    try:
        if parts[0] == "L" and len(parts) == 3:
            return dtree.Leaf(float(parts[1]), int(parts[2]))
        if parts[0] == "I" and len(parts) == 3:
            feature, threshold = int(parts[1]), float(parts[2])
            left = _parse_node(lines, remaining)
            right = _parse_node(lines, remaining)
            return dtree.Internal(feature, threshold, left, right)
    except ValueError:
        pass
    raise FormatError(f"line {lines.line_no}: bad tree node line {line!r}")


def load_db(stream: IO[str]) -> EnrollmentDb:
    lines = _Lines(stream)
    magic = lines.next("header")
    parts = magic.split()
    if len(parts) != 2 or parts[0] != DB_MAGIC or not parts[1].startswith("v"):
        raise FormatError(f"not an {DB_MAGIC} file: {magic!r}")
    if parts[1] != f"v{DB_VERSION}":
        raise VersionError(f"unsupported version {parts[1]!r}, expected v{DB_VERSION}")

    header = lines.next("config line").split()
    fields = _tokens_to_dict(header, lines.line_no)
    if "created" not in fields:
        raise FormatError("config line is missing the created timestamp")
    created = fields.pop("created")
    config = parse_config_line(" ".join(f"{k}={v}" for k, v in fields.items()))
    db = EnrollmentDb(version=DB_VERSION, created=created, global_config=config)
    cfg = db.config

    while True:
        line = lines.next_or_none()
        if line is None:
            break
        if not line.startswith("ENTITY "):
            raise FormatError(f"line {lines.line_no}: expected ENTITY, got {line!r}")
        entity_id = line[len("ENTITY ") :].strip()

        stats_line = lines.next("STATS line")
        if not stats_line.startswith("STATS "):
            raise FormatError(f"line {lines.line_no}: expected STATS, got {stats_line!r}")
        stats = _tokens_to_dict(stats_line.split()[1:], lines.line_no)

        tree_line = lines.next("TREE line")
        tree_parts = tree_line.split()
        if tree_parts[0] != "TREE" or len(tree_parts) < 2:
            raise FormatError(f"line {lines.line_no}: expected TREE, got {tree_line!r}")
        try:
            n_nodes = int(tree_parts[1])
        except ValueError:
            raise FormatError(f"line {lines.line_no}: bad node count in {tree_line!r}") from None
        tree_stats = _tokens_to_dict(tree_parts[2:], lines.line_no)

        remaining = [n_nodes]
        root = _parse_node(lines, remaining)
        if remaining[0] != 0:
            raise FormatError(f"line {lines.line_no}: tree has fewer nodes than declared")

        end = lines.next("END terminator")
        if end.strip() != "END":
            raise FormatError(f"line {lines.line_no}: expected END, got {end!r}")

        try:
            features = tuple(int(t) for t in stats["features"].split(","))
            model = dtree.TreeModel(
                root=root,
                n_features=len(features),
                train_stats=dtree.TrainStats(
                    rmse=float(tree_stats["rmse"]),
                    mae=float(tree_stats["mae"]),
                    n=int(tree_stats["n"]),
                ),
            )
            db.models[entity_id] = ReferenceModel(
                entity_id=entity_id,
                tree=model,
                window_s=cfg.window_s,
                anchor_fraction=cfg.anchor_fraction,
                fs_train=float(stats["fs"]),
                mean_mse=float(stats["mean"]),
                std_mse=float(stats["std"]),
                n_slices=int(stats["n"]),
                ucl_mse=float(stats["ucl"]),
                ucl_k=float(stats["k"]),
                feature_indices=features,
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"entity {entity_id!r}: bad or missing field ({exc})") from None
    return db


def load_db_path(path) -> EnrollmentDb:
    with open(path, "r", encoding="utf-8") as fh:
        return load_db(fh)
