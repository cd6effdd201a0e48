import io

import numpy as np
import pytest

from conftest import corpus_specs
from ecgauth.config import toolkit_config
from ecgauth.enrollment import (
    compute_ucl,
    enroll,
    load_db,
    merge_dbs,
    new_db,
    save_db,
)
from ecgauth.errors import (
    DuplicateEntityError,
    FormatError,
    InsufficientDataError,
    ValidationError,
    VersionError,
)
from ecgauth.synth import SynthSpec, synth_ecg
from ecgauth.tree import predict_many


def db_text(db) -> str:
    out = io.StringIO()
    save_db(db, out)
    return out.getvalue()


# ---------------------------------------------------------------- compute_ucl

def test_ucl_zero_variance():
    assert compute_ucl([1.0, 1.0, 1.0], 3.0) == pytest.approx(1.0)


def test_ucl_two_points():
    assert compute_ucl([0.0, 2.0], 1.0) == pytest.approx(1.0 + np.sqrt(2.0), abs=1e-12)


def test_ucl_five_points():
    # mean 3, sample std sqrt(10/4); frozen from direct arithmetic
    expected = 3.0 + 3.0 * np.sqrt(2.5)
    assert compute_ucl([1.0, 2.0, 3.0, 4.0, 5.0], 3.0) == pytest.approx(expected, abs=1e-12)
    assert compute_ucl([1.0, 2.0, 3.0, 4.0, 5.0], 3.0) == pytest.approx(7.743416490252569)


def test_ucl_requires_two_points():
    with pytest.raises(ValidationError):
        compute_ucl([1.0], 3.0)


# ---------------------------------------------------------------- enroll

def test_enroll_builds_models():
    train_spec, _ = corpus_specs(1)
    db = new_db(toolkit_config())
    for si in range(5):
        record = synth_ecg(train_spec, si)
        enroll(db, record.subject_id, record)
    assert len(db.models) == 5
    windows = {m.window_s for m in db.models.values()}
    assert windows == {0.6}
    for model in db.models.values():
        assert model.ucl_mse == pytest.approx(
            model.mean_mse + model.ucl_k * model.std_mse, rel=1e-12
        )
        assert model.n_slices >= 2


def test_enroll_short_record_rejected():
    db = new_db(toolkit_config())
    spec = SynthSpec(n_subjects=1, fs=250.0, duration_s=10.0, morphology_seed=1)
    with pytest.raises(InsufficientDataError):
        enroll(db, "s01", synth_ecg(spec, 0))


def test_enroll_duplicate_guard_and_replace():
    train_spec, _ = corpus_specs(2)
    db = new_db(toolkit_config())
    record = synth_ecg(train_spec, 0)
    enroll(db, "x", record)
    with pytest.raises(DuplicateEntityError):
        enroll(db, "x", record)
    enroll(db, "x", record, replace=True)
    assert len(db.models) == 1


def test_noise_free_training_residuals_are_tight():
    # beats fall at arbitrary sub-sample phases, so even noiseless slices
    # deviate from the per-offset mean on the steep QRS flanks; residual MSEs
    # stay ~2 orders below signal power with no wild per-slice outliers
    spec = SynthSpec(n_subjects=1, fs=250.0, duration_s=52.0, heart_rate_bpm=75.0,
                     morphology_seed=3)
    db = new_db(toolkit_config())
    record = synth_ecg(spec, 0)
    enroll(db, "s01", record)
    model = db.models["s01"]
    signal_power = float(np.mean(record.samples**2))
    assert model.mean_mse < 0.02 * signal_power
    assert model.std_mse < 1.5 * model.mean_mse


def test_own_training_slices_reproduce_mean_mse():
    from ecgauth.enrollment import feature_matrix, slice_mses
    from ecgauth.preprocess import preprocess_pipeline
    from ecgauth.slicing import detect_r_peaks, slice_record

    train_spec, _ = corpus_specs(4)
    db = new_db(toolkit_config())
    record = synth_ecg(train_spec, 0)
    enroll(db, "s01", record)
    model = db.models["s01"]
    config = db.config

    prepared = preprocess_pipeline(record.truncated(config.train_period_s), config.preprocess)
    ss = slice_record(prepared, detect_r_peaks(prepared), config.window_s, config.anchor_fraction)
    X = feature_matrix(ss, config.beat_features)[:, list(model.feature_indices)]
    mses = slice_mses(model.tree, ss, X)
    assert float(mses.mean()) == pytest.approx(model.mean_mse, rel=1e-12)


def test_config_mismatch_rejected():
    db = new_db(toolkit_config())
    other = toolkit_config({"window_s": 0.4})
    train_spec, _ = corpus_specs(5)
    with pytest.raises(ValidationError):
        enroll(db, "a", synth_ecg(train_spec, 0), config=other)


def test_beat_feature_hook_selects_by_mutual_information():
    # with beat-local statistics enabled the offset column must outrank the
    # per-slice aggregates and stay in the selected set
    train_spec, test_spec = corpus_specs(9)
    db = new_db(toolkit_config({"beat_features": True, "feature_top_k": 2}))
    for si in range(3):
        record = synth_ecg(train_spec, si)
        enroll(db, record.subject_id, record)
    for model in db.models.values():
        assert len(model.feature_indices) == 2
        assert 0 in model.feature_indices
        assert set(model.feature_indices) <= {0, 1, 2}

    # the multi-feature db still authenticates and round-trips
    from ecgauth.authenticate import authenticate

    decision = authenticate(db, synth_ecg(test_spec, 1, variant=1))
    assert decision.outcome == "known"
    assert decision.best_id == "s02"
    loaded = load_db(io.StringIO(db_text(db)))
    assert loaded.models["s02"].feature_indices == db.models["s02"].feature_indices


# ---------------------------------------------------------------- persistence

@pytest.fixture(scope="module")
def enrolled_db():
    train_spec, _ = corpus_specs(6)
    db = new_db(toolkit_config())
    for si in range(10):
        record = synth_ecg(train_spec, si)
        enroll(db, record.subject_id, record)
    return db


def test_empty_db_roundtrips():
    db = new_db(toolkit_config())
    loaded = load_db(io.StringIO(db_text(db)))
    assert loaded == db


def test_db_roundtrip_field_for_field(enrolled_db):
    text = db_text(enrolled_db)
    loaded = load_db(io.StringIO(text))
    assert loaded.created == enrolled_db.created
    assert loaded.global_config == enrolled_db.global_config
    assert loaded.entity_ids() == enrolled_db.entity_ids()
    for entity_id, model in enrolled_db.models.items():
        reloaded = loaded.models[entity_id]
        assert reloaded.n_slices == model.n_slices
        assert reloaded.feature_indices == model.feature_indices
        assert reloaded.mean_mse == pytest.approx(model.mean_mse, rel=1e-11)
        assert reloaded.ucl_mse == pytest.approx(model.ucl_mse, rel=1e-11)
        assert reloaded.tree.n_nodes == model.tree.n_nodes


def test_saved_file_is_a_fixed_point(enrolled_db):
    # one save/load rounds reals to 12 significant digits; after that the
    # persisted form reproduces itself byte for byte
    text = db_text(enrolled_db)
    loaded = load_db(io.StringIO(text))
    assert db_text(loaded) == text


def test_roundtrip_preserves_predictions_on_probe_grid(enrolled_db):
    probes = np.linspace(0.0, 0.6, 10_000)
    text = db_text(enrolled_db)
    loaded = load_db(io.StringIO(text))
    again = load_db(io.StringIO(db_text(loaded)))
    for entity_id, model in loaded.models.items():
        a = predict_many(model.tree, probes)
        b = predict_many(again.models[entity_id].tree, probes)
        np.testing.assert_array_equal(a, b)
        # and the pre-save model agrees to serialization precision
        c = predict_many(enrolled_db.models[entity_id].tree, probes)
        np.testing.assert_allclose(a, c, rtol=1e-9)


def test_version_mismatch():
    with pytest.raises(VersionError):
        load_db(io.StringIO("AMGDB v99\ncreated=x\n"))


def test_not_a_db_file():
    with pytest.raises(FormatError):
        load_db(io.StringIO("hello world\n"))


def test_truncated_stream(enrolled_db):
    text = db_text(enrolled_db)
    cut = text[: int(len(text) * 0.6)].rsplit("\n", 1)[0]
    with pytest.raises(FormatError):
        load_db(io.StringIO(cut))


def test_node_count_mismatch(enrolled_db):
    lines = db_text(enrolled_db).splitlines()
    for i, line in enumerate(lines):
        if line.startswith("TREE "):
            parts = lines[i].split()
            parts[1] = str(int(parts[1]) + 2)
            lines[i] = " ".join(parts)
            break
    with pytest.raises(FormatError):
        load_db(io.StringIO("\n".join(lines) + "\n"))


# ---------------------------------------------------------------- merge

def test_merge_disjoint_dbs():
    train_spec, _ = corpus_specs(7)
    a = new_db(toolkit_config())
    b = new_db(toolkit_config())
    b.created = a.created
    b.global_config = dict(a.global_config)
    enroll(a, "s01", synth_ecg(train_spec, 0))
    enroll(b, "s02", synth_ecg(train_spec, 1))
    merged = merge_dbs(a, b)
    assert merged.entity_ids() == ["s01", "s02"]


def test_merge_collision_rejected():
    train_spec, _ = corpus_specs(8)
    a = new_db(toolkit_config())
    b = new_db(toolkit_config())
    b.global_config = dict(a.global_config)
    enroll(a, "same", synth_ecg(train_spec, 0))
    enroll(b, "same", synth_ecg(train_spec, 1))
    with pytest.raises(DuplicateEntityError):
        merge_dbs(a, b)


def test_merge_config_mismatch_rejected():
    a = new_db(toolkit_config())
    b = new_db(toolkit_config({"window_s": 0.4}))
    with pytest.raises(ValidationError):
        merge_dbs(a, b)
