import numpy as np
import pytest

from ecgauth.config import toolkit_config
from ecgauth.enrollment import enroll, new_db
from ecgauth.synth import SynthSpec, synth_ecg

# Standard experiment corpus: 10 enrolled subjects + 2 held-out unknowns,
# SNR 20 dB, 0.05 mV/s drift, 0.1 mV PLI at 50 Hz, hr 90 (so the window grid
# spans both sub-beat and beat-overlapping slicing regimes).
CORPUS_HR = 90.0
CORPUS_FS = 250.0
N_ENROLLED = 10
N_SUBJECTS = 12


def corpus_specs(seed: int, train_duration_s: float = 50.0, test_duration_s: float = 16.0):
    common = dict(
        n_subjects=N_SUBJECTS,
        fs=CORPUS_FS,
        heart_rate_bpm=CORPUS_HR,
        morphology_seed=seed,
        noise_snr_db=20.0,
        baseline_drift_mv_per_s=0.05,
        pli_amplitude_mv=0.1,
        pli_freq_hz=50.0,
    )
    train = SynthSpec(duration_s=train_duration_s, **common)
    test = SynthSpec(duration_s=test_duration_s, **common)
    return train, test


def build_corpus(seed: int, n_test_variants: int = 1):
    """(enroll records, labeled trials) for one seed of the standard corpus."""
    train_spec, test_spec = corpus_specs(seed)
    enroll_records = [synth_ecg(train_spec, si, variant=0) for si in range(N_ENROLLED)]
    trials = []
    for si in range(N_SUBJECTS):
        for v in range(1, n_test_variants + 1):
            record = synth_ecg(test_spec, si, variant=v)
            label = f"known:{record.subject_id}" if si < N_ENROLLED else "unknown"
            trials.append((record, label))
    return enroll_records, trials


def build_db(seed: int, flat_config: dict | None = None):
    db = new_db(toolkit_config(flat_config or {}))
    enroll_records, trials = build_corpus(seed)
    for record in enroll_records:
        enroll(db, record.subject_id, record)
    return db, trials


def match_peaks(detected_s, truth_s, tol_s=0.010):
    """Greedy one-to-one matching; returns (tp, fp, fn)."""
    truth = np.asarray(truth_s, dtype=float)
    used = np.zeros(truth.size, dtype=bool)
    tp = 0
    for t in np.asarray(detected_s, dtype=float):
        if truth.size == 0:
            break
        gaps = np.abs(truth - t)
        j = int(np.argmin(gaps))
        if gaps[j] <= tol_s and not used[j]:
            used[j] = True
            tp += 1
    return tp, len(detected_s) - tp, truth.size - tp


@pytest.fixture(scope="session")
def small_db():
    """One enrolled 4-subject db shared by read-only tests."""
    train_spec, _ = corpus_specs(11)
    db = new_db(toolkit_config())
    for si in range(4):
        record = synth_ecg(train_spec, si, variant=0)
        enroll(db, record.subject_id, record)
    return db
