"""ECG biometric authentication toolkit.

Enrolls identities by fitting one regression-tree reference function per
subject from time-sliced, R-peak-anchored ECG windows, then authenticates
short recordings by mean-squared-error matching against the stored
references under control-limit thresholds.
"""

__version__ = "0.1.0"

from .authenticate import (
    KNOWN,
    REJECTED,
    UNKNOWN,
    AuthDecision,
    ConfusionMatrix,
    Metrics,
    authenticate,
    metrics,
    run_trials,
)
from .config import ToolkitConfig, default_config, toolkit_config
from .enrollment import (
    EnrollmentDb,
    ReferenceModel,
    compute_ucl,
    enroll,
    load_db,
    load_db_path,
    merge_dbs,
    new_db,
    save_db,
    save_db_path,
)
from .errors import (
    DuplicateEntityError,
    EcgAuthError,
    EmptyDetectionError,
    EmptySliceSetError,
    EnrollmentError,
    FormatError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    ValidationError,
    VersionError,
)
from .infotheory import (
    HistogramConfig,
    JointPmf,
    Pmf,
    conditional_entropy,
    entropy,
    estimate_joint,
    mutual_information,
    rank_features,
)
from .preprocess import (
    PreprocessConfig,
    correct_flip,
    preprocess_pipeline,
    remove_baseline,
    remove_pli,
)
from .records import EcgRecord, read_record, read_record_path, write_record, write_record_path
from .slicing import SliceSet, TrainingTable, detect_r_peaks, slice_record, to_training_table
from .sweep import SweepCorpus, SweepCurve, SweepPlan, emit_curve, parse_curve, run_sweep
from .synth import SynthSpec, beat_template, synth_ecg, template_correlation
from .tree import TreeModel, TreeParams, evaluate, fit, predict, predict_many
