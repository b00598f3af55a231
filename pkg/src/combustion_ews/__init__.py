"""Early-warning detection of thermoacoustic combustion instabilities from
single-channel dynamic pressure data.

Pipeline: high-pass filtering, delay embedding, windowed recurrence
quantification with trend slopes, and a soft-margin RBF support vector
machine trained by sequential minimal optimization, with a detrended
fluctuation analysis (Hurst exponent) baseline for comparison.
"""

from .dfa import HurstEstimate, dfa_fluctuation, hurst_exponent
from .embedding import (
    DegenerateSignalError,
    EmbeddingConfig,
    StateVectors,
    cao_dimension,
    cao_e1,
    embed,
    estimate_delay,
)
from .evaluation import (
    EvalReport,
    RocCurve,
    SearchSpace,
    cross_validate,
    f_score,
    permutation_importance,
    random_search,
    roc_curve,
    threshold_for_fpr,
    train_on_runs,
)
from .features import (
    FEATURE_NAMES,
    FeatureScaler,
    FeatureSeries,
    FeatureVector,
    StreamingFeatureAssembler,
    assemble_features,
    sweep_measures,
    trend_slope,
)
from .labeling import (
    LABEL_EXCLUDED,
    LABEL_FAR,
    LABEL_TRANSIENT,
    InstabilityInterval,
    LabeledRun,
    detect_intervals,
    label_features,
)
from .rqa import (
    RecurrenceConfig,
    RecurrenceMatrix,
    RqaMeasures,
    recurrence_from_window,
    recurrence_matrix,
    rqa_measures,
    rqa_measures_from_window,
)
from .signal import (
    FilterSpec,
    RunMetadata,
    TimeSeries,
    high_pass,
    load_run,
    peak_to_peak_envelope,
    save_run,
)
from .svm import (
    ConvergenceError,
    ModelFormatError,
    SupportVectorClassifier,
    SvmModel,
    SvmParams,
    TrainingSet,
    load_model,
    save_model,
)
from .synth import GroundTruth, SynthConfig, generate_campaign, generate_run

__version__ = "1.0.0"
