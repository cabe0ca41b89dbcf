"""Continuous emotion regression from multimodal feature streams.

Per-frame arousal/valence prediction with epsilon-SVR, early/late
fusion, annotator-delay compensation, and a tunable prediction
enhancement chain, evaluated by concordance correlation.
"""

from .errors import (
    AffectRegError,
    ConvergenceError,
    DataFormatError,
    ValidationError,
)
from .experiment import (
    DEFAULT_DELAY_FRAMES,
    ExperimentConfig,
    RunReport,
    RunResult,
    config_from_dict,
    config_hash,
    config_to_dict,
    emit_report,
    run_experiment,
    run_fusion,
    run_unimodal,
)
from .fusion import FusionConfig, early_fuse, late_fuse
from .ingest import (
    DatasetManifest,
    ModalitySpec,
    SynthSpec,
    generate_synthetic,
    load_annotations,
    load_dataset,
    load_features,
    load_manifest,
    write_annotations,
    write_dataset,
    write_features,
)
from .metrics import EvaluationReport, ccc, evaluate, mae, pearson
from .postprocess import (
    ChainSearchSpace,
    PostProcessParams,
    apply_centering,
    apply_chain,
    apply_scaling,
    fit_scale_factor,
    median_filter,
    tune_chain,
)
from .svr import (
    GridSpec,
    KernelConfig,
    Standardizer,
    SvrHyperParams,
    SvrModel,
    SvrRegressor,
    grid_search,
    load_model,
    predict,
    save_model,
    train_svr,
)
from .timeseries import (
    AffectDimension,
    AffectTrace,
    DatasetSplit,
    FeatureStream,
    FrameMask,
    SubjectRecord,
    apply_mask_for_training,
    impute_predictions,
    scan_delay,
    shift_gold,
)

__version__ = "0.1.0"

__all__ = [
    "AffectDimension",
    "AffectRegError",
    "AffectTrace",
    "ChainSearchSpace",
    "ConvergenceError",
    "DEFAULT_DELAY_FRAMES",
    "DataFormatError",
    "DatasetManifest",
    "DatasetSplit",
    "EvaluationReport",
    "ExperimentConfig",
    "FeatureStream",
    "FrameMask",
    "FusionConfig",
    "GridSpec",
    "KernelConfig",
    "ModalitySpec",
    "PostProcessParams",
    "RunReport",
    "RunResult",
    "Standardizer",
    "SubjectRecord",
    "SvrHyperParams",
    "SvrModel",
    "SvrRegressor",
    "SynthSpec",
    "ValidationError",
    "apply_centering",
    "apply_chain",
    "apply_mask_for_training",
    "apply_scaling",
    "ccc",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "early_fuse",
    "emit_report",
    "evaluate",
    "fit_scale_factor",
    "generate_synthetic",
    "grid_search",
    "impute_predictions",
    "late_fuse",
    "load_annotations",
    "load_dataset",
    "load_features",
    "load_manifest",
    "load_model",
    "mae",
    "median_filter",
    "pearson",
    "predict",
    "run_experiment",
    "run_fusion",
    "run_unimodal",
    "save_model",
    "scan_delay",
    "shift_gold",
    "train_svr",
    "tune_chain",
    "write_annotations",
    "write_dataset",
    "write_features",
]
