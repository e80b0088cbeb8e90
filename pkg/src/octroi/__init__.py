"""octroi: OCT B-scan ROI comparison pipeline for intermediate-AMD classification.

Synthetic B-scan generation with ground-truth layer segmentations,
layer-guided ROI extraction (flattening, masking, cropping), a small
VGG-style CNN trained from scratch, and the statistics needed to compare
per-ROI classifiers (AUROC, stratified bootstrap CIs, DeLong tests).
"""

from .augment import AugmentConfig, augment
from .classifier import MiniVggClassifier
from .delong import ComparisonMode, ComparisonResult, delong_test
from .experiment import (
    ExperimentConfig,
    EvalSettings,
    RunResults,
    default_roi_variants,
    load_config,
    run_experiment,
)
from .metrics import (
    MetricsReport,
    ScoreSet,
    auroc,
    bootstrap_ci,
    compute_report,
    confusion_metrics,
    roc_points,
)
from .network import MiniVgg, ModelConfig, forward, load_checkpoint, loss_and_grad, save_checkpoint
from .optim import sgd_nesterov_step
from .report import emit_report
from .roi import (
    FlattenResult,
    RoiExtractor,
    RoiKind,
    RoiMethod,
    RoiRequest,
    extract_and_resize,
    extract_roi,
    flatten,
    resize,
)
from .splitting import filter_central_bscans, select_central_bscans, split_subjects
from .synth import GeneratedSample, SynthConfig, generate_bscan, generate_dataset, load_dataset
from .training import EarlyStopper, EpochStats, TrainConfig, train
from .types import BScan, ClassLabel, DatasetManifest, LayerSegmentation, SplitAssignment

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BScan",
    "ClassLabel",
    "ComparisonMode",
    "ComparisonResult",
    "DatasetManifest",
    "EarlyStopper",
    "EpochStats",
    "EvalSettings",
    "ExperimentConfig",
    "FlattenResult",
    "GeneratedSample",
    "LayerSegmentation",
    "MetricsReport",
    "MiniVgg",
    "MiniVggClassifier",
    "ModelConfig",
    "RoiExtractor",
    "RoiKind",
    "RoiMethod",
    "RoiRequest",
    "RunResults",
    "ScoreSet",
    "SplitAssignment",
    "SynthConfig",
    "TrainConfig",
    "augment",
    "auroc",
    "bootstrap_ci",
    "compute_report",
    "confusion_metrics",
    "default_roi_variants",
    "delong_test",
    "emit_report",
    "extract_and_resize",
    "extract_roi",
    "filter_central_bscans",
    "flatten",
    "forward",
    "generate_bscan",
    "generate_dataset",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "loss_and_grad",
    "resize",
    "roc_points",
    "run_experiment",
    "save_checkpoint",
    "select_central_bscans",
    "sgd_nesterov_step",
    "split_subjects",
    "train",
]
