"""Counterfactual image explanations for binary classifiers.

Trains a cycle-consistent adversarial translation system whose generators
are additionally penalized when their outputs fail to flip a frozen
classifier's decision, then explains individual images by translating them
across the decision boundary.
"""

from .classifier import (
    Architecture,
    ClassifierConfig,
    ClassifierMetrics,
    ClassifierModel,
    OptimizerConfig,
    ProbPair,
    build,
    evaluate_classifier,
    train,
)
from .data import (
    DataError,
    DatasetManifest,
    ImageSample,
    IngestReport,
    Label,
    ManifestEntry,
    Split,
    ingest,
    read_png,
    split_manifest,
    write_png,
)
from .evaluation import AblationResult, FlipReport, ablation, evaluate_flips, write_report
from .explain import ExplanationResult, PairPlan, explain, interpolate, plan_pairs
from .gan import AdamConfig, GanBundle, GanConfig, GanError, LossWeights, PatchGanConfig, train_gan
from .losses import adversarial_loss, counter_loss, cycle_loss, identity_loss, total_objective
from .synth import SynthSpec, synthesize

__version__ = "0.1.0"

__all__ = [
    "AblationResult",
    "AdamConfig",
    "Architecture",
    "ClassifierConfig",
    "ClassifierMetrics",
    "ClassifierModel",
    "DataError",
    "DatasetManifest",
    "ExplanationResult",
    "FlipReport",
    "GanBundle",
    "GanConfig",
    "GanError",
    "ImageSample",
    "IngestReport",
    "Label",
    "LossWeights",
    "ManifestEntry",
    "OptimizerConfig",
    "PairPlan",
    "PatchGanConfig",
    "ProbPair",
    "Split",
    "SynthSpec",
    "ablation",
    "adversarial_loss",
    "build",
    "counter_loss",
    "cycle_loss",
    "evaluate_classifier",
    "evaluate_flips",
    "explain",
    "identity_loss",
    "ingest",
    "interpolate",
    "plan_pairs",
    "read_png",
    "split_manifest",
    "synthesize",
    "total_objective",
    "train",
    "train_gan",
    "write_png",
    "write_report",
]
