"""Cohort handling, synthetic data, cross-validation and the end-to-end run."""
from .folds import CrossvalResult, FoldAssignment, HeadConfig, accuracy_statistics, crossval_classify, kfold_split
from .manifest import CohortManifest, Patient, Study, load_manifest
from .run import RunConfig, run_pipeline
from .synth import generate_synthetic_cohort

__all__ = [
    "CohortManifest", "CrossvalResult", "FoldAssignment", "HeadConfig", "Patient", "RunConfig",
    "Study", "accuracy_statistics", "crossval_classify", "generate_synthetic_cohort", "kfold_split",
    "load_manifest", "run_pipeline",
]
