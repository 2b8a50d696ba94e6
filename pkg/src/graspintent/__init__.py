"""Grasp-intent inference from forearm EMG and gaze-selected vision evidence.

The package covers the full decision pipeline: band-pass filtering and RMS
envelopes of 12-channel surface EMG, MVC normalization, sliding-window
RMS/MAV/VAR features, unsupervised Gaussian phase segmentation, an
extremely-randomized-trees gesture classifier, gaze-driven selection of
vision grasp posteriors, and Bayesian product fusion of the two evidence
streams. A synthetic-scenario generator plants ground truth so every stage
is verifiable end to end.
"""

__version__ = "0.1.0"

from .annotate import LabeledWindow, annotate_windows, split_trials, training_filter
from .dataio import (
    BoundingBox,
    DetectionFrame,
    ModelArtifact,
    MvcProfile,
    PosteriorStream,
    TrialRecord,
)
from .features import FeatureVector, extract_features, feature_matrix
from .fusion import FusedDecision, fuse, motion_onset, restrict_rest, smooth_decisions
from .preprocess import (
    BandpassFilter,
    EmgWindow,
    FilterSpec,
    MvcNormalizer,
    RmsEnvelope,
    compute_mvc,
    design_bandpass,
    rms_envelope,
    slide_windows,
)
from .segmentation import (
    GreedyGaussianSegmentation,
    Segmentation,
    gaussian_segment_loglik,
    label_segments,
)
from .synth import ScenarioSpec, default_scenario, gen_trial, gen_vision_stream
from .trees import ExtraTreesGraspClassifier
from .vision import resample_vision, select_box

__all__ = [
    "BandpassFilter",
    "BoundingBox",
    "DetectionFrame",
    "EmgWindow",
    "ExtraTreesGraspClassifier",
    "FeatureVector",
    "FilterSpec",
    "FusedDecision",
    "GreedyGaussianSegmentation",
    "LabeledWindow",
    "ModelArtifact",
    "MvcNormalizer",
    "MvcProfile",
    "PosteriorStream",
    "RmsEnvelope",
    "ScenarioSpec",
    "Segmentation",
    "TrialRecord",
    "annotate_windows",
    "compute_mvc",
    "default_scenario",
    "design_bandpass",
    "extract_features",
    "feature_matrix",
    "fuse",
    "gaussian_segment_loglik",
    "gen_trial",
    "gen_vision_stream",
    "label_segments",
    "motion_onset",
    "resample_vision",
    "restrict_rest",
    "rms_envelope",
    "select_box",
    "slide_windows",
    "smooth_decisions",
    "split_trials",
    "training_filter",
]
