"""Window-level gesture annotation and train/validation splitting.

A window is assigned the phase containing its final sample: that sample is
the causal decision instant, so the label a real-time controller would act
on is the label of the phase it has just observed. Rest-phase windows carry
the open-palm label 0; all other phases carry the trial's grasp label.
"""

from dataclasses import dataclass

import numpy as np

from . import preprocess
from .features import FeatureVector, extract_features
from .segmentation import phase_at_ms


@dataclass
class LabeledWindow:
    features: FeatureVector
    phase: str
    label: int


def annotate_windows(feature_vectors, seg, grasp_label):
    """Attach phase and grasp label to each window's features."""
    if not 1 <= int(grasp_label) <= 13:
        raise ValueError(f"grasp_label {grasp_label} outside 1..13")
    out = []
    for fv in feature_vectors:
        phase = phase_at_ms(seg, fv.end_time_ms)
        label = 0 if phase == "rest" else int(grasp_label)
        out.append(LabeledWindow(features=fv, phase=phase, label=label))
    return out


def annotate_trial(trial, seg, mvc):
    """Run the preprocessing chain on a trial and annotate every window."""
    env = preprocess.preprocess_trial(trial, mvc)
    windows = preprocess.slide_windows(env, trial.sample_rate_hz)
    return annotate_windows(
        [extract_features(w) for w in windows], seg, trial.grasp_label
    )


@dataclass
class TrialSplit:
    """Per-(subject, object) partition of 6 trials into 4 train + 2 validation."""

    seed: int
    by_group: dict  # (subject_id, object_id) -> {"train": [...], "validation": [...]}

    @property
    def train(self):
        return [t for group in self.by_group.values() for t in group["train"]]

    @property
    def validation(self):
        return [t for group in self.by_group.values() for t in group["validation"]]

    def to_json_dict(self):
        return {
            "seed": self.seed,
            "groups": {
                f"{sid}/{oid}": {
                    "train": [t.trial_index for t in group["train"]],
                    "validation": [t.trial_index for t in group["validation"]],
                }
                for (sid, oid), group in sorted(self.by_group.items())
            },
        }


def split_trials(trials, seed, n_train=4, n_validation=2):
    """Split each (subject, object) group of 6 trials into train/validation.

    The split is uniform at random, seeded, and iterates groups in sorted
    order so the same seed always yields the same partition.
    """
    groups = {}
    for trial in trials:
        groups.setdefault((trial.subject_id, trial.object_id), []).append(trial)
    expected = n_train + n_validation
    rng = np.random.default_rng(seed)
    by_group = {}
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda t: t.trial_index)
        if len(members) != expected:
            raise ValueError(
                f"subject {key[0]} object {key[1]} has {len(members)} trials, "
                f"expected exactly {expected}"
            )
        order = rng.permutation(expected)
        by_group[key] = {
            "train": [members[i] for i in order[:n_train]],
            "validation": [members[i] for i in order[n_train:]],
        }
    return TrialSplit(seed=seed, by_group=by_group)


def training_filter(windows, subset="train"):
    """Drop return-phase windows from training data.

    Validation data is never filtered: the model is evaluated on whole
    trials, return phase included.
    """
    if subset == "validation":
        return list(windows)
    if subset != "train":
        raise ValueError(f"subset must be 'train' or 'validation', got {subset!r}")
    return [w for w in windows if w.phase != "return"]
