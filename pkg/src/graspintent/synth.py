"""Synthetic-data oracle: trials and vision streams with planted structure.

Trials are built so the *real* preprocessing chain applies: per-phase
multivariate Gaussian envelopes (distinct means per phase and label, planted
breakpoints recorded on the hop grid) modulate a band-limited unit-RMS noise
carrier, so filtering and envelope extraction recover the plant rather than
bypassing it.

The phase-level profile is shared across labels; label identity only shifts
the active-phase means by a smaller offset. That keeps segmentation easy
(large between-phase steps) while leaving the classifier a harder
between-label problem, and makes the rest phase uninformative about the
object so EMG evidence degrades at rest the way real open-palm data does.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import preprocess
from .dataio import (
    BoundingBox,
    DetectionFrame,
    N_CHANNELS,
    N_GRASP_LABELS,
    TrialRecord,
    write_manifest,
    write_trial_samples,
)
from .segmentation import PHASES, Segmentation, phase_at_ms

_MEANS_TAG = 101
_TRIAL_TAG = 202
_VISION_TAG = 303
_MVC_TAG = 404

_PHASE_BASE_RANGES = {
    "reach": (0.35, 0.65),
    "grasp": (0.55, 0.85),
}


@dataclass
class ScenarioSpec:
    """Parameters of one synthetic recording campaign."""

    n_subjects: int = 2
    n_objects: int = 13
    trials_per_object: int = 6
    sample_rate_hz: float = 1562.5
    hop_ms: float = 32.0
    phase_duration_ranges_ms: dict = field(
        default_factory=lambda: {
            "reach": (800.0, 1200.0),
            "grasp": (900.0, 1300.0),
            "return": (700.0, 1100.0),
            "rest": (800.0, 1200.0),
        }
    )
    object_labels: tuple = ()  # defaults to cycling 1..13
    label_offset_scales: dict = field(
        default_factory=lambda: {"reach": 0.07, "grasp": 0.17, "return": 0.20}
    )
    return_offset_mix: float = 0.85
    envelope_noise_scale: float = 0.32   # relative: std per hop = scale * level
    drift_scale: float = 0.02            # relative slow AR(1) excursion
    drift_smoothness: float = 0.97
    trial_gain_scale: float = 0.10
    baseline_level: float = 0.06         # unscaled sensor/tone floor
    baseline_noise_scale: float = 0.2    # relative noise on the floor
    rest_decay_tau_hops: float = 3.0     # muscle relaxation tail into rest
    rest_separation: float = 0.0
    vision_confusion: dict = field(
        default_factory=lambda: {
            "reach": 0.3,
            "grasp": 0.9,
            "return": 0.3,
            "rest": 0.05,
        }
    )
    vision_peak: float = 0.85
    vision_confused_peak: float = 0.12
    vision_fps: float = 60.0
    seed: int = 0

    def resolved_labels(self):
        if self.object_labels:
            return tuple(int(v) for v in self.object_labels)
        return tuple((i % N_GRASP_LABELS) + 1 for i in range(self.n_objects))

    def validate(self):
        if self.n_subjects < 1 or self.n_objects < 1:
            raise ValueError("need at least one subject and one object")
        for phase in PHASES:
            lo, hi = self.phase_duration_ranges_ms[phase]
            if not 0 < lo <= hi:
                raise ValueError(f"bad duration range for {phase}: ({lo}, {hi})")
        for phase, rate in self.vision_confusion.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"confusion rate for {phase} outside [0, 1]")
        for peak in (self.vision_peak, self.vision_confused_peak):
            if not 0.0 < peak <= 1.0:
                raise ValueError("vision peaks must be in (0, 1]")
        labels = self.resolved_labels()
        if len(labels) != self.n_objects:
            raise ValueError("object_labels length must equal n_objects")
        if any(not 1 <= l <= N_GRASP_LABELS for l in labels):
            raise ValueError("object labels must lie in 1..13")
        return self

    def to_json_dict(self):
        doc = asdict(self)
        doc["object_labels"] = list(self.resolved_labels())
        return doc

    @classmethod
    def from_json_dict(cls, doc):
        spec = cls(**doc)
        spec.object_labels = tuple(doc.get("object_labels", ()))
        return spec.validate()


@dataclass
class TrialTruth:
    """Planted ground truth for one generated trial."""

    segmentation: Segmentation
    label: int
    phase_hops: dict


def phase_mean_table(spec):
    """Per-(label, phase) envelope mean vectors, deterministic from the seed.

    Returns ``means[label][phase] -> (12,) array`` for labels 1..13. The
    rest row is shared across labels unless ``rest_separation > 0``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _MEANS_TAG]))
    base = {
        phase: rng.uniform(lo, hi, size=N_CHANNELS)
        for phase, (lo, hi) in _PHASE_BASE_RANGES.items()
    }
    base["rest"] = np.full(N_CHANNELS, spec.baseline_level)
    # the return movement retraces the reach, so it shares the reach's
    # activation level and part of its per-label direction
    base["return"] = base["reach"].copy()
    means = {}
    for label in range(1, N_GRASP_LABELS + 1):
        directions = {
            phase: rng.standard_normal(N_CHANNELS)
            for phase in ("reach", "grasp", "return")
        }
        mix = spec.return_offset_mix
        directions["return"] = (
            mix * directions["reach"] + (1.0 - mix) * directions["return"]
        )
        per_phase = {}
        for phase in ("reach", "grasp", "return"):
            offset = spec.label_offset_scales[phase] * directions[phase]
            per_phase[phase] = np.maximum(base[phase] + offset, 0.02)
        rest_offset = spec.rest_separation * rng.standard_normal(N_CHANNELS)
        per_phase["rest"] = np.maximum(base["rest"] + rest_offset, 0.02)
        means[label] = per_phase
    return means


def _hop_samples(spec):
    return int(round(spec.hop_ms / 1000.0 * spec.sample_rate_hz))


def _band_carrier(rng, n_channels, n_samples, spec):
    """Unit-RMS noise restricted to the analysis band."""
    sos = preprocess.design_bandpass(
        preprocess.FilterSpec(sample_rate_hz=spec.sample_rate_hz)
    )
    noise = rng.standard_normal((n_channels, n_samples))
    shaped = preprocess.apply_filter(sos, noise)
    rms = np.sqrt(np.mean(shaped * shaped, axis=1, keepdims=True))
    return shaped / np.maximum(rms, 1e-12)


def _draw_phase_hops(spec, rng):
    hops = {}
    for phase in PHASES:
        lo, hi = spec.phase_duration_ranges_ms[phase]
        duration = rng.uniform(lo, hi)
        hops[phase] = max(2, int(round(duration / spec.hop_ms)))
    return hops


def gen_trial(spec, subject_idx, object_idx, trial_index, means=None):
    """Generate one trial plus its planted segmentation.

    The same (spec.seed, subject, object, trial) tuple always produces a
    byte-identical trial.
    """
    spec.validate()
    if means is None:
        means = phase_mean_table(spec)
    label = spec.resolved_labels()[object_idx]
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [spec.seed, _TRIAL_TAG, subject_idx, object_idx, trial_index]
        )
    )
    hop_samples = _hop_samples(spec)
    phase_hops = _draw_phase_hops(spec, rng)
    n_points = sum(phase_hops.values())
    breakpoints = np.cumsum([phase_hops[p] for p in PHASES[:-1]])

    # relative modulation: EMG amplitude variability scales with activation,
    # so the rest phase is quiet while active phases fluctuate
    modulation = np.ones((n_points, N_CHANNELS))
    modulation += spec.envelope_noise_scale * rng.standard_normal(
        (n_points, N_CHANNELS)
    )
    if spec.drift_scale > 0:
        # slow AR(1) excursion per channel, the classic electrode-drift
        # artifact; stationary std equals drift_scale
        rho = spec.drift_smoothness
        innov = np.sqrt(1.0 - rho * rho) * rng.standard_normal(
            (n_points, N_CHANNELS)
        )
        drift = np.empty((n_points, N_CHANNELS))
        state = rng.standard_normal(N_CHANNELS)
        for j in range(n_points):
            state = rho * state + innov[j]
            drift[j] = state
        modulation += spec.drift_scale * drift
    if spec.trial_gain_scale > 0:
        # per-trial per-channel gain excursion (skin-electrode impedance
        # changes between trials; MVC normalization only removes the
        # per-subject gain)
        gain = 1.0 + spec.trial_gain_scale * rng.standard_normal(N_CHANNELS)
        modulation *= np.maximum(gain, 0.2)[None, :]

    levels = np.empty((n_points, N_CHANNELS))
    start = 0
    for phase in PHASES:
        stop = start + phase_hops[phase]
        levels[start:stop] = means[label][phase][None, :]
        start = stop
    if spec.rest_decay_tau_hops > 0:
        # muscles relax gradually: the label-specific part of the return
        # signature decays exponentially into early rest (the bulk
        # activation drops off at once, the postural imprint lingers)
        rest_start = int(breakpoints[2])
        tail = np.exp(
            -(np.arange(n_points - rest_start) + 1.0)
            / spec.rest_decay_tau_hops
        )
        shared = np.mean([means[l]["return"] for l in means], axis=0)
        imprint = means[label]["return"] - shared
        levels[rest_start:] += tail[:, None] * imprint[None, :]

    # electrode gain and amplitude noise scale the muscle signal, not the
    # sensor floor; rest sits at the floor, so it stays trial-stationary
    floor = spec.baseline_level
    floor_noise = 1.0 + spec.baseline_noise_scale * rng.standard_normal(
        (n_points, N_CHANNELS)
    )
    excess = np.maximum(levels - floor, 0.0)
    envelope_hops = np.maximum(
        floor * np.maximum(floor_noise, 0.1) + excess * modulation, 0.005
    )

    n_samples = n_points * hop_samples
    envelope = np.repeat(envelope_hops.T, hop_samples, axis=1)
    carrier = _band_carrier(rng, N_CHANNELS, n_samples, spec)
    samples = envelope * carrier

    trial = TrialRecord(
        subject_id=f"s{subject_idx + 1:02d}",
        object_id=f"o{object_idx + 1:02d}",
        trial_index=trial_index,
        session="clockwise",
        grasp_label=label,
        sample_rate_hz=spec.sample_rate_hz,
        samples=samples,
    ).validate()
    truth = TrialTruth(
        segmentation=Segmentation(
            breakpoints=breakpoints,
            n_points=n_points,
            index_ms=spec.hop_ms,
            objective=float("nan"),
        ).validate(),
        label=label,
        phase_hops=phase_hops,
    )
    return trial, truth


def gen_mvc_trial(spec, subject_idx, means=None):
    """Per-channel contraction bursts used to derive the MVC profile."""
    spec.validate()
    if means is None:
        means = phase_mean_table(spec)
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, _MVC_TAG, subject_idx])
    )
    peak_level = np.max(
        [means[l][p] for l in means for p in ("reach", "grasp", "return")],
        axis=0,
    )
    mvc_level = 1.25 * peak_level * (1.0 + 0.1 * rng.random(N_CHANNELS))

    burst = int(0.5 * spec.sample_rate_hz)
    gap = int(0.1 * spec.sample_rate_hz)
    n_samples = N_CHANNELS * (burst + gap) + gap
    envelope = np.full((N_CHANNELS, n_samples), 0.02)
    for c in range(N_CHANNELS):
        start = gap + c * (burst + gap)
        envelope[c, start:start + burst] = mvc_level[c]
    carrier = _band_carrier(rng, N_CHANNELS, n_samples, spec)
    return TrialRecord(
        subject_id=f"s{subject_idx + 1:02d}",
        object_id="mvc",
        trial_index=1,
        session="clockwise",
        grasp_label=1,
        sample_rate_hz=spec.sample_rate_hz,
        samples=envelope * carrier,
    )


def gen_vision_stream(spec, truth, subject_idx, object_idx, trial_index):
    """60 Hz detection frames whose gaze-selected box tracks the truth label.

    Per frame, with probability ``1 - confusion(phase)`` the selected box
    carries a posterior peaked on the true label, otherwise peaked on a
    random other label with a weaker peak (grasp-phase confusion is high by
    default, mirroring object occlusion by the hand, and an occluded
    detection is also a low-confidence one).
    """
    spec.validate()
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [spec.seed, _VISION_TAG, subject_idx, object_idx, trial_index]
        )
    )
    seg = truth.segmentation
    frame_step = 1000.0 / spec.vision_fps
    end_ms = seg.end_ms
    frames = []
    t = 0.0
    uniform = np.full(N_GRASP_LABELS, 1.0 / N_GRASP_LABELS)
    while t < end_ms:
        phase = phase_at_ms(seg, t)
        confused = rng.random() < spec.vision_confusion[phase]
        shown = truth.label
        peak = spec.vision_peak
        if confused:
            choices = [l for l in range(1, N_GRASP_LABELS + 1) if l != truth.label]
            shown = int(choices[rng.integers(len(choices))])
            peak = spec.vision_confused_peak
        probs = np.full(N_GRASP_LABELS, (1.0 - peak) / (N_GRASP_LABELS - 1))
        probs[shown - 1] = peak

        gx = 640.0 + 12.0 * rng.standard_normal()
        gy = 360.0 + 12.0 * rng.standard_normal()
        target = BoundingBox(x=gx - 45.0, y=gy - 45.0, w=90.0, h=90.0, probs=probs)
        decoys = [
            BoundingBox(x=gx + 210.0, y=gy + 150.0, w=120.0, h=120.0,
                        probs=uniform.copy()),
            BoundingBox(x=gx - 330.0, y=gy + 110.0, w=150.0, h=150.0,
                        probs=uniform.copy()),
        ]
        frames.append(
            DetectionFrame(
                time_ms=t, gaze_xy=np.array([gx, gy]),
                boxes=[target] + decoys,
            ).validate()
        )
        t += frame_step
    return frames


def default_scenario(seed=0):
    return ScenarioSpec(seed=seed).validate()


def generate_dataset(spec, out_dir, write_detections=True):
    """Materialize a scenario on disk in the dataset formats.

    Writes the manifest (with per-subject MVC values derived from generated
    contraction trials through the real preprocessing chain), per-trial
    sample blobs, planted ground truth, and per-trial detection CSVs.
    Returns the manifest path.
    """
    from .dataio import save_detection_frames  # local to keep import light

    spec.validate()
    out = Path(out_dir)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    means = phase_mean_table(spec)

    mvc_values = {}
    for s in range(spec.n_subjects):
        mvc_trial = gen_mvc_trial(spec, s, means)
        profile = preprocess.compute_mvc(mvc_trial)
        mvc_values[mvc_trial.subject_id] = profile.mvc_value.tolist()

    trial_entries = []
    truth_doc = {}
    for s in range(spec.n_subjects):
        for o in range(spec.n_objects):
            for t in range(1, spec.trials_per_object + 1):
                trial, truth = gen_trial(spec, s, o, t, means)
                rel = f"trials/{trial.trial_id}.f32"
                write_trial_samples(out / rel, trial.samples)
                trial_entries.append(
                    {
                        "subject_id": trial.subject_id,
                        "object_id": trial.object_id,
                        "trial_index": trial.trial_index,
                        "session": trial.session,
                        "grasp_label": trial.grasp_label,
                        "n_samples": trial.n_samples,
                        "samples_file": rel,
                    }
                )
                truth_doc[trial.trial_id] = {
                    "label": truth.label,
                    "breakpoints": truth.segmentation.breakpoints.tolist(),
                    "n_points": truth.segmentation.n_points,
                    "index_ms": truth.segmentation.index_ms,
                }
                if write_detections:
                    frames = gen_vision_stream(spec, truth, s, o, t)
                    save_detection_frames(
                        out / "detections" / f"{trial.trial_id}.csv", frames
                    )

    write_manifest(
        out / "manifest.json", trial_entries, mvc_values, spec.sample_rate_hz
    )
    (out / "truth.json").write_text(json.dumps(truth_doc, indent=2) + "\n")
    (out / "scenario.json").write_text(
        json.dumps(spec.to_json_dict(), indent=2) + "\n"
    )
    return out / "manifest.json"
