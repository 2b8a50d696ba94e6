"""File formats for trials, posterior streams, detection frames, and models.

On-disk layout (see docs/formats.md for a worked example):

* dataset manifest -- JSON sidecar referencing per-trial sample blobs,
  carrying per-subject MVC values; ``schema_version`` gated.
* trial samples   -- flat little-endian float32 blob, channel-major
  (12 rows of N samples each, row after row).
* posterior stream -- CSV, one row per decision instant:
  ``time_ms,p0..p13`` (EMG, 14 labels) or ``time_ms,p1..p13`` (13 labels).
* detection frames -- CSV, one row per (frame, box):
  ``time_ms,gaze_x,gaze_y,box_index,x,y,w,h,p1..p13``; a frame with no
  detections is a single row with ``box_index=-1`` and zeroed box fields.
* model artifact  -- JSON, ``format_version`` gated, carrying the forest
  plus its training configuration.

All probabilities are serialized with 12 significant digits so that argmax
decisions survive a round trip exactly.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .validation import check_finite, check_posterior, check_times_sorted

N_CHANNELS = 12
N_GRASP_LABELS = 13
N_CLASSES = 14
MANIFEST_SCHEMA_VERSION = 1
MODEL_FORMAT_VERSION = 1

SESSIONS = ("clockwise", "counterclockwise")
STREAM_SOURCES = ("emg", "vision", "fused")

FLOAT_FMT = "{:.12g}"


class DataFormatError(ValueError):
    """A persisted artifact is malformed or references malformed data."""


class SchemaVersionError(DataFormatError):
    """A persisted artifact declares an unsupported schema version."""


def format_float(value):
    return FLOAT_FMT.format(float(value))


@dataclass
class TrialRecord:
    """One reach-to-grasp trial: 12-channel EMG plus its metadata."""

    subject_id: str
    object_id: str
    trial_index: int
    session: str
    grasp_label: int
    sample_rate_hz: float
    samples: np.ndarray  # (12, N) float64, volts

    @property
    def n_samples(self):
        return int(self.samples.shape[1])

    @property
    def trial_id(self):
        return f"{self.subject_id}_{self.object_id}_t{self.trial_index}"

    def validate(self):
        if self.samples.ndim != 2 or self.samples.shape[0] != N_CHANNELS:
            raise DataFormatError(
                f"trial {self.trial_id}: expected {N_CHANNELS} channels, "
                f"got shape {self.samples.shape}"
            )
        if self.samples.shape[1] < 1:
            raise DataFormatError(f"trial {self.trial_id}: empty sample matrix")
        if not self.sample_rate_hz > 0:
            raise DataFormatError(
                f"trial {self.trial_id}: sample_rate_hz must be positive"
            )
        if not 1 <= int(self.grasp_label) <= N_GRASP_LABELS:
            raise DataFormatError(
                f"trial {self.trial_id}: grasp_label {self.grasp_label} "
                f"outside 1..{N_GRASP_LABELS}"
            )
        if not 1 <= int(self.trial_index) <= 6:
            raise DataFormatError(
                f"trial {self.trial_id}: trial_index {self.trial_index} outside 1..6"
            )
        if self.session not in SESSIONS:
            raise DataFormatError(
                f"trial {self.trial_id}: unknown session {self.session!r}"
            )
        return self


@dataclass
class MvcProfile:
    """Per-subject maximum-voluntary-contraction envelope levels."""

    subject_id: str
    mvc_value: np.ndarray  # (12,) strictly positive

    def validate(self):
        arr = np.asarray(self.mvc_value, dtype=np.float64)
        if arr.shape != (N_CHANNELS,):
            raise DataFormatError(
                f"mvc profile {self.subject_id}: expected {N_CHANNELS} values, "
                f"got shape {arr.shape}"
            )
        if not (arr > 0).all():
            bad = int(np.argmin(arr))
            raise DataFormatError(
                f"mvc profile {self.subject_id}: non-positive value in channel {bad}"
            )
        self.mvc_value = arr
        return self


@dataclass
class PosteriorStream:
    """Time-indexed class posteriors from one evidence source.

    ``probs`` has one row per instant; 14 columns mean labels 0..13
    (EMG, label 0 = rest), 13 columns mean grasp labels 1..13.
    """

    source: str
    times_ms: np.ndarray
    probs: np.ndarray

    @property
    def label_offset(self):
        return 0 if self.probs.shape[1] == N_CLASSES else 1

    @property
    def labels(self):
        k = self.probs.shape[1]
        return np.arange(self.label_offset, self.label_offset + k)

    def validate(self, tol=1e-6):
        if self.source not in STREAM_SOURCES:
            raise DataFormatError(f"unknown stream source {self.source!r}")
        times = check_times_sorted(self.times_ms, "times_ms", strict=True)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] not in (N_GRASP_LABELS, N_CLASSES):
            raise DataFormatError(
                f"posterior matrix must have 13 or 14 columns, got {probs.shape}"
            )
        if probs.shape[0] != times.shape[0]:
            raise DataFormatError("times/posteriors length mismatch")
        for row in range(probs.shape[0]):
            check_posterior(probs[row], probs.shape[1], f"posterior row {row}", tol)
        self.times_ms, self.probs = times, probs
        return self


@dataclass
class BoundingBox:
    x: float
    y: float
    w: float
    h: float
    probs: np.ndarray  # (13,) over grasp labels 1..13

    @property
    def area(self):
        return float(self.w) * float(self.h)

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains(self, gx, gy):
        return self.x <= gx <= self.x + self.w and self.y <= gy <= self.y + self.h

    def validate(self, tol=1e-6):
        if not (self.w > 0 and self.h > 0):
            raise DataFormatError(
                f"bounding box has non-positive size w={self.w} h={self.h}"
            )
        self.probs = check_posterior(self.probs, N_GRASP_LABELS, "box probs", tol)
        return self


@dataclass
class DetectionFrame:
    """One camera frame: gaze point plus detected boxes with grasp posteriors."""

    time_ms: float
    gaze_xy: np.ndarray  # (2,) pixels
    boxes: list = field(default_factory=list)

    def validate(self, tol=1e-6):
        gaze = np.asarray(self.gaze_xy, dtype=np.float64)
        if gaze.shape != (2,):
            raise DataFormatError(f"gaze_xy must have shape (2,), got {gaze.shape}")
        check_finite(gaze, "gaze_xy")
        self.gaze_xy = gaze
        for box in self.boxes:
            box.validate(tol)
        return self


@dataclass
class ModelArtifact:
    """Serialized trained classifier plus the configuration that produced it."""

    format_version: int
    feature_dimension: int
    class_count: int
    training_config: dict
    forest: dict


# ---------------------------------------------------------------------------
# trial blobs + manifest


def write_trial_samples(path, samples):
    """Write a (C, N) sample matrix as a flat little-endian float32 blob."""
    arr = np.ascontiguousarray(np.asarray(samples, dtype="<f4"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(arr.tobytes())


def read_trial_samples(path, n_channels, n_samples, trial_id="<trial>"):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"trial {trial_id}: samples file {path} does not exist")
    raw = path.read_bytes()
    expect = n_channels * n_samples * 4
    if len(raw) != expect:
        raise DataFormatError(
            f"trial {trial_id}: samples file {path} has {len(raw)} bytes, "
            f"expected {expect} ({n_channels}x{n_samples} float32)"
        )
    arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return arr.reshape(n_channels, n_samples)


def write_manifest(path, trial_entries, mvc_values, sample_rate_hz):
    """Write a dataset manifest.

    ``trial_entries`` is a list of dicts with keys subject_id, object_id,
    trial_index, session, grasp_label, n_samples, samples_file (path
    relative to the manifest). ``mvc_values`` maps subject_id -> 12 floats.
    """
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "sample_rate_hz": sample_rate_hz,
        "n_channels": N_CHANNELS,
        "subjects": {
            sid: {"mvc": [float(v) for v in values]}
            for sid, values in sorted(mvc_values.items())
        },
        "trials": trial_entries,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path):
    """Load a dataset manifest, eagerly reading and validating every trial.

    Returns ``(trials, mvc_profiles)`` where ``mvc_profiles`` maps
    subject_id to :class:`MvcProfile`.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"manifest {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"manifest {path}: expected schema_version "
            f"{MANIFEST_SCHEMA_VERSION}, found {version!r}"
        )
    sample_rate = float(doc.get("sample_rate_hz", 0.0))
    if not sample_rate > 0:
        raise DataFormatError(f"manifest {path}: sample_rate_hz must be positive")

    mvc_profiles = {}
    for sid, entry in doc.get("subjects", {}).items():
        mvc_profiles[sid] = MvcProfile(
            subject_id=sid, mvc_value=np.asarray(entry.get("mvc", []), dtype=float)
        ).validate()

    trials = []
    for entry in doc.get("trials", []):
        trial_id = (
            f"{entry.get('subject_id')}_{entry.get('object_id')}"
            f"_t{entry.get('trial_index')}"
        )
        n_channels = int(entry.get("n_channels", doc.get("n_channels", N_CHANNELS)))
        if n_channels != N_CHANNELS:
            raise DataFormatError(
                f"trial {trial_id}: expected {N_CHANNELS} channels, "
                f"manifest declares {n_channels}"
            )
        n_samples = int(entry["n_samples"])
        samples = read_trial_samples(
            path.parent / entry["samples_file"], n_channels, n_samples, trial_id
        )
        trial = TrialRecord(
            subject_id=str(entry["subject_id"]),
            object_id=str(entry["object_id"]),
            trial_index=int(entry["trial_index"]),
            session=str(entry["session"]),
            grasp_label=int(entry["grasp_label"]),
            sample_rate_hz=sample_rate,
            samples=samples,
        ).validate()
        trials.append(trial)
    return trials, mvc_profiles


# ---------------------------------------------------------------------------
# posterior stream CSV


def save_posterior_stream(path, stream):
    stream.validate()
    offset = stream.label_offset
    k = stream.probs.shape[1]
    header = ["time_ms"] + [f"p{offset + i}" for i in range(k)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, row in zip(stream.times_ms, stream.probs):
            writer.writerow([format_float(t)] + [format_float(v) for v in row])


def load_posterior_stream(path, source):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"posterior stream {path} does not exist")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"posterior stream {path} is empty")
    header = rows[0]
    n_cols = len(header) - 1
    if header[0] != "time_ms" or n_cols not in (N_GRASP_LABELS, N_CLASSES):
        raise DataFormatError(f"posterior stream {path}: unrecognized header {header}")
    times, probs = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataFormatError(f"posterior stream {path}: bad row at line {i}")
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise DataFormatError(
                f"posterior stream {path}: non-numeric value at line {i}"
            ) from exc
        times.append(values[0])
        probs.append(values[1:])
    stream = PosteriorStream(
        source=source,
        times_ms=np.asarray(times, dtype=float),
        probs=np.asarray(probs, dtype=float),
    )
    try:
        return stream.validate()
    except ValueError as exc:
        raise DataFormatError(f"posterior stream {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# per-trial window feature tables


def write_feature_table(path, Z, start_ms, end_ms):
    """Write per-window features as CSV: window index, times, 3C features."""
    Z = np.asarray(Z, dtype=float)
    n_channels = Z.shape[1] // 3
    header = ["window", "start_ms", "end_ms"]
    for block in ("rms", "mav", "var"):
        header += [f"{block}_c{c + 1:02d}" for c in range(n_channels)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(Z.shape[0]):
            writer.writerow(
                [str(i), format_float(start_ms[i]), format_float(end_ms[i])]
                + [format_float(v) for v in Z[i]]
            )


def load_feature_table(path):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"feature table {path} does not exist")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"feature table {path} is empty")
    body = rows[1:]
    try:
        start = np.array([float(r[1]) for r in body])
        end = np.array([float(r[2]) for r in body])
        Z = np.array([[float(v) for v in r[3:]] for r in body])
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"feature table {path} is malformed: {exc}") from exc
    return Z, start, end


# ---------------------------------------------------------------------------
# detection frames CSV


def save_detection_frames(path, frames):
    header = (
        ["time_ms", "gaze_x", "gaze_y", "box_index", "x", "y", "w", "h"]
        + [f"p{i}" for i in range(1, N_GRASP_LABELS + 1)]
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    zeros = [format_float(0.0)] * (4 + N_GRASP_LABELS)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for frame in frames:
            frame.validate()
            prefix = [
                format_float(frame.time_ms),
                format_float(frame.gaze_xy[0]),
                format_float(frame.gaze_xy[1]),
            ]
            if not frame.boxes:
                writer.writerow(prefix + ["-1"] + zeros)
                continue
            for idx, box in enumerate(frame.boxes):
                writer.writerow(
                    prefix
                    + [str(idx)]
                    + [format_float(v) for v in (box.x, box.y, box.w, box.h)]
                    + [format_float(v) for v in box.probs]
                )


def load_detection_frames(path):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"detection file {path} does not exist")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"detection file {path} is empty")
    frames = []
    current = None
    for i, row in enumerate(rows[1:], start=2):
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise DataFormatError(
                f"detection file {path}: non-numeric value at line {i}"
            ) from exc
        if len(values) != 8 + N_GRASP_LABELS:
            raise DataFormatError(f"detection file {path}: bad row at line {i}")
        time_ms, gx, gy, box_index = values[0], values[1], values[2], values[3]
        if current is None or current.time_ms != time_ms:
            current = DetectionFrame(time_ms=time_ms, gaze_xy=np.array([gx, gy]))
            frames.append(current)
        if box_index >= 0:
            current.boxes.append(
                BoundingBox(
                    x=values[4],
                    y=values[5],
                    w=values[6],
                    h=values[7],
                    probs=np.asarray(values[8:], dtype=float),
                )
            )
    for frame in frames:
        try:
            frame.validate()
        except ValueError as exc:
            raise DataFormatError(f"detection file {path}: {exc}") from exc
    times = [f.time_ms for f in frames]
    if any(b < a for a, b in zip(times, times[1:])):
        raise DataFormatError(f"detection file {path}: frames not time-sorted")
    return frames


# ---------------------------------------------------------------------------
# model artifact JSON


def save_model(artifact, path):
    if artifact.format_version != MODEL_FORMAT_VERSION:
        raise DataFormatError(
            f"refusing to save model with format_version {artifact.format_version}"
        )
    doc = {
        "format_version": artifact.format_version,
        "feature_dimension": int(artifact.feature_dimension),
        "class_count": int(artifact.class_count),
        "training_config": artifact.training_config,
        "forest": artifact.forest,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc) + "\n")


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"model file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"model file {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaVersionError(
            f"model file {path}: expected format_version "
            f"{MODEL_FORMAT_VERSION}, found {version!r}"
        )
    for key in ("feature_dimension", "class_count", "training_config", "forest"):
        if key not in doc:
            raise DataFormatError(f"model file {path}: missing field {key!r}")
    return ModelArtifact(
        format_version=int(version),
        feature_dimension=int(doc["feature_dimension"]),
        class_count=int(doc["class_count"]),
        training_config=doc["training_config"],
        forest=doc["forest"],
    )
