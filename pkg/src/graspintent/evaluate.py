"""Validation-set evaluation: grasp-aligned curves, per-phase accuracy, plots.

Curves are computed on a grasp-aligned time axis: every trial is shifted so
its grasp phase starts at 0 ms, and the axis is extended 700 ms before reach
onset so any preceding rest coverage is displayed. Trials contribute only to
time bins they actually cover; coverage counts are reported alongside every
curve value.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import format_float
from .segmentation import phase_at_ms

PRE_REACH_EXTENSION_MS = 700.0
PHASE_COLUMNS = ("rest_pre", "reach", "grasp", "return", "rest")


@dataclass
class AlignedStream:
    """A posterior stream on the grasp-aligned clock (grasp onset = 0 ms)."""

    times_ms: np.ndarray
    probs: np.ndarray
    label_offset: int
    truth: int
    boundaries_ms: np.ndarray  # aligned phase boundaries (3,)
    axis_start_ms: float
    axis_end_ms: float


def align_trial(stream, seg, truth, pre_ms=PRE_REACH_EXTENSION_MS):
    """Shift a trial's stream so grasp onset sits at exactly 0 ms."""
    boundaries = seg.boundaries_ms()
    if boundaries.size != 3:
        raise ValueError(
            f"alignment needs a grasp segment (3 breakpoints), got "
            f"{boundaries.size}"
        )
    grasp_start = float(boundaries[0])
    reach_duration = grasp_start  # reach begins at trial time 0
    return AlignedStream(
        times_ms=np.asarray(stream.times_ms, float) - grasp_start,
        probs=np.asarray(stream.probs, float),
        label_offset=stream.label_offset,
        truth=int(truth),
        boundaries_ms=boundaries - grasp_start,
        axis_start_ms=-(reach_duration + pre_ms),
        axis_end_ms=float(seg.end_ms) - grasp_start,
    )


@dataclass
class CurveTable:
    """Per-aligned-time aggregate statistics over validation trials."""

    times_ms: np.ndarray
    coverage: np.ndarray
    accuracy: np.ndarray
    p_true: np.ndarray
    p_rest: np.ndarray        # NaN for 13-label sources
    p_competitor: np.ndarray
    mean_boundaries_ms: np.ndarray


def accuracy_curve(aligned_streams, hop_ms=32.0):
    """Average accuracy and probability curves over aligned trials.

    Accuracy at a time bin is the fraction of covering trials whose argmax
    label equals the trial's truth. The competitor probability is the
    largest probability among labels other than the truth and rest.
    """
    if not aligned_streams:
        raise ValueError("need at least one aligned stream")
    t0 = min(s.times_ms.min() for s in aligned_streams)
    t1 = max(s.times_ms.max() for s in aligned_streams)
    n_bins = int(round((t1 - t0) / hop_ms)) + 1
    times = t0 + hop_ms * np.arange(n_bins)

    coverage = np.zeros(n_bins, dtype=int)
    acc = np.zeros(n_bins)
    p_true = np.zeros(n_bins)
    p_rest = np.zeros(n_bins)
    rest_cover = np.zeros(n_bins, dtype=int)
    p_comp = np.zeros(n_bins)

    for s in aligned_streams:
        bins = np.round((s.times_ms - t0) / hop_ms).astype(int)
        if not np.allclose(t0 + bins * hop_ms, s.times_ms, atol=1e-6):
            raise ValueError("stream times are not on the aligned hop grid")
        truth_col = s.truth - s.label_offset
        labels = np.arange(s.label_offset, s.label_offset + s.probs.shape[1])
        pred = labels[np.argmax(s.probs, axis=1)]
        comp = s.probs.copy()
        comp[:, truth_col] = -np.inf
        if s.label_offset == 0:
            comp[:, 0] = -np.inf
        coverage[bins] += 1
        acc[bins] += pred == s.truth
        p_true[bins] += s.probs[:, truth_col]
        p_comp[bins] += comp.max(axis=1)
        if s.label_offset == 0:
            p_rest[bins] += s.probs[:, 0]
            rest_cover[bins] += 1

    covered = coverage > 0
    times = times[covered]
    coverage = coverage[covered]
    acc = acc[covered] / coverage
    p_true = p_true[covered] / coverage
    p_comp = p_comp[covered] / coverage
    rest_cover = rest_cover[covered]
    with np.errstate(invalid="ignore"):
        p_rest = np.where(
            rest_cover > 0, p_rest[covered] / np.maximum(rest_cover, 1), np.nan
        )
    mean_boundaries = np.mean(
        [s.boundaries_ms for s in aligned_streams], axis=0
    )
    return CurveTable(
        times_ms=times,
        coverage=coverage,
        accuracy=acc,
        p_true=p_true,
        p_rest=p_rest,
        p_competitor=p_comp,
        mean_boundaries_ms=mean_boundaries,
    )


def per_phase_table(streams_by_source, truths, segs):
    """Window-level accuracy per motion phase per evidence source.

    Returns ``{source: {phase: [n_correct, n_total], "total": [...]}}``.
    The leading-rest column exists for parity with session-level reporting
    but stays empty when streams start at reach onset. Phase accuracies
    window-weighted-average exactly to the reported total.
    """
    table = {}
    for source, streams in streams_by_source.items():
        if len(streams) != len(truths) or len(streams) != len(segs):
            raise ValueError(f"{source}: streams/truths/segs length mismatch")
        counts = {phase: [0, 0] for phase in PHASE_COLUMNS}
        counts["total"] = [0, 0]
        for stream, truth, seg in zip(streams, truths, segs):
            labels = stream.labels
            pred = labels[np.argmax(stream.probs, axis=1)]
            for t, p in zip(stream.times_ms, pred):
                phase = "rest_pre" if t < 0 else phase_at_ms(seg, t)
                correct = int(p == truth)
                counts[phase][0] += correct
                counts[phase][1] += 1
                counts["total"][0] += correct
                counts["total"][1] += 1
        table[source] = counts
    return table


def phase_accuracy(counts):
    """Accuracy fraction from a [n_correct, n_total] pair (NaN if empty)."""
    correct, total = counts
    return correct / total if total else float("nan")


# ---------------------------------------------------------------------------
# onset analysis


def motion_onset_times(streams, truths, segs):
    """Grasp/rest probability crossing per trial, on 14-label EMG streams.

    Returns a list of dicts with the crossing time (or None), the grasp
    onset, and whether the crossing lands inside the reach phase.
    """
    from .fusion import motion_onset

    rows = []
    for stream, truth, seg in zip(streams, truths, segs):
        if stream.label_offset != 0:
            raise ValueError("onset analysis needs 14-label EMG streams")
        p_true = stream.probs[:, int(truth)]
        p_rest = stream.probs[:, 0]
        idx = motion_onset(p_true, p_rest)
        grasp_start = float(seg.boundaries_ms()[0])
        onset_ms = float(stream.times_ms[idx]) if idx is not None else None
        rows.append(
            {
                "onset_ms": onset_ms,
                "grasp_start_ms": grasp_start,
                "in_reach": (
                    onset_ms is not None and 0.0 <= onset_ms < grasp_start
                ),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# CSV + SVG emission


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["time_ms", "coverage", "accuracy", "p_true", "p_rest",
             "p_competitor"]
        )
        for i in range(curve.times_ms.size):
            rest = curve.p_rest[i]
            writer.writerow(
                [
                    format_float(curve.times_ms[i]),
                    str(int(curve.coverage[i])),
                    format_float(curve.accuracy[i]),
                    format_float(curve.p_true[i]),
                    "" if np.isnan(rest) else format_float(rest),
                    format_float(curve.p_competitor[i]),
                ]
            )


def write_per_phase_csv(path, table, percent=False):
    columns = list(PHASE_COLUMNS) + ["total"]
    scale = 100.0 if percent else 1.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["source"]
            + [f"acc_{c}" for c in columns]
            + [f"n_{c}" for c in columns]
        )
        for source in sorted(table):
            counts = table[source]
            accs = []
            for c in columns:
                value = phase_accuracy(counts[c])
                accs.append(
                    "" if np.isnan(value) else format_float(scale * value)
                )
            writer.writerow(
                [source] + accs + [str(counts[c][1]) for c in columns]
            )


def _plot_setup():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "graspintent"
    return plt


def _mark_boundaries(ax, boundaries_ms):
    for b in boundaries_ms:
        ax.axvline(b / 1000.0, color="gray", linestyle="--", linewidth=0.8)


def plot_probability_curves(path, curve, title="EMG classifier probabilities"):
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(7, 4))
    t = curve.times_ms / 1000.0
    ax.plot(t, curve.p_true, label="grasp gesture", color="tab:blue")
    if not np.all(np.isnan(curve.p_rest)):
        ax.plot(t, curve.p_rest, label="rest gesture", color="tab:orange")
    ax.plot(t, curve.p_competitor, label="top competitor", color="tab:green")
    _mark_boundaries(ax, curve.mean_boundaries_ms)
    ax.set_xlabel("time relative to grasp onset (s)")
    ax.set_ylabel("mean predicted probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def plot_accuracy_curves(path, curves_by_source,
                         title="Validation accuracy by source"):
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(7, 4))
    boundaries = None
    for source in sorted(curves_by_source):
        curve = curves_by_source[source]
        ax.plot(curve.times_ms / 1000.0, curve.accuracy, label=source)
        boundaries = curve.mean_boundaries_ms
    if boundaries is not None:
        _mark_boundaries(ax, boundaries)
    ax.set_xlabel("time relative to grasp onset (s)")
    ax.set_ylabel("mean accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
