"""Gaze-driven box selection and resampling onto the EMG decision clock."""

import numpy as np

from .dataio import N_GRASP_LABELS, PosteriorStream
from .validation import check_times_sorted


def select_box(frame):
    """Pick the detection the user is looking at; return its grasp posterior.

    If the gaze point lies inside at least one box, the smallest containing
    box wins; otherwise the box whose center is nearest the gaze (Euclidean
    pixel distance). Ties go to the smaller area, then the lower index.
    Returns ``None`` when the frame has no boxes.
    """
    frame.validate()
    if not frame.boxes:
        return None
    gx, gy = float(frame.gaze_xy[0]), float(frame.gaze_xy[1])
    containing = [
        (box.area, idx, box)
        for idx, box in enumerate(frame.boxes)
        if box.contains(gx, gy)
    ]
    if containing:
        _, _, chosen = min(containing, key=lambda item: (item[0], item[1]))
        return chosen.probs.copy()
    scored = []
    for idx, box in enumerate(frame.boxes):
        cx, cy = box.center
        d2 = (cx - gx) ** 2 + (cy - gy) ** 2
        scored.append((d2, box.area, idx, box))
    _, _, _, chosen = min(scored, key=lambda item: (item[0], item[1], item[2]))
    return chosen.probs.copy()


def resample_vision(frames, window_times_ms):
    """Zero-order-hold the selected vision posterior onto window times.

    Each window time takes the posterior of the most recent frame at or
    before it. Times before the first frame, and frames without any boxes,
    fall back to the uniform distribution over the 13 grasp labels so that
    downstream fusion degrades to EMG-only evidence.
    """
    frame_times = np.asarray([f.time_ms for f in frames], dtype=float)
    if frame_times.size:
        check_times_sorted(frame_times, "frame times", strict=False)
    window_times = np.asarray(window_times_ms, dtype=float)
    uniform = np.full(N_GRASP_LABELS, 1.0 / N_GRASP_LABELS)
    selected = [select_box(f) for f in frames]
    probs = np.empty((window_times.size, N_GRASP_LABELS))
    holds = np.searchsorted(frame_times, window_times, side="right") - 1
    for row, hold in enumerate(holds):
        if hold < 0 or selected[hold] is None:
            probs[row] = uniform
        else:
            probs[row] = selected[hold]
    return PosteriorStream(
        source="vision", times_ms=window_times.copy(), probs=probs
    )
