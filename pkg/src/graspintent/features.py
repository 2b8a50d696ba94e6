"""Per-window time-domain features: RMS, MAV, VAR for each channel."""

from dataclasses import dataclass

import numpy as np

from .validation import check_finite

FEATURES_PER_CHANNEL = 3


@dataclass
class FeatureVector:
    """Feature vector for one window, laid out [RMS x C, MAV x C, VAR x C]."""

    z: np.ndarray
    start_time_ms: float
    end_time_ms: float


def extract_features(window):
    """Extract per-channel RMS, MAV, and (population) VAR from a window.

    RMS is the square root of mean power, MAV the mean absolute value, and
    VAR the mean squared deviation from the channel mean. Variance divides
    by the window length, not length-1, so the identity
    ``RMS^2 == VAR + mean^2`` holds exactly.
    """
    x = np.asarray(window.data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError(f"window must be (C, T>=2), got shape {x.shape}")
    check_finite(x, "window")
    mean = x.mean(axis=1)
    rms = np.sqrt((x * x).mean(axis=1))
    mav = np.abs(x).mean(axis=1)
    # two-pass (centered) variance: stable when the deviations are tiny
    # next to the mean
    var = ((x - mean[:, None]) ** 2).mean(axis=1)
    return FeatureVector(
        z=np.concatenate([rms, mav, var]),
        start_time_ms=window.start_time_ms,
        end_time_ms=window.end_time_ms,
    )


def feature_matrix(windows):
    """Stack features of many windows.

    Returns ``(Z, start_ms, end_ms)`` where Z is (n_windows, 3C).
    """
    vectors = [extract_features(w) for w in windows]
    if not vectors:
        return np.empty((0, 0)), np.empty(0), np.empty(0)
    return (
        np.stack([v.z for v in vectors]),
        np.array([v.start_time_ms for v in vectors]),
        np.array([v.end_time_ms for v in vectors]),
    )
