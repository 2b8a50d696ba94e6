"""EMG preprocessing: band-pass filtering, RMS envelope, MVC normalization,
and sliding-window extraction.

All matrix operations are channel-major: raw signals, filtered signals, and
envelopes are ``(12, N)`` arrays. Filtering is causal (forward-only); the
group delay that implies is accepted because the pipeline targets real-time
decisions and cannot look ahead.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin

from .dataio import MvcProfile, TrialRecord
from .validation import as_float_matrix, check_finite

SAMPLE_RATE_HZ = 1562.5
FILTER_ORDER = 4
LOW_CUT_HZ = 40.0
HIGH_CUT_HZ = 800.0
ENVELOPE_WINDOW_SAMPLES = 150
WINDOW_MS = 320.0
HOP_MS = 32.0


@dataclass(frozen=True)
class FilterSpec:
    """Band-pass design parameters (Butterworth, realized as SOS cascade)."""

    order: int = FILTER_ORDER
    low_cut_hz: float = LOW_CUT_HZ
    high_cut_hz: float = HIGH_CUT_HZ
    sample_rate_hz: float = SAMPLE_RATE_HZ

    @property
    def nyquist_hz(self):
        return self.sample_rate_hz / 2.0

    @property
    def effective_high_cut_hz(self):
        """Digital upper band edge.

        A discrete system's response at f above Nyquist equals its response
        at ``sample_rate - f``, so a nominal upper cut beyond Nyquist (the
        stock 800 Hz at 1562.5 Hz sampling) is folded to that alias. The
        resulting filter then has its half-power point exactly where the
        response at the nominal cut is measured.
        """
        if self.high_cut_hz < self.nyquist_hz:
            return self.high_cut_hz
        return self.sample_rate_hz - self.high_cut_hz

    def validate(self):
        if self.order < 1:
            raise ValueError(f"filter order must be >= 1, got {self.order}")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        high = self.effective_high_cut_hz
        if not 0 < self.low_cut_hz < high < self.nyquist_hz:
            raise ValueError(
                f"band edges ({self.low_cut_hz}, {self.high_cut_hz}) Hz are "
                f"infeasible at {self.sample_rate_hz} Hz sampling"
            )
        return self


def design_bandpass(spec):
    """Design the band-pass filter as cascaded second-order sections.

    Returns the scipy SOS array. The design is guaranteed stable (all poles
    strictly inside the unit circle) and hits -3 dB at both band edges.
    """
    spec.validate()
    sos = sps.butter(
        spec.order,
        [spec.low_cut_hz, spec.effective_high_cut_hz],
        btype="bandpass",
        fs=spec.sample_rate_hz,
        output="sos",
    )
    for section in sos:
        poles = np.roots(section[3:])
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("designed filter is unstable")
    return sos


def apply_filter(sos, raw):
    """Causally filter each channel of a (C, N) matrix."""
    arr = as_float_matrix(raw, "raw")
    check_finite(arr, "raw")
    return sps.sosfilt(sos, arr, axis=1)


def rms_envelope(filtered, window_samples=ENVELOPE_WINDOW_SAMPLES):
    """Trailing root-mean-square envelope, one value per input sample.

    Entry (c, n) is the RMS of channel c over the ``window_samples`` samples
    ending at n; the left edge uses the partial window (mean over however
    many samples exist), so output length equals input length.
    """
    if window_samples < 1:
        raise ValueError(f"window_samples must be >= 1, got {window_samples}")
    arr = as_float_matrix(filtered, "filtered")
    n = arr.shape[1]
    power = np.cumsum(arr * arr, axis=1)
    padded = np.concatenate([np.zeros((arr.shape[0], 1)), power], axis=1)
    idx = np.arange(n)
    lo = np.maximum(idx + 1 - window_samples, 0)
    counts = (idx + 1 - lo).astype(float)
    sums = padded[:, idx + 1] - padded[:, lo]
    return np.sqrt(np.maximum(sums, 0.0) / counts)


def mvc_normalize(env, mvc):
    """Divide each channel by its MVC level (``mvc`` profile or (C,) array)."""
    values = mvc.mvc_value if isinstance(mvc, MvcProfile) else np.asarray(mvc, float)
    arr = as_float_matrix(env, "envelope")
    if values.shape != (arr.shape[0],):
        raise ValueError(
            f"mvc has {values.shape} entries for {arr.shape[0]} channels"
        )
    if not (values > 0).all():
        bad = int(np.argmin(values))
        raise ValueError(f"mvc value for channel {bad} is not strictly positive")
    return arr / values[:, None]


def compute_mvc(mvc_trial, spec=None, window_samples=ENVELOPE_WINDOW_SAMPLES,
                silent_tol=1e-9):
    """Derive a per-channel MVC profile from a contraction recording.

    Filters the trial, builds the RMS envelope, and takes each channel's
    envelope maximum. A channel whose maximum is ~0 never contracted and is
    rejected by name.
    """
    if spec is None:
        spec = FilterSpec(sample_rate_hz=mvc_trial.sample_rate_hz)
    sos = design_bandpass(spec)
    env = rms_envelope(apply_filter(sos, mvc_trial.samples), window_samples)
    peaks = env.max(axis=1)
    for c, peak in enumerate(peaks):
        if peak <= silent_tol:
            raise ValueError(
                f"mvc trial for subject {mvc_trial.subject_id}: channel {c} "
                f"is silent (peak envelope {peak:.3g})"
            )
    return MvcProfile(subject_id=mvc_trial.subject_id, mvc_value=peaks)


@dataclass
class EmgWindow:
    """One sliding window of the processed signal.

    ``start_time_ms`` is the time of the first sample; ``end_time_ms`` is
    the time of the final sample, which is also the causal decision instant.
    """

    data: np.ndarray  # (C, T)
    start_time_ms: float
    end_time_ms: float


def window_hop_samples(sample_rate_hz, window_ms=WINDOW_MS, hop_ms=HOP_MS):
    """Window and hop lengths in samples (500 and 50 at the stock rate)."""
    return (
        int(round(window_ms / 1000.0 * sample_rate_hz)),
        int(round(hop_ms / 1000.0 * sample_rate_hz)),
    )


def slide_windows(env, sample_rate_hz=SAMPLE_RATE_HZ, window_ms=WINDOW_MS,
                  hop_ms=HOP_MS):
    """Slice an envelope into overlapping windows.

    Window i covers samples ``[i*hop, i*hop + T)``; an envelope shorter than
    one window yields an empty list.
    """
    arr = as_float_matrix(env, "envelope")
    t_s, h_s = window_hop_samples(sample_rate_hz, window_ms, hop_ms)
    if t_s < 1 or h_s < 1:
        raise ValueError("window and hop must be at least one sample long")
    n = arr.shape[1]
    if n < t_s:
        return []
    count = (n - t_s) // h_s + 1
    ms_per_sample = 1000.0 / sample_rate_hz
    windows = []
    for i in range(count):
        start = i * h_s
        windows.append(
            EmgWindow(
                data=arr[:, start:start + t_s],
                start_time_ms=start * ms_per_sample,
                end_time_ms=(start + t_s - 1) * ms_per_sample,
            )
        )
    return windows


def hop_average(env, sample_rate_hz=SAMPLE_RATE_HZ, hop_ms=HOP_MS):
    """Average an envelope over consecutive hops.

    Returns a time-major ``(n_points, C)`` matrix with one row per hop;
    this is the series the segmenter consumes. Trailing samples that do not
    fill a whole hop are dropped.
    """
    arr = as_float_matrix(env, "envelope")
    _, h_s = window_hop_samples(sample_rate_hz, hop_ms=hop_ms)
    n_points = arr.shape[1] // h_s
    if n_points == 0:
        return np.empty((0, arr.shape[0]))
    trimmed = arr[:, : n_points * h_s]
    return trimmed.reshape(arr.shape[0], n_points, h_s).mean(axis=2).T


def preprocess_trial(trial, mvc, spec=None,
                     envelope_window=ENVELOPE_WINDOW_SAMPLES):
    """Full per-trial chain: filter -> RMS envelope -> MVC normalization."""
    if spec is None:
        spec = FilterSpec(sample_rate_hz=trial.sample_rate_hz)
    sos = design_bandpass(spec)
    env = rms_envelope(apply_filter(sos, trial.samples), envelope_window)
    return mvc_normalize(env, mvc)


class BandpassFilter(BaseEstimator, TransformerMixin):
    """Causal Butterworth band-pass over channel-major EMG matrices."""

    def __init__(self, order=FILTER_ORDER, low_cut_hz=LOW_CUT_HZ,
                 high_cut_hz=HIGH_CUT_HZ, sample_rate_hz=SAMPLE_RATE_HZ):
        self.order = order
        self.low_cut_hz = low_cut_hz
        self.high_cut_hz = high_cut_hz
        self.sample_rate_hz = sample_rate_hz

    def fit(self, X=None, y=None):
        self.sos_ = design_bandpass(
            FilterSpec(self.order, self.low_cut_hz, self.high_cut_hz,
                       self.sample_rate_hz)
        )
        return self

    def transform(self, X):
        if not hasattr(self, "sos_"):
            self.fit()
        return apply_filter(self.sos_, X)


class RmsEnvelope(BaseEstimator, TransformerMixin):
    """Trailing RMS envelope transformer."""

    def __init__(self, window_samples=ENVELOPE_WINDOW_SAMPLES):
        self.window_samples = window_samples

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return rms_envelope(X, self.window_samples)


class MvcNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel division by MVC levels.

    Either pass a known :class:`MvcProfile` up front, or fit from an MVC
    contraction trial (``fit(trial)``). With a profile given, ``fit`` is a
    no-op, so the normalizer composes with pipelines that pass signal
    matrices through.
    """

    def __init__(self, profile=None, filter_spec=None,
                 envelope_window=ENVELOPE_WINDOW_SAMPLES):
        self.profile = profile
        self.filter_spec = filter_spec
        self.envelope_window = envelope_window

    def fit(self, X=None, y=None):
        if self.profile is not None:
            self.profile_ = self.profile.validate()
        elif isinstance(X, TrialRecord):
            self.profile_ = compute_mvc(X, self.filter_spec,
                                        self.envelope_window)
        else:
            raise ValueError(
                "fit needs an MVC TrialRecord when no profile is given"
            )
        return self

    @classmethod
    def from_profile(cls, profile):
        return cls(profile=profile).fit()

    def transform(self, X):
        if not hasattr(self, "profile_"):
            raise ValueError("MvcNormalizer is not fitted")
        return mvc_normalize(X, self.profile_)
