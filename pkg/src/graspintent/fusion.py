"""Bayesian product fusion of EMG and vision grasp posteriors.

Both evidence sources emit conditionally independent posteriors over the 13
grasp labels, so with a flat label prior the fused decision is the argmax of
their elementwise product. Probabilities are floored at ``eps`` before the
product so that a hard zero from one finite-ensemble classifier cannot veto
the other source.
"""

from dataclasses import dataclass

import numpy as np

from .dataio import N_CLASSES, N_GRASP_LABELS, PosteriorStream
from .validation import check_posterior

DEFAULT_EPS = 1e-6
DEFAULT_SMOOTH_WINDOW = 5


@dataclass
class FusedDecision:
    time_ms: float
    posterior: np.ndarray  # (13,), grasp labels 1..13
    decision: int          # argmax label, 1..13

    def validate(self):
        self.posterior = check_posterior(
            self.posterior, N_GRASP_LABELS, "fused posterior", tol=1e-9
        )
        if self.decision != int(np.argmax(self.posterior)) + 1:
            raise ValueError("decision is not the posterior argmax")
        return self


def restrict_rest(p_emg):
    """Drop the rest label from a 14-label EMG posterior and renormalize.

    If the whole mass sat on rest, there is no grasp evidence; fall back to
    uniform so fusion reduces to the vision posterior.
    """
    p = check_posterior(p_emg, N_CLASSES, "emg posterior")
    grasp = p[1:]
    total = grasp.sum()
    if total <= 0.0:
        return np.full(N_GRASP_LABELS, 1.0 / N_GRASP_LABELS)
    return grasp / total


def fuse(p_emg_13, p_vis_13, eps=DEFAULT_EPS, time_ms=0.0):
    """Fuse two 13-label posteriors by normalized elementwise product."""
    pe = check_posterior(p_emg_13, N_GRASP_LABELS, "emg grasp posterior")
    pv = check_posterior(p_vis_13, N_GRASP_LABELS, "vision posterior")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    product = np.maximum(pe, eps) * np.maximum(pv, eps)
    posterior = product / product.sum()
    decision = int(np.argmax(posterior)) + 1
    return FusedDecision(time_ms=float(time_ms), posterior=posterior,
                         decision=decision)


def fuse_streams(emg_stream, vision_stream, eps=DEFAULT_EPS):
    """Fuse two aligned 13-label posterior streams instant by instant."""
    if emg_stream.probs.shape[1] != N_GRASP_LABELS:
        raise ValueError("EMG stream must be rest-restricted to 13 labels")
    if not np.array_equal(emg_stream.times_ms, vision_stream.times_ms):
        raise ValueError("EMG and vision streams are not on the same clock")
    return [
        fuse(pe, pv, eps=eps, time_ms=t)
        for t, pe, pv in zip(
            emg_stream.times_ms, emg_stream.probs, vision_stream.probs
        )
    ]


def smooth_decisions(decisions, n=DEFAULT_SMOOTH_WINDOW):
    """Trailing moving average over the last ``n`` posteriors.

    Each output posterior is the arithmetic mean of the most recent
    ``min(n, seen)`` posteriors; the decision is recomputed from the mean.
    """
    if n < 1:
        raise ValueError(f"smoothing window must be >= 1, got {n}")
    times = [d.time_ms for d in decisions]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("decision stream must be strictly time-sorted")
    out = []
    for i, dec in enumerate(decisions):
        window = decisions[max(0, i - n + 1): i + 1]
        mean = np.mean([d.posterior for d in window], axis=0)
        out.append(
            FusedDecision(
                time_ms=dec.time_ms,
                posterior=mean,
                decision=int(np.argmax(mean)) + 1,
            )
        )
    return out


def decisions_to_stream(decisions):
    return PosteriorStream(
        source="fused",
        times_ms=np.asarray([d.time_ms for d in decisions], dtype=float),
        probs=np.stack([d.posterior for d in decisions])
        if decisions else np.empty((0, N_GRASP_LABELS)),
    )


def motion_onset(p_grasp_curve, p_rest_curve):
    """First index where grasp evidence strictly beats rest evidence.

    Returns ``None`` when the grasp curve never crosses above the rest
    curve.
    """
    grasp = np.asarray(p_grasp_curve, dtype=float)
    rest = np.asarray(p_rest_curve, dtype=float)
    if grasp.shape != rest.shape or grasp.ndim != 1:
        raise ValueError(
            f"curves must be equal-length 1-D, got {grasp.shape} vs {rest.shape}"
        )
    above = np.flatnonzero(grasp > rest)
    return int(above[0]) if above.size else None
