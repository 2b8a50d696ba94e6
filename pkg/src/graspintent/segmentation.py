"""Greedy Gaussian segmentation of a trial into motion-phase segments.

Each segment is modeled as i.i.d. multivariate Gaussian with its own
empirical mean and covariance, the covariance regularized to ``cov + reg*I``.
Breakpoints are inserted greedily (each insertion maximizes the total
log-likelihood) and then refined by adjustment sweeps that reposition one
breakpoint at a time between its neighbors until a sweep changes nothing.

The segmenter consumes time-major ``(n_points, C)`` series; for EMG trials
that is the MVC-normalized envelope averaged per 32 ms hop.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .validation import as_float_matrix, check_finite

PHASES = ("reach", "grasp", "return", "rest")

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class Segmentation:
    """Ordered breakpoints partitioning ``n_points`` series points.

    Breakpoint b marks the first point of the segment to its right.
    ``index_ms`` converts point indices into milliseconds (32.0 when the
    series is the hop-rate envelope).
    """

    breakpoints: np.ndarray
    n_points: int
    index_ms: float
    objective: float

    def validate(self, min_seg_len=1):
        bps = np.asarray(self.breakpoints, dtype=int)
        bounds = np.concatenate([[0], bps, [self.n_points]])
        if (np.diff(bounds) < min_seg_len).any():
            raise ValueError(
                f"breakpoints {bps.tolist()} leave a segment shorter than "
                f"{min_seg_len} in {self.n_points} points"
            )
        self.breakpoints = bps
        return self

    def segments(self):
        bounds = np.concatenate([[0], self.breakpoints, [self.n_points]])
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def boundaries_ms(self):
        return np.asarray(self.breakpoints, dtype=float) * self.index_ms

    @property
    def end_ms(self):
        return self.n_points * self.index_ms

    def to_json_dict(self):
        return {
            "breakpoints": [int(b) for b in self.breakpoints],
            "n_points": int(self.n_points),
            "index_ms": float(self.index_ms),
            "objective": float(self.objective),
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            breakpoints=np.asarray(doc["breakpoints"], dtype=int),
            n_points=int(doc["n_points"]),
            index_ms=float(doc["index_ms"]),
            objective=float(doc["objective"]),
        ).validate()


def label_segments(seg):
    """Map a 3-breakpoint segmentation onto the four motion phases.

    Returns ``[(phase, start, end), ...]`` in temporal order; start/end are
    point indices with half-open intervals.
    """
    if len(seg.breakpoints) != len(PHASES) - 1:
        raise ValueError(
            f"phase labeling requires {len(PHASES) - 1} breakpoints, "
            f"got {len(seg.breakpoints)}"
        )
    return [
        (phase, start, end)
        for phase, (start, end) in zip(PHASES, seg.segments())
    ]


def phase_at_ms(seg, time_ms):
    """Phase name containing a time instant (clamped to the last segment)."""
    idx = int(np.searchsorted(seg.boundaries_ms(), time_ms, side="right"))
    return PHASES[min(idx, len(PHASES) - 1)]


class _SegmentScanner:
    """Prefix-moment machinery for O(C^3) per-segment log-likelihoods."""

    def __init__(self, x, reg):
        self.x = x
        self.reg = float(reg)
        n, c = x.shape
        self.n, self.c = n, c
        self.s1 = np.concatenate([np.zeros((1, c)), np.cumsum(x, axis=0)])
        outer = x[:, :, None] * x[:, None, :]
        self.s2 = np.concatenate(
            [np.zeros((1, c, c)), np.cumsum(outer, axis=0)]
        )

    def _loglik_from_moments(self, m, mu, m2):
        # m: (k,), mu: (k, C), m2: (k, C, C) second central moment
        sym = 0.5 * (m2 + np.swapaxes(m2, -1, -2))
        eig = np.linalg.eigvalsh(sym)
        eig = np.maximum(eig, 0.0)
        shifted = eig + self.reg
        with np.errstate(divide="ignore", invalid="ignore"):
            logdet = np.where(shifted > 0, np.log(np.where(shifted > 0, shifted, 1.0)), -np.inf).sum(axis=-1)
            trace = np.where(shifted > 0, eig / np.where(shifted > 0, shifted, 1.0), 0.0).sum(axis=-1)
        ll = -0.5 * m * (self.c * _LOG_2PI + logdet + trace)
        return np.where(np.isfinite(logdet), ll, -np.inf)

    def loglik(self, i, j):
        """Log-likelihood of points [i, j) under their own Gaussian."""
        m = j - i
        mu = (self.s1[j] - self.s1[i]) / m
        m2 = (self.s2[j] - self.s2[i]) / m - np.outer(mu, mu)
        return float(
            self._loglik_from_moments(
                np.array([m], dtype=float), mu[None], m2[None]
            )[0]
        )

    def scan(self, start, end, candidates):
        """Split values ``loglik(start, b) + loglik(b, end)`` for each b."""
        b = np.asarray(candidates, dtype=int)
        total = np.zeros(len(b))
        for lo, hi in ((start, b), (b, np.full(len(b), end))):
            lo_arr = np.broadcast_to(np.atleast_1d(lo), b.shape)
            m = (hi - lo_arr).astype(float)
            mu = (self.s1[hi] - self.s1[lo_arr]) / m[:, None]
            m2 = (self.s2[hi] - self.s2[lo_arr]) / m[:, None, None]
            m2 = m2 - mu[:, :, None] * mu[:, None, :]
            total += self._loglik_from_moments(m, mu, m2)
        return total


def gaussian_segment_loglik(x, reg=0.0):
    """Gaussian log-likelihood of a time-major (m, C) segment.

    The segment is scored under its own empirical mean and covariance
    regularized to ``cov + reg*I``. With ``reg == 0`` and a singular
    covariance the result is ``-inf``.
    """
    arr = as_float_matrix(x, "segment")
    if arr.shape[0] < 2:
        raise ValueError(f"segment needs at least 2 points, got {arr.shape[0]}")
    if reg < 0:
        raise ValueError("reg must be >= 0")
    check_finite(arr, "segment")
    return _SegmentScanner(arr, reg).loglik(0, arr.shape[0])


class GreedyGaussianSegmentation(BaseEstimator):
    """Segment a multivariate series by greedy Gaussian likelihood ascent.

    Parameters
    ----------
    n_breakpoints : number of breakpoints to place (3 for the four motion
        phases of a reach-to-grasp trial).
    reg : ridge added to each segment covariance; keeps constant segments
        finite and tempers overfitting of short segments.
    min_seg_len : minimum points per segment (>= 2 so covariances exist).
    max_sweeps : adjustment-sweep cap; sweeps stop early once none moves.

    Attributes (after ``fit``)
    --------------------------
    breakpoints_ : int array of placed breakpoints, strictly increasing.
    objective_ : total regularized log-likelihood of the final partition.
    history_ : objective after the initial state, each insertion, and each
        accepted adjustment move (non-decreasing in well-posed problems).
    """

    def __init__(self, n_breakpoints=3, reg=0.1, min_seg_len=10, max_sweeps=50):
        self.n_breakpoints = n_breakpoints
        self.reg = reg
        self.min_seg_len = min_seg_len
        self.max_sweeps = max_sweeps

    def _validate_params(self, n_points):
        if self.n_breakpoints < 0:
            raise ValueError("n_breakpoints must be >= 0")
        if self.min_seg_len < 2:
            raise ValueError("min_seg_len must be >= 2")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        needed = (self.n_breakpoints + 1) * self.min_seg_len
        if n_points < needed:
            raise ValueError(
                f"{n_points} points cannot host {self.n_breakpoints} "
                f"breakpoints with min_seg_len={self.min_seg_len} "
                f"(needs >= {needed})"
            )

    @staticmethod
    def _capacity(lengths, min_len):
        return int(sum(length // min_len - 1 for length in lengths))

    def fit(self, X, y=None):
        x = as_float_matrix(X, "series")
        check_finite(x, "series")
        n = x.shape[0]
        self._validate_params(n)
        scanner = _SegmentScanner(x, self.reg)
        min_len = int(self.min_seg_len)

        breakpoints = []
        objective = scanner.loglik(0, n) if n >= 2 else 0.0
        history = [objective]

        for round_idx in range(self.n_breakpoints):
            remaining = self.n_breakpoints - round_idx - 1
            bounds = [0] + breakpoints + [n]
            best = None  # (new_objective, position)
            for s, e in zip(bounds[:-1], bounds[1:]):
                if e - s < 2 * min_len:
                    continue
                candidates = np.arange(s + min_len, e - min_len + 1)
                if remaining:
                    # keep enough capacity for the rounds still to come
                    other = self._capacity(
                        [b2 - b1 for b1, b2 in zip(bounds[:-1], bounds[1:])
                         if (b1, b2) != (s, e)],
                        min_len,
                    )
                    left_cap = (candidates - s) // min_len - 1
                    right_cap = (e - candidates) // min_len - 1
                    feasible = other + left_cap + right_cap >= remaining
                    candidates = candidates[feasible]
                    if candidates.size == 0:
                        continue
                vals = scanner.scan(s, e, candidates)
                seg_ll = scanner.loglik(s, e)
                local = objective - seg_ll + vals
                pick = int(np.argmax(local))
                if best is None or local[pick] > best[0]:
                    best = (float(local[pick]), int(candidates[pick]))
            if best is None:
                raise ValueError(
                    "no feasible breakpoint position; series too short for "
                    f"min_seg_len={min_len}"
                )
            objective = best[0]
            breakpoints = sorted(breakpoints + [best[1]])
            history.append(objective)

        objective, breakpoints, history = self._adjust(
            scanner, breakpoints, objective, history, n, min_len
        )

        # re-derive the objective from the final partition so it is exactly
        # the sum of segment log-likelihoods, free of incremental drift
        bounds = [0] + breakpoints + [n]
        objective = sum(
            scanner.loglik(a, b) for a, b in zip(bounds[:-1], bounds[1:])
        )
        history[-1] = objective

        self.breakpoints_ = np.asarray(breakpoints, dtype=int)
        self.objective_ = float(objective)
        self.history_ = history
        self.n_points_ = n
        return self

    def _adjust(self, scanner, breakpoints, objective, history, n, min_len):
        k = len(breakpoints)
        if k == 0:
            return objective, breakpoints, history
        sweeps = 0
        changed = True
        while changed and sweeps < self.max_sweeps:
            changed = False
            sweeps += 1
            for idx in range(k):
                left = breakpoints[idx - 1] if idx > 0 else 0
                right = breakpoints[idx + 1] if idx < k - 1 else n
                candidates = np.arange(left + min_len, right - min_len + 1)
                vals = scanner.scan(left, right, candidates)
                pick = int(np.argmax(vals))  # first max = smallest index
                new_pos = int(candidates[pick])
                current = breakpoints[idx]
                if new_pos == current:
                    continue
                cur_val = float(vals[int(current - (left + min_len))])
                gain = float(vals[pick]) - cur_val
                if gain > 0 or (gain == 0 and new_pos < current):
                    breakpoints[idx] = new_pos
                    objective += gain
                    history.append(objective)
                    changed = True
        return objective, breakpoints, history

    def predict(self, X=None):
        if not hasattr(self, "breakpoints_"):
            raise ValueError("segmentation is not fitted")
        return self.breakpoints_.copy()

    def as_segmentation(self, index_ms):
        """Package the fit result with a time scale (ms per series point)."""
        if not hasattr(self, "breakpoints_"):
            raise ValueError("segmentation is not fitted")
        return Segmentation(
            breakpoints=self.breakpoints_.copy(),
            n_points=self.n_points_,
            index_ms=float(index_ms),
            objective=self.objective_,
        ).validate(self.min_seg_len if len(self.breakpoints_) else 1)
