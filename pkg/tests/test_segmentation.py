import itertools

import numpy as np
import pytest

from graspintent.segmentation import (
    GreedyGaussianSegmentation,
    Segmentation,
    gaussian_segment_loglik,
    label_segments,
    phase_at_ms,
)


def reference_loglik(x, reg):
    """Independent re-derivation: explicit mean/covariance, eigendecomposition."""
    x = np.asarray(x, dtype=float)
    m, c = x.shape
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / m
    eig = np.linalg.eigvalsh((cov + cov.T) / 2.0)
    eig = np.maximum(eig, 0.0)
    shifted = eig + reg
    if np.any(shifted <= 0):
        return -np.inf
    return -0.5 * m * (
        c * np.log(2 * np.pi) + np.log(shifted).sum() + (eig / shifted).sum()
    )


def exhaustive_best(x, k, min_len, reg):
    """Brute-force optimum over all breakpoint tuples."""
    n = x.shape[0]
    best = (-np.inf, ())
    positions = range(min_len, n - min_len + 1)
    for combo in itertools.combinations(positions, k):
        bounds = (0,) + combo + (n,)
        if any(b - a < min_len for a, b in zip(bounds[:-1], bounds[1:])):
            continue
        total = sum(
            reference_loglik(x[a:b], reg)
            for a, b in zip(bounds[:-1], bounds[1:])
        )
        if total > best[0]:
            best = (total, combo)
    return best


def planted_series(rng, n, c, k, min_len, separation=3.0):
    """Random piecewise-constant-mean Gaussian series with known breakpoints."""
    while True:
        cuts = np.sort(rng.choice(np.arange(min_len, n - min_len + 1),
                                  size=k, replace=False))
        bounds = np.concatenate([[0], cuts, [n]])
        if np.all(np.diff(bounds) >= min_len):
            break
    x = np.empty((n, c))
    for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        mean = separation * rng.standard_normal(c)
        x[a:b] = mean + rng.standard_normal((b - a, c))
    return x, cuts


class TestSegmentLoglik:
    def test_standard_normal_matches_gaussian_entropy(self):
        rng = np.random.default_rng(0)
        c, m = 3, 60000
        x = rng.standard_normal((m, c))
        per_sample = gaussian_segment_loglik(x, reg=0.0) / m
        analytic = -(c / 2.0) * np.log(2 * np.pi * np.e)
        assert per_sample == pytest.approx(analytic, abs=0.01)

    def test_duplicating_doubles(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((40, 4))
        single = gaussian_segment_loglik(x, reg=0.1)
        double = gaussian_segment_loglik(np.vstack([x, x]), reg=0.1)
        assert double == pytest.approx(2.0 * single, rel=1e-9)

    def test_constant_segment_finite_with_reg(self):
        x = np.full((30, 5), 2.5)
        value = gaussian_segment_loglik(x, reg=0.1)
        assert np.isfinite(value)

    def test_constant_segment_degenerate_without_reg(self):
        x = np.full((30, 5), 2.5)
        assert gaussian_segment_loglik(x, reg=0.0) == -np.inf

    def test_matches_reference_on_random_segments(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            m = int(rng.integers(2, 80))
            c = int(rng.integers(1, 6))
            reg = float(rng.choice([0.0, 0.05, 0.5]))
            x = rng.standard_normal((m, c)) * rng.uniform(0.5, 2.0)
            got = gaussian_segment_loglik(x, reg)
            want = reference_loglik(x, reg)
            if np.isfinite(want):
                assert got == pytest.approx(want, rel=1e-9)
            else:
                assert got == -np.inf

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            gaussian_segment_loglik(np.ones((1, 3)), 0.1)


class TestGreedyFit:
    def test_zero_breakpoints_degenerate(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((50, 2))
        ggs = GreedyGaussianSegmentation(n_breakpoints=0, reg=0.1,
                                         min_seg_len=2).fit(x)
        assert ggs.breakpoints_.size == 0
        assert ggs.objective_ == pytest.approx(
            gaussian_segment_loglik(x, 0.1), rel=1e-9
        )

    def test_planted_recovery(self):
        rng = np.random.default_rng(4)
        hits = 0
        for _ in range(20):
            x, cuts = planted_series(rng, 120, 3, 3, min_len=8)
            ggs = GreedyGaussianSegmentation(3, reg=0.1, min_seg_len=5).fit(x)
            if np.all(np.abs(ggs.breakpoints_ - cuts) <= 2):
                hits += 1
        assert hits >= 19

    def test_history_monotone_nondecreasing(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x, _ = planted_series(rng, 90, 2, 2, min_len=6)
            ggs = GreedyGaussianSegmentation(2, reg=0.1, min_seg_len=4).fit(x)
            h = np.asarray(ggs.history_)
            assert np.all(np.diff(h) >= -1e-9 * np.abs(h[:-1]) - 1e-9)

    def test_objective_recomputes_from_breakpoints(self):
        rng = np.random.default_rng(6)
        x, _ = planted_series(rng, 100, 3, 3, min_len=7)
        ggs = GreedyGaussianSegmentation(3, reg=0.2, min_seg_len=5).fit(x)
        bounds = np.concatenate([[0], ggs.breakpoints_, [x.shape[0]]])
        total = sum(
            gaussian_segment_loglik(x[a:b], 0.2)
            for a, b in zip(bounds[:-1], bounds[1:])
        )
        assert ggs.objective_ == pytest.approx(total, rel=1e-6)

    def test_channel_permutation_invariance(self):
        rng = np.random.default_rng(7)
        x, _ = planted_series(rng, 110, 4, 3, min_len=6)
        ggs_a = GreedyGaussianSegmentation(3, reg=0.1, min_seg_len=5).fit(x)
        perm = rng.permutation(4)
        ggs_b = GreedyGaussianSegmentation(3, reg=0.1, min_seg_len=5).fit(x[:, perm])
        np.testing.assert_array_equal(ggs_a.breakpoints_, ggs_b.breakpoints_)

    def test_never_beats_exhaustive_and_usually_matches(self):
        rng = np.random.default_rng(8)
        matches, total = 0, 0
        for _ in range(25):
            n = int(rng.integers(30, 61))
            c = int(rng.integers(1, 3))
            k = int(rng.integers(1, 3))
            x, _ = planted_series(rng, n, c, k, min_len=4)
            ggs = GreedyGaussianSegmentation(k, reg=0.1, min_seg_len=4).fit(x)
            best_value, _ = exhaustive_best(x, k, 4, 0.1)
            assert ggs.objective_ <= best_value + 1e-6 * abs(best_value)
            total += 1
            if ggs.objective_ >= best_value - 1e-6 * abs(best_value):
                matches += 1
        assert matches / total >= 0.9

    def test_min_seg_len_respected(self):
        rng = np.random.default_rng(9)
        x, _ = planted_series(rng, 80, 2, 3, min_len=10)
        ggs = GreedyGaussianSegmentation(3, reg=0.1, min_seg_len=10).fit(x)
        bounds = np.concatenate([[0], ggs.breakpoints_, [80]])
        assert np.all(np.diff(bounds) >= 10)

    def test_infeasible_rejected(self):
        with pytest.raises(ValueError):
            GreedyGaussianSegmentation(3, min_seg_len=10).fit(
                np.random.default_rng(0).standard_normal((30, 2))
            )

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        x, _ = planted_series(rng, 100, 3, 3, min_len=6)
        a = GreedyGaussianSegmentation(3, reg=0.1, min_seg_len=5).fit(x)
        b = GreedyGaussianSegmentation(3, reg=0.1, min_seg_len=5).fit(x)
        np.testing.assert_array_equal(a.breakpoints_, b.breakpoints_)
        assert a.objective_ == b.objective_


class TestSegmentationType:
    def test_validate_orders_and_lengths(self):
        seg = Segmentation(np.array([10, 20, 30]), 40, 32.0, 0.0)
        assert seg.validate(min_seg_len=10) is seg
        with pytest.raises(ValueError):
            Segmentation(np.array([10, 12, 30]), 40, 32.0, 0.0).validate(10)

    def test_label_segments_positional(self):
        seg = Segmentation(np.array([100, 200, 300]), 400, 1.0, 0.0)
        labeled = label_segments(seg)
        assert labeled == [
            ("reach", 0, 100),
            ("grasp", 100, 200),
            ("return", 200, 300),
            ("rest", 300, 400),
        ]

    def test_label_segments_requires_three_breakpoints(self):
        with pytest.raises(ValueError):
            label_segments(Segmentation(np.array([5, 10]), 20, 1.0, 0.0))

    def test_phase_at_ms_boundaries(self):
        seg = Segmentation(np.array([10, 20, 30]), 40, 32.0, 0.0)
        assert phase_at_ms(seg, 0.0) == "reach"
        assert phase_at_ms(seg, 10 * 32.0) == "grasp"  # boundary goes right
        assert phase_at_ms(seg, 10 * 32.0 - 0.01) == "reach"
        assert phase_at_ms(seg, 39 * 32.0) == "rest"
        assert phase_at_ms(seg, 10_000.0) == "rest"  # clamped

    def test_json_roundtrip(self):
        seg = Segmentation(np.array([10, 20, 30]), 40, 32.0, -123.456)
        back = Segmentation.from_json_dict(seg.to_json_dict())
        np.testing.assert_array_equal(back.breakpoints, seg.breakpoints)
        assert back.index_ms == seg.index_ms
        assert back.objective == seg.objective
