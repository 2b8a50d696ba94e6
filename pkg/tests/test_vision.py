import numpy as np
import pytest

from graspintent.dataio import BoundingBox, DetectionFrame, N_GRASP_LABELS
from graspintent.vision import resample_vision, select_box


def box(x, y, w, h, peak=None):
    probs = np.full(N_GRASP_LABELS, 1.0 / N_GRASP_LABELS)
    if peak is not None:
        probs = np.full(N_GRASP_LABELS, 0.02)
        probs[peak - 1] = 1.0 - 0.02 * 12
    return BoundingBox(x=x, y=y, w=w, h=h, probs=probs)


def frame(gaze, boxes, t=0.0):
    return DetectionFrame(time_ms=t, gaze_xy=np.asarray(gaze, float),
                          boxes=boxes)


class TestSelectBox:
    def test_gaze_inside_single_box(self):
        f = frame([5.0, 5.0], [box(0, 0, 10, 10, peak=3), box(50, 50, 10, 10, peak=9)])
        probs = select_box(f)
        assert np.argmax(probs) + 1 == 3

    def test_nearest_center_when_outside(self):
        f = frame([10.0, 0.0], [box(-5, -5, 10, 10, peak=1), box(95, -5, 10, 10, peak=2)])
        # centers at (0,0) and (100,0); gaze at (10,0) -> first box
        probs = select_box(f)
        assert np.argmax(probs) + 1 == 1

    def test_containment_prefers_smallest_area(self):
        f = frame([5.0, 5.0], [box(0, 0, 100, 100, peak=4), box(2, 2, 10, 10, peak=8)])
        assert np.argmax(select_box(f)) + 1 == 8

    def test_tie_breaks_to_lowest_index(self):
        f = frame([5.0, 5.0], [box(0, 0, 10, 10, peak=6), box(0, 0, 10, 10, peak=11)])
        assert np.argmax(select_box(f)) + 1 == 6

    def test_no_boxes_returns_none(self):
        assert select_box(frame([0.0, 0.0], [])) is None

    def test_malformed_box_rejected(self):
        with pytest.raises(ValueError):
            select_box(frame([0.0, 0.0], [box(0, 0, -5, 10)]))

    def test_matches_brute_force_on_random_frames(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            boxes = []
            for i in range(n):
                probs = rng.dirichlet(np.ones(N_GRASP_LABELS))
                boxes.append(
                    BoundingBox(
                        x=float(rng.uniform(-100, 100)),
                        y=float(rng.uniform(-100, 100)),
                        w=float(rng.uniform(1, 80)),
                        h=float(rng.uniform(1, 80)),
                        probs=probs,
                    )
                )
            gaze = rng.uniform(-120, 120, size=2)
            f = frame(gaze, boxes)

            containing = [
                (b.area, i) for i, b in enumerate(boxes)
                if b.contains(gaze[0], gaze[1])
            ]
            if containing:
                _, expect = min(containing)
            else:
                scored = [
                    ((b.center[0] - gaze[0]) ** 2 + (b.center[1] - gaze[1]) ** 2,
                     b.area, i)
                    for i, b in enumerate(boxes)
                ]
                _, _, expect = min(scored)
            np.testing.assert_array_equal(select_box(f), boxes[expect].probs)

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        boxes = [box(0, 0, 10, 10, peak=2), box(30, 40, 25, 15, peak=7)]
        gaze = np.array([12.0, 8.0])
        base = select_box(frame(gaze, boxes))
        for _ in range(10):
            shift = rng.uniform(-500, 500, size=2)
            moved = [
                BoundingBox(b.x + shift[0], b.y + shift[1], b.w, b.h, b.probs)
                for b in boxes
            ]
            np.testing.assert_array_equal(
                select_box(frame(gaze + shift, moved)), base
            )


class TestResampleVision:
    def test_zero_order_hold(self):
        frames = [
            frame([5, 5], [box(0, 0, 10, 10, peak=1)], t=0.0),
            frame([5, 5], [box(0, 0, 10, 10, peak=2)], t=16.7),
            frame([5, 5], [box(0, 0, 10, 10, peak=3)], t=33.3),
        ]
        stream = resample_vision(frames, [32.0])
        assert np.argmax(stream.probs[0]) + 1 == 2

    def test_before_first_frame_uniform(self):
        frames = [frame([5, 5], [box(0, 0, 10, 10, peak=4)], t=100.0)]
        stream = resample_vision(frames, [0.0, 50.0, 150.0])
        np.testing.assert_allclose(stream.probs[0], 1.0 / 13)
        np.testing.assert_allclose(stream.probs[1], 1.0 / 13)
        assert np.argmax(stream.probs[2]) + 1 == 4

    def test_no_frames_all_uniform(self):
        stream = resample_vision([], [0.0, 32.0, 64.0])
        np.testing.assert_allclose(stream.probs, 1.0 / 13)

    def test_boxless_frame_uniform(self):
        frames = [frame([5, 5], [], t=0.0)]
        stream = resample_vision(frames, [10.0])
        np.testing.assert_allclose(stream.probs[0], 1.0 / 13)

    def test_constant_posterior_constant_stream(self):
        frames = [
            frame([5, 5], [box(0, 0, 10, 10, peak=9)], t=float(i) * 16.0)
            for i in range(20)
        ]
        times = np.arange(5) * 32.0 + 16.0
        stream = resample_vision(frames, times)
        assert np.all(np.argmax(stream.probs, axis=1) + 1 == 9)

    def test_output_times_equal_input_times(self):
        frames = [frame([5, 5], [box(0, 0, 10, 10, peak=1)], t=0.0)]
        times = [7.0, 13.5, 99.25]
        stream = resample_vision(frames, times)
        np.testing.assert_array_equal(stream.times_ms, times)

    def test_unsorted_frames_rejected(self):
        frames = [
            frame([5, 5], [box(0, 0, 10, 10, peak=1)], t=50.0),
            frame([5, 5], [box(0, 0, 10, 10, peak=2)], t=10.0),
        ]
        with pytest.raises(ValueError):
            resample_vision(frames, [60.0])
