"""Reward kernels against straight-from-the-formula oracles."""

import math

import numpy as np
import pytest

from segui.core import BBox, Point, ScreenSize
from segui.reward import (
    RewardConfig,
    combined_reward,
    d_max,
    format_reward,
    normalized_distance,
    point_reward,
    point_reward_batch,
    sparse_point_reward,
)

S100 = ScreenSize(100, 100)
BOX = BBox(40, 40, 60, 60)


def oracle_point_reward(px, py, b: BBox, s: ScreenSize) -> float:
    """Independent re-implementation straight from the distance/decay formulas."""
    cx = (b.x1 + b.x2) / 2
    cy = (b.y1 + b.y2) / 2
    d = math.sqrt((px / s.width - cx / s.width) ** 2 + (py / s.height - cy / s.height) ** 2)
    dmax = max(
        math.sqrt((vx / s.width - cx / s.width) ** 2 + (vy / s.height - cy / s.height) ** 2)
        for vx, vy in ((0, 0), (s.width, 0), (0, s.height), (s.width, s.height))
    )
    decay = (1 - min(d / dmax, 1.0)) ** 2
    if b.x1 <= px <= b.x2 and b.y1 <= py <= b.y2:
        return 1.0 + decay
    return decay


class TestNormalizedDistance:
    def test_center_is_zero(self):
        assert normalized_distance(Point(50, 50), BOX, S100) == 0.0

    def test_axis_offset(self):
        assert normalized_distance(Point(55, 50), BOX, S100) == pytest.approx(0.05, abs=1e-15)

    def test_farther_offset(self):
        assert normalized_distance(Point(80, 50), BOX, S100) == pytest.approx(0.30, abs=1e-15)

    def test_each_axis_normalized_by_own_dimension(self):
        s = ScreenSize(200, 100)
        b = BBox(0, 0, 200, 100)
        # (150, 75): dx = 0.25 of width, dy = 0.25 of height
        assert normalized_distance(Point(150, 75), b, s) == pytest.approx(math.sqrt(0.125), rel=1e-12)


class TestDMax:
    def test_centered_box(self):
        assert d_max(BOX, S100) == pytest.approx(math.sqrt(0.5), rel=1e-12)

    def test_corner_box(self):
        assert d_max(BBox(0, 0, 0, 0), S100) == pytest.approx(math.sqrt(2), rel=1e-12)

    def test_rectangular_screen_full_box(self):
        assert d_max(BBox(0, 0, 200, 100), ScreenSize(200, 100)) == pytest.approx(math.sqrt(0.5), rel=1e-12)

    def test_range(self):
        rng = np.random.default_rng(2)
        for _ in range(2000):
            w, h = rng.integers(1, 2000, size=2)
            x1, y1 = rng.uniform(0, w), rng.uniform(0, h)
            b = BBox(x1, y1, min(w, x1 + rng.uniform(0, w)), min(h, y1 + rng.uniform(0, h)))
            dm = d_max(b, ScreenSize(int(w), int(h)))
            assert 0 < dm <= math.sqrt(2) + 1e-12


class TestPointReward:
    def test_center_inside(self):
        assert point_reward(Point(50, 50), BOX, S100) == 2.0

    def test_inside_offset(self):
        # 1 + (1 - 0.05/sqrt(0.5))^2, frozen from the arithmetic oracle
        assert point_reward(Point(55, 50), BOX, S100) == pytest.approx(1.8635786437626902, rel=1e-12)

    def test_outside(self):
        # (1 - 0.30/sqrt(0.5))^2, frozen from the arithmetic oracle
        assert point_reward(Point(80, 50), BOX, S100) == pytest.approx(0.3314718625761429, rel=1e-12)

    def test_absent_point(self):
        assert point_reward(None, BOX, S100) == 0.0

    def test_boundary_takes_inside_branch(self):
        r = point_reward(Point(60, 50), BOX, S100)
        assert r >= 1.0

    def test_matches_oracle_on_fuzz(self):
        rng = np.random.default_rng(7)
        for _ in range(20000):
            w, h = (int(v) for v in rng.integers(1, 3000, size=2))
            x1 = rng.uniform(0, w)
            y1 = rng.uniform(0, h)
            b = BBox(x1, y1, rng.uniform(x1, w), rng.uniform(y1, h))
            p = Point(rng.uniform(0, w), rng.uniform(0, h))
            got = point_reward(p, b, ScreenSize(w, h))
            want = oracle_point_reward(p.x, p.y, b, ScreenSize(w, h))
            assert got == pytest.approx(want, rel=1e-12)

    def test_radial_monotonicity(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            w, h = (int(v) for v in rng.integers(50, 2000, size=2))
            s = ScreenSize(w, h)
            x1 = rng.uniform(0, w * 0.8)
            y1 = rng.uniform(0, h * 0.8)
            b = BBox(x1, y1, rng.uniform(x1, w), rng.uniform(y1, h))
            c = b.center
            angle = rng.uniform(0, 2 * math.pi)
            radii = np.sort(rng.uniform(0, 2 * max(w, h), size=30))
            rewards = [
                point_reward(Point(c.x + r * math.cos(angle), c.y + r * math.sin(angle)), b, s)
                for r in radii
            ]
            for earlier, later in zip(rewards, rewards[1:]):
                assert later <= earlier + 1e-12

    def test_boundary_drop_is_exactly_one(self):
        rng = np.random.default_rng(17)
        eps = 1e-9
        for _ in range(300):
            w, h = (int(v) for v in rng.integers(100, 2000, size=2))
            s = ScreenSize(w, h)
            x1 = rng.uniform(1, w * 0.6)
            y1 = rng.uniform(1, h * 0.6)
            b = BBox(x1, y1, rng.uniform(x1 + 1, w - 1), rng.uniform(y1 + 1, h - 1))
            y = rng.uniform(b.y1 + 0.25 * b.height, b.y2 - 0.25 * b.height)
            inside = point_reward(Point(b.x2 - eps, y), b, s)
            outside = point_reward(Point(b.x2 + eps, y), b, s)
            assert inside - outside == pytest.approx(1.0, abs=1e-6)

    def test_scale_invariance(self):
        rng = np.random.default_rng(19)
        for _ in range(1000):
            w, h = (int(v) for v in rng.integers(10, 500, size=2))
            k = int(rng.integers(2, 9))
            x1, y1 = rng.uniform(0, w), rng.uniform(0, h)
            b = BBox(x1, y1, rng.uniform(x1, w), rng.uniform(y1, h))
            p = Point(rng.uniform(-w, 2 * w), rng.uniform(-h, 2 * h))
            base = point_reward(p, b, ScreenSize(w, h))
            scaled = point_reward(
                Point(p.x * k, p.y * k),
                BBox(b.x1 * k, b.y1 * k, b.x2 * k, b.y2 * k),
                ScreenSize(w * k, h * k),
            )
            assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)

    def test_bounds_even_offscreen(self):
        rng = np.random.default_rng(23)
        for _ in range(20000):
            w, h = (int(v) for v in rng.integers(1, 1000, size=2))
            x1, y1 = rng.uniform(0, w), rng.uniform(0, h)
            b = BBox(x1, y1, rng.uniform(x1, w), rng.uniform(y1, h))
            p = Point(rng.uniform(-5 * w, 5 * w), rng.uniform(-5 * h, 5 * h))
            r = point_reward(p, b, ScreenSize(w, h))
            assert 0.0 <= r <= 2.0

    def test_sparse_hit_implies_dense_at_least_one(self):
        rng = np.random.default_rng(29)
        for _ in range(5000):
            w, h = (int(v) for v in rng.integers(1, 500, size=2))
            x1, y1 = rng.uniform(0, w), rng.uniform(0, h)
            b = BBox(x1, y1, rng.uniform(x1, w), rng.uniform(y1, h))
            p = Point(rng.uniform(0, w), rng.uniform(0, h))
            if sparse_point_reward(p, b) == 1:
                assert point_reward(p, b, ScreenSize(w, h)) >= 1.0


class TestSparseAndFormat:
    def test_sparse_examples(self):
        assert sparse_point_reward(Point(50, 50), BOX) == 1
        assert sparse_point_reward(Point(80, 50), BOX) == 0
        assert sparse_point_reward(None, BOX) == 0

    def test_format_reward(self):
        assert format_reward(True) == 1
        assert format_reward(False) == 0

    def test_format_round_trip_with_parser(self):
        from segui.core import parse_click_point, render_click_point

        _, ok = parse_click_point(render_click_point(Point(12, 34)))
        assert format_reward(ok) == 1


class TestCombinedReward:
    def test_max_dense(self):
        assert combined_reward(1.0, 2.0, RewardConfig()) == 5.0

    def test_zero(self):
        assert combined_reward(0.0, 0.0, RewardConfig(alpha=3, beta=1)) == 0.0

    def test_weighted(self):
        # 1*1 + 2*(1 - 0.30/sqrt(0.5))^2, frozen from the arithmetic oracle
        rp = point_reward(Point(80, 50), BOX, S100)
        assert combined_reward(1.0, rp, RewardConfig()) == pytest.approx(1.662943725152286, rel=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RewardConfig(alpha=0, beta=0)
        with pytest.raises(ValueError):
            RewardConfig(mode="fuzzy")


class TestBatchKernel:
    def test_matches_scalar_bitwise(self):
        rng = np.random.default_rng(31)
        n = 5000
        w = rng.integers(1, 2000, size=n).astype(float)
        h = rng.integers(1, 2000, size=n).astype(float)
        x1 = rng.uniform(0, w)
        y1 = rng.uniform(0, h)
        x2 = x1 + rng.uniform(0, w - x1)
        y2 = y1 + rng.uniform(0, h - y1)
        px = rng.uniform(-w, 2 * w)
        py = rng.uniform(-h, 2 * h)
        boxes = np.stack([x1, y1, x2, y2], axis=1)
        screens = np.stack([w, h], axis=1)
        batch = point_reward_batch(px, py, boxes, screens)
        for i in range(0, n, 7):
            scalar = point_reward(
                Point(px[i], py[i]),
                BBox(x1[i], y1[i], x2[i], y2[i]),
                ScreenSize(int(w[i]), int(h[i])),
            )
            assert batch[i] == scalar
