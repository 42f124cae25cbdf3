"""Cross-boundary parity: every kernel bitwise-equal to the reference.

1000 fuzzed inputs per kernel, compared with exact equality (no tolerance);
batched forms must equal the scalar kernel mapped over the batch.
"""

import numpy as np
import pytest

import segui_kernels as sk
from segui.attention import AttentionMap, RawAttention, aggregate_attention, gate, p_global, p_peak
from segui.core import BBox, Point, ScreenSize
from segui.grpo import categorical_kl, group_advantages, kl_k3
from segui.reward import point_reward, sparse_point_reward

N_FUZZ = 1000


def fuzz_point_cases(seed):
    rng = np.random.default_rng(seed)
    for _ in range(N_FUZZ):
        w, h = (int(v) for v in rng.integers(1, 3000, size=2))
        x1 = rng.uniform(0, w)
        y1 = rng.uniform(0, h)
        box = (x1, y1, rng.uniform(x1, w), rng.uniform(y1, h))
        if rng.random() < 0.2:  # off-screen predictions are legal inputs
            px, py = rng.uniform(-3 * w, 3 * w), rng.uniform(-3 * h, 3 * h)
        elif rng.random() < 0.1:  # boundary
            px, py = box[2], rng.uniform(box[1], box[3])
        else:
            px, py = rng.uniform(0, w), rng.uniform(0, h)
        yield px, py, box, (w, h)


class TestPointReward:
    def test_scalar_parity(self):
        for px, py, box, (w, h) in fuzz_point_cases(1):
            core = point_reward(Point(px, py), BBox(*box), ScreenSize(w, h))
            native = sk.point_reward(px, py, list(box), [w, h])
            assert native == core

    def test_batched_equals_mapped_scalar(self):
        cases = list(fuzz_point_cases(2))
        px = np.array([c[0] for c in cases])
        py = np.array([c[1] for c in cases])
        boxes = np.array([c[2] for c in cases])
        screens = np.array([c[3] for c in cases], dtype=np.float64)
        batch = sk.point_reward_batch(px, py, boxes, screens)
        for i, (x, y, box, screen) in enumerate(cases):
            assert batch[i] == sk.point_reward(x, y, list(box), list(screen))

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError, match="degenerate bbox"):
            sk.point_reward(1.0, 1.0, [10, 0, 0, 10], [100, 100])


class TestSparseReward:
    def test_scalar_parity(self):
        for px, py, box, _ in fuzz_point_cases(3):
            core = sparse_point_reward(Point(px, py), BBox(*box))
            assert sk.sparse_point_reward(px, py, list(box)) == core

    def test_batched_equals_mapped_scalar(self):
        cases = list(fuzz_point_cases(4))
        px = np.array([c[0] for c in cases])
        py = np.array([c[1] for c in cases])
        boxes = np.array([c[2] for c in cases])
        batch = sk.sparse_point_reward_batch(px, py, boxes)
        for i, (x, y, box, _) in enumerate(cases):
            assert batch[i] == sk.sparse_point_reward(x, y, list(box))


class TestGroupAdvantages:
    def test_parity(self):
        rng = np.random.default_rng(5)
        for trial in range(N_FUZZ):
            n = int(rng.integers(2, 17))
            if trial % 50 == 0:
                rewards = np.full(n, rng.uniform(-5, 5))  # zero variance
            else:
                rewards = rng.normal(rng.uniform(-10, 10), rng.uniform(0.01, 20), size=n)
            core = np.array(group_advantages(list(rewards)))
            native = sk.group_advantages(rewards)
            assert np.array_equal(native, core)

    def test_worked_example(self):
        assert np.array_equal(
            sk.group_advantages([0.0, 1.0, 2.0, 1.0]),
            np.array(group_advantages([0.0, 1.0, 2.0, 1.0])),
        )

    def test_batched_equals_mapped_scalar(self):
        rng = np.random.default_rng(6)
        rewards = rng.normal(size=(200, 8))
        batch = sk.group_advantages_batch(rewards)
        for g in range(200):
            assert np.array_equal(batch[g], sk.group_advantages(rewards[g]))

    def test_small_group_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            sk.group_advantages([1.0])


class TestCategoricalKL:
    def test_parity(self):
        rng = np.random.default_rng(7)
        for _ in range(N_FUZZ):
            k = int(rng.integers(2, 40))
            p = rng.dirichlet(np.ones(k) * rng.uniform(0.3, 3.0))
            q = rng.dirichlet(np.ones(k) * rng.uniform(0.3, 3.0))
            assert sk.categorical_kl(p, q) == categorical_kl(list(p), list(q))

    def test_degenerate_support_parity(self):
        p = np.array([1.0, 0.0])
        q = np.array([0.5, 0.5])
        assert sk.categorical_kl(p, q) == categorical_kl(list(p), list(q))

    def test_batched_equals_mapped_scalar(self):
        rng = np.random.default_rng(8)
        p = rng.dirichlet(np.ones(16), size=100)
        q = rng.dirichlet(np.ones(16), size=100)
        batch = sk.categorical_kl_batch(p, q)
        for i in range(100):
            assert batch[i] == sk.categorical_kl(p[i], q[i])

    def test_error_contracts(self):
        with pytest.raises(ValueError, match="sizes differ"):
            sk.categorical_kl([0.5, 0.5], [1.0])
        with pytest.raises(ValueError, match="sum to 1"):
            sk.categorical_kl([0.5, 0.4], [0.5, 0.5])
        with pytest.raises(ValueError, match="strictly positive"):
            sk.categorical_kl([0.5, 0.5], [1.0, 0.0])


class TestK3:
    def test_parity(self):
        rng = np.random.default_rng(9)
        for _ in range(N_FUZZ):
            po, pn = rng.uniform(1e-9, 1.0, size=2)
            assert sk.kl_k3(po, pn) == kl_k3(po, pn)

    def test_batched_equals_mapped_scalar(self):
        rng = np.random.default_rng(10)
        po = rng.uniform(0.01, 1.0, size=300)
        pn = rng.uniform(0.01, 1.0, size=300)
        batch = sk.kl_k3_batch(po, pn)
        for i in range(300):
            assert batch[i] == sk.kl_k3(po[i], pn[i])

    def test_zero_probability_rejected(self):
        with pytest.raises(ValueError, match="> 0"):
            sk.kl_k3(0.0, 0.5)


class TestAggregateAttention:
    def test_parity(self):
        rng = np.random.default_rng(11)
        for _ in range(N_FUZZ):
            rows, cols = (int(v) for v in rng.integers(1, 5, size=2))
            n_layers = int(rng.integers(1, 4))
            n_tokens = int(rng.integers(1, 4))
            span_start = int(rng.integers(0, 4))
            extra = int(rng.integers(0, 3))
            att = rng.uniform(0, 2, size=(n_layers, n_tokens, span_start + rows * cols + extra))
            if rng.random() < 0.2:
                att[rng.integers(n_layers), rng.integers(n_tokens), :] = 0.0
            width, height = (int(v) for v in rng.integers(1, 14, size=2))
            core = aggregate_attention(
                RawAttention(att, span_start, span_start + rows * cols, rows, cols),
                ScreenSize(width, height),
            )
            native = sk.aggregate_attention(
                att, span_start, span_start + rows * cols, rows, cols, width, height
            )
            assert np.array_equal(native, core.grid)

    def test_span_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not fill"):
            sk.aggregate_attention(np.zeros((1, 1, 5)), 0, 5, 2, 2, 4, 4)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            sk.aggregate_attention(-np.ones((1, 1, 4)), 0, 4, 2, 2, 4, 4)


def fuzz_maps(seed):
    rng = np.random.default_rng(seed)
    for _ in range(N_FUZZ):
        h, w = (int(v) for v in rng.integers(1, 17, size=2))
        grid = rng.uniform(0, 1, size=(h, w))
        x1, y1 = rng.uniform(-1, w), rng.uniform(-1, h)
        box = (x1, y1, rng.uniform(max(x1, 0), w + 1), rng.uniform(max(y1, 0), h + 1))
        tau = float(rng.uniform(0.05, 0.95))
        yield grid, box, tau


class TestGatePredicates:
    def test_p_peak_parity(self):
        for grid, box, tau in fuzz_maps(12):
            assert sk.p_peak(grid, list(box), tau) == p_peak(AttentionMap(grid), BBox(*box), tau)

    def test_p_global_parity(self):
        for grid, box, _ in fuzz_maps(13):
            assert sk.p_global(grid, list(box)) == p_global(AttentionMap(grid), BBox(*box))

    def test_gate_parity(self):
        for grid, box, tau in fuzz_maps(14):
            assert sk.gate(grid, list(box), tau) == gate(AttentionMap(grid), BBox(*box), tau)

    def test_worked_map(self):
        grid = np.array([[1.0, 0.1], [0.05, 0.2]])
        assert sk.gate(grid, [0, 0, 1, 1], 0.2) == 1
        assert sk.p_peak(grid, [0, 0, 1, 1], 0.2) is True
        assert sk.p_global(grid, [0, 0, 1, 1]) is True

    def test_gate_batch_equals_mapped_scalar(self):
        rng = np.random.default_rng(15)
        maps = rng.uniform(0, 1, size=(150, 8, 8))
        x1 = rng.uniform(0, 7, size=150)
        y1 = rng.uniform(0, 7, size=150)
        boxes = np.stack([x1, y1, x1 + rng.uniform(0, 1, 150) * (8 - x1), y1 + rng.uniform(0, 1, 150) * (8 - y1)], 1)
        batch = sk.gate_batch(maps, boxes, 0.2)
        for i in range(150):
            assert batch[i] == sk.gate(maps[i], boxes[i], 0.2)

    def test_tau_validation(self):
        with pytest.raises(ValueError, match="tau"):
            sk.p_peak(np.zeros((2, 2)), [0, 0, 1, 1], 1.5)

    def test_out_of_range_map_rejected(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            sk.gate(np.full((2, 2), 1.5), [0, 0, 1, 1], 0.2)


class TestPurity:
    def test_repeated_calls_and_no_input_mutation(self):
        rng = np.random.default_rng(16)
        grid = rng.uniform(0, 1, size=(6, 6))
        snapshot = grid.copy()
        first = sk.gate(grid, [1, 1, 4, 4], 0.2)
        for _ in range(10):
            assert sk.gate(grid, [1, 1, 4, 4], 0.2) == first
        assert np.array_equal(grid, snapshot)

        rewards = rng.normal(size=12)
        snap = rewards.copy()
        out1 = sk.group_advantages(rewards)
        out2 = sk.group_advantages(rewards)
        assert np.array_equal(out1, out2)
        assert np.array_equal(rewards, snap)

    def test_concurrent_calls(self):
        from concurrent.futures import ThreadPoolExecutor

        rng = np.random.default_rng(17)
        maps = rng.uniform(0, 1, size=(64, 16, 16))
        boxes = np.tile(np.array([2.0, 2.0, 9.0, 9.0]), (64, 1))
        expected = [sk.gate(maps[i], boxes[i], 0.2) for i in range(64)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            got = list(pool.map(lambda i: sk.gate(maps[i], boxes[i], 0.2), range(64)))
        assert got == expected
