import numpy as np
import pytest

from replay_td.buffer import Batch, ReplayBuffer, Transition, UniformStream, empirics, empirics_from_columns
from replay_td.exceptions import EmptyBuffer

T0, T1, T2 = Transition(0, 1.0, 1), Transition(1, 0.5, 0), Transition(1, -1.0, 1)


def filled(capacity, items):
    buf = ReplayBuffer(capacity)
    for t in items:
        buf.push(t)
    return buf


class TestPush:
    def test_eviction(self):
        assert filled(2, [T0, T1, T2]).entries == [T1, T2]

    def test_fill_phase(self):
        buf = filled(2, [T0, T1])
        assert buf.entries == [T0, T1]
        assert buf.full

    def test_capacity_one(self):
        buf = filled(1, [T0, T1])
        assert buf.entries == [T1]
        assert buf.insert_count == 2

    def test_length_tracks_inserts(self):
        buf = ReplayBuffer(3)
        for i, t in enumerate([T0, T1, T2, T0, T1]):
            buf.push(t)
            assert len(buf) == min(i + 1, 3)

    def test_invalid_capacity(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)


class TestSampling:
    def test_single_entry(self):
        out = filled(4, [T0]).sample_minibatch(3, np.random.default_rng(0))
        assert out == [T0, T0, T0]

    def test_binomial_frequencies(self):
        buf = filled(2, [T0, T1])
        batch = buf.sample_batch(100_000, np.random.default_rng(7))
        share = np.mean(batch.s == 0)
        assert abs(share - 0.5) <= 3 * np.sqrt(0.25 / 100_000)

    def test_zero_draws(self):
        assert filled(2, [T0, T1]).sample_minibatch(0, np.random.default_rng(0)) == []

    def test_empty_buffer(self):
        with pytest.raises(EmptyBuffer):
            ReplayBuffer(2).sample_minibatch(1, np.random.default_rng(0))

    def test_deterministic(self):
        buf = filled(3, [T0, T1, T2])
        a = buf.sample_minibatch(20, np.random.default_rng(5))
        b = buf.sample_minibatch(20, np.random.default_rng(5))
        assert a == b

    def test_positions_follow_fifo_order_after_wrap(self):
        buf = filled(3, [T2, T0, T1, T2])  # FIFO: T0, T1, T2 with a wrapped head
        stream = UniformStream(np.random.default_rng(1))
        u = UniformStream(np.random.default_rng(1)).take(50)
        got = buf.sample_minibatch(50, stream)
        expected = [buf.entries[min(int(x * 3), 2)] for x in u]
        assert got == expected


class TestUniformStream:
    def test_chunking_does_not_change_values(self):
        a = UniformStream(np.random.default_rng(3), block=7)
        b = UniformStream(np.random.default_rng(3), block=7)
        whole = a.take(40)
        parts = np.concatenate([b.take(3), [b.one()], b.take(20), b.take(16)])
        np.testing.assert_array_equal(whole, parts)


class TestEmpirics:
    def test_counting_oracle(self):
        buf = filled(4, [Transition(0, 1.0, 1), Transition(1, 0.5, 0), Transition(0, 1.0, 1), Transition(0, 1.0, 1)])
        e = empirics(buf, 2)
        np.testing.assert_array_equal(e.mu_s, [0.75, 0.25])
        np.testing.assert_array_equal(e.p_b, [[0, 1], [1, 0]])
        np.testing.assert_array_equal(e.r_b, [1.0, 0.5])

    def test_unvisited_state(self):
        e = empirics(filled(2, [Transition(0, 1.0, 0), Transition(0, 0.0, 1)]), 2)
        np.testing.assert_array_equal(e.p_b[1], [0, 0])
        assert e.r_b[1] == 0.0

    def test_point_mass(self):
        e = empirics(filled(5, [Transition(0, 1.0, 0)] * 5), 2)
        np.testing.assert_array_equal(e.mu_s, [1, 0])
        assert e.mu_ss[0, 0] == 1.0
        np.testing.assert_array_equal(e.d_b @ e.p_b, e.mu_ss)

    def test_order_invariance(self):
        items = [T0, T1, T2, T0, T2]
        a = empirics(filled(5, items), 2)
        b = empirics(filled(5, items[::-1]), 2)
        for name in ("mu_s", "mu_ss", "p_b", "r_b"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_occupancy_identity(self):
        rng = np.random.default_rng(0)
        s, sn = rng.integers(0, 4, 37), rng.integers(0, 4, 37)
        e = empirics_from_columns(s, rng.random(37), sn, 4)
        assert np.abs(e.d_b @ e.p_b - e.mu_ss).max() <= 1e-14
        assert e.mu_s.sum() == pytest.approx(1.0)
        visited = e.counts > 0
        np.testing.assert_allclose(e.p_b[visited].sum(axis=1), 1.0, atol=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyBuffer):
            empirics(ReplayBuffer(2), 2)


class TestSerialization:
    def test_json_round_trip(self):
        buf = filled(3, [T0, T1, T2, T0])
        again = ReplayBuffer.from_json(buf.to_json(), capacity=3)
        assert again.entries == buf.entries

    def test_batch_round_trip(self):
        b = Batch.from_transitions([T0, T1])
        assert b.transitions() == [T0, T1]
