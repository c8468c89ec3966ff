"""Tests for the reference oracles themselves.

The oracles are deliberately naive (dense linear algebra, exhaustive
enumeration) so they can be checked by hand. Everything else in the test
suite leans on them, so they get double-entry checks here.
"""

import numpy as np
import pytest

from xpikesim.oracle import (
    brute_force_bernoulli,
    ideal_mvm_int,
    rate_attention,
    reference_linear_lif,
    reference_network,
    softmax_attention,
)


class TestIdealMvm:

    def test_hand_case(self):
        """bits=[1,0,1] against a 3x2 matrix: columns summed where bit=1."""
        w = np.array([[1, 2], [10, 20], [100, 200]], dtype=np.int64)
        bits = np.array([1, 0, 1], dtype=np.uint8)
        assert list(ideal_mvm_int(w, bits)) == [101, 202]

    def test_all_zero_bits(self):
        w = np.arange(12).reshape(4, 3)
        assert not ideal_mvm_int(w, np.zeros(4, dtype=np.uint8)).any()

    def test_all_one_bits_is_column_sum(self):
        rng = np.random.default_rng(0)
        w = rng.integers(-15, 16, size=(7, 5))
        got = ideal_mvm_int(w, np.ones(7, dtype=np.uint8))
        assert np.array_equal(got, w.sum(axis=0))

    def test_double_entry_random(self):
        """Cross-check against an explicit per-element loop."""
        rng = np.random.default_rng(42)
        w = rng.integers(-15, 16, size=(9, 6))
        bits = rng.integers(0, 2, size=9).astype(np.uint8)
        slow = [sum(int(w[i, j]) * int(bits[i]) for i in range(9)) for j in range(6)]
        assert list(ideal_mvm_int(w, bits)) == slow

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ideal_mvm_int(np.zeros((3, 2)), np.zeros(4, dtype=np.uint8))


class TestRateAttention:

    def test_hand_case_2x2(self):
        """(d_k, n) = (2, 2), Qr = Kr = I, Vr = [[1,1],[0,0]].

        S = (Q^T K)/d_k = I/2 = [[.5,0],[0,.5]]
        A = (V S^T)/n: A[0] = [1,1] S^T / 2 = [.25,.25]; A[1] = [0,0]/2 = 0.
        """
        q = np.eye(2)
        k = np.eye(2)
        v = np.array([[1.0, 1.0], [0.0, 0.0]])
        s, a = rate_attention(q, k, v)
        assert np.allclose(s, [[0.5, 0.0], [0.0, 0.5]])
        assert np.allclose(a, [[0.25, 0.25], [0.0, 0.0]])

    def test_causal_mask_zeroes_future(self):
        rng = np.random.default_rng(1)
        q, k, v = (rng.random((3, 4)) for _ in range(3))
        s, _ = rate_attention(q, k, v, causal=True)
        assert not np.triu(s, k=1).any()

    def test_scores_bounded_by_one(self):
        """Rates in [0,1] keep S and A in [0,1]: both are averages of products."""
        rng = np.random.default_rng(2)
        q, k, v = (rng.random((4, 5)) for _ in range(3))
        s, a = rate_attention(q, k, v)
        assert s.min() >= 0 and s.max() <= 1
        assert a.min() >= 0 and a.max() <= 1

    def test_softmax_shape_and_causality(self):
        """Causal softmax output for token 0 depends only on token 0's value."""
        rng = np.random.default_rng(3)
        q, k, v = (rng.standard_normal((4, 6)) for _ in range(3))
        out = softmax_attention(q, k, v, causal=True)
        assert out.shape == (4, 6)
        v2 = v.copy()
        v2[:, 1:] += 100.0
        out2 = softmax_attention(q, k, v2, causal=True)
        assert np.allclose(out[:, 0], out2[:, 0])
        assert not np.allclose(out[:, 1], out2[:, 1])


class TestBruteForceBernoulli:

    def test_exhaustive_small(self):
        assert brute_force_bernoulli(0, 4) == 0.0
        assert brute_force_bernoulli(1, 4) == 0.25
        assert brute_force_bernoulli(2, 4) == 0.5
        assert brute_force_bernoulli(4, 4) == 1.0

    def test_matches_value_over_imax(self):
        for i_max in (2, 8, 64, 256):
            for value in range(0, i_max + 1, max(1, i_max // 8)):
                assert brute_force_bernoulli(value, i_max) == value / i_max

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            brute_force_bernoulli(5, 4)


class TestReferenceLinearLif:

    def test_identity_passthrough(self):
        """Identity weights, threshold 1: first step replays the input.

        With leak=1 and reset-to-zero, a spike arriving each step drives
        V = 0 + 1 >= 1 immediately, so the output equals the input train.
        """
        t = 16
        rng = np.random.default_rng(7)
        x = rng.integers(0, 2, size=(2, 3, t)).astype(np.uint8)
        w = np.eye(3, dtype=np.int64)
        y = reference_linear_lif(w, threshold=1, x_spikes=x)
        assert np.array_equal(y, x)

    def test_hand_trace_accumulation(self):
        """Single unit, w=[2], threshold 3, input all ones.

        Same trace as the scalar LIF hand case: spikes [0,1,0,1].
        """
        x = np.ones((1, 1, 4), dtype=np.uint8)
        w = np.array([[2]], dtype=np.int64)
        y = reference_linear_lif(w, threshold=3, x_spikes=x)
        assert list(y[0, 0]) == [0, 1, 0, 1]

    def test_residual_adds_current(self):
        """Zero weights + residual spikes: output follows the residual."""
        t = 8
        x = np.zeros((1, 2, t), dtype=np.uint8)
        res = np.ones((1, 2, t), dtype=np.uint8)
        w = np.zeros((2, 2), dtype=np.int64)
        y = reference_linear_lif(w, threshold=1, x_spikes=x, residual=res)
        assert y.all()


class TestReferenceNetwork:

    @staticmethod
    def _tiny_model(d_model=4, heads=2, seed=0):
        rng = np.random.default_rng(seed)

        def w(shape):
            return rng.integers(-3, 4, size=shape).astype(np.int64)

        block = {
            "w_q": (w((d_model, d_model)), 2),
            "w_k": (w((d_model, d_model)), 2),
            "w_v": (w((d_model, d_model)), 2),
            "w_o": (w((d_model, d_model)), 2),
            "w_1": (w((2 * d_model, d_model)), 2),
            "w_2": (w((d_model, 2 * d_model)), 2),
            "heads": heads,
        }
        return [block, {"head": (w((3, d_model)), 1)}]

    def test_deterministic_under_seed(self):
        model = self._tiny_model()
        rates = np.full((2, 4), 0.5)
        a = reference_network(model, rates, t_steps=64, seed=9)
        b = reference_network(model, rates, t_steps=64, seed=9)
        assert np.array_equal(a["output_rates"], b["output_rates"])
        assert np.array_equal(a["class_scores"], b["class_scores"])

    def test_output_shapes(self):
        model = self._tiny_model()
        rates = np.full((3, 4), 0.25)
        out = reference_network(model, rates, t_steps=32, seed=1)
        assert out["output_rates"].shape == (3, 4)
        assert out["class_scores"].shape == (3,)

    def test_rates_bounded(self):
        model = self._tiny_model(seed=5)
        rates = np.full((2, 4), 0.75)
        out = reference_network(model, rates, t_steps=128, seed=2)
        assert out["output_rates"].min() >= 0.0
        assert out["output_rates"].max() <= 1.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
