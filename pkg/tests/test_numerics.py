import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twotrack.errors import DimensionError, NumericError, RangeError
from twotrack.numerics import (AdamW, Linear, OptimizerState, Tensor, adamw_step, attention,
                               cosine_lr, cross_entropy, default_dtype, grad_check,
                               grad_check_parameters, layer_norm, load_checkpoint,
                               save_checkpoint, softmax_cross_entropy)
from twotrack.numerics import tensor as T
from twotrack.numerics.nn import EncoderBlock, LayerNorm


def _t(a):
    return Tensor(np.asarray(a, dtype=np.float64))


class TestAttention:
    def test_single_key_returns_value(self):
        q, k, v = _t([[0.3, -1.0]]), _t([[2.0, 0.5]]), _t([[7.0, -3.0, 1.0]])
        np.testing.assert_allclose(attention(q, k, v).data, v.data)

    def test_equal_scores_average_values(self):
        q = _t([[1.0, 0.0]])
        k = _t([[0.0, 1.0], [0.0, -1.0]])
        v = _t([[2.0, 4.0], [6.0, 0.0]])
        np.testing.assert_allclose(attention(q, k, v).data, [[4.0, 2.0]])

    def test_causal_first_row_is_first_value(self):
        rng = np.random.default_rng(3)
        q, k, v = (_t(rng.normal(size=(3, 4))) for _ in range(3))
        mask = np.tril(np.ones((3, 3), dtype=bool))
        out = attention(q, k, v, mask).data
        np.testing.assert_allclose(out[0], v.data[0])
        # row 1 by hand: softmax over the first two scores
        s = q.data[1] @ k.data[:2].T / 2.0
        w = np.exp(s) / np.exp(s).sum()
        np.testing.assert_allclose(out[1], w @ v.data[:2])

    def test_rows_are_convex_combinations(self):
        rng = np.random.default_rng(0)
        q, k, v = (_t(rng.normal(size=(2, 5, 8))) for _ in range(3))
        res = attention(q, k, v, np.tril(np.ones((5, 5), dtype=bool)))
        w = res.weights
        assert (w >= 0).all()
        np.testing.assert_allclose(w.sum(-1), 1.0, atol=1e-6)
        assert np.all(np.triu(w[0], 1) == 0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            attention(_t(np.zeros((2, 3))), _t(np.zeros((2, 4))), _t(np.zeros((2, 4))))
        with pytest.raises(DimensionError):
            attention(_t(np.zeros((2, 3))), _t(np.zeros((2, 3))), _t(np.zeros((2, 3))),
                      np.ones((3, 3), dtype=bool))


class TestCrossEntropy:
    def test_uniform_is_log_v(self):
        assert softmax_cross_entropy(_t(np.zeros(64)), 5).item() == pytest.approx(math.log(64))

    def test_dominant_logit_goes_to_zero(self):
        logits = np.zeros(10)
        logits[3] = 60.0
        assert softmax_cross_entropy(_t(logits), 3).item() < 1e-20

    def test_hand_value(self):
        expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
        assert expected == pytest.approx(0.4076, abs=1e-4)
        assert softmax_cross_entropy(_t([1.0, 2.0, 3.0]), 2).item() == pytest.approx(expected)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            softmax_cross_entropy(_t([1.0, 2.0]), 2)

    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=12), st.data())
    @settings(max_examples=60, deadline=None)
    def test_nonnegative(self, logits, data):
        t = data.draw(st.integers(0, len(logits) - 1))
        assert softmax_cross_entropy(_t(logits), t).item() >= 0.0

    def test_weighted_sum(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(4, 6))
        targets = np.array([0, 5, 2, 2])
        w = np.array([0.5, 0.0, 0.25, 0.25])
        each = [softmax_cross_entropy(_t(logits[i]), targets[i]).item() for i in range(4)]
        got = cross_entropy(_t(logits), targets, w).item()
        assert got == pytest.approx(float(np.dot(w, each)))


class TestAdamW:
    def test_zero_gradient_pure_decay(self):
        p = {"w": np.array([2.0, -4.0])}
        st_ = OptimizerState(lr=0.1, weight_decay=0.01)
        adamw_step(p, {"w": np.zeros(2)}, st_)
        np.testing.assert_allclose(p["w"], [2.0 - 0.1 * 0.01 * 2.0, -4.0 + 0.1 * 0.01 * 4.0])
        assert st_.step == 1

    def test_defaults(self):
        s = OptimizerState()
        assert (s.beta1, s.beta2, s.weight_decay, s.lr) == (0.9, 0.99, 1e-4, 1e-4)

    def test_two_steps_by_hand(self):
        lr, b1, b2, wd, eps = 0.01, 0.9, 0.99, 1e-4, 1e-8
        x = 1.5
        m = v = 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * 1.0
            v = b2 * v + (1 - b2) * 1.0
            x = x * (1 - lr * wd)
            x = x - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        p = {"x": np.array([1.5])}
        s = OptimizerState(lr=lr)
        for _ in range(2):
            adamw_step(p, {"x": np.array([1.0])}, s)
        assert p["x"][0] == pytest.approx(x, rel=1e-12)

    def test_lr_zero_is_identity(self):
        p = {"w": np.array([0.3, 0.7])}
        before = p["w"].copy()
        adamw_step(p, {"w": np.array([5.0, -1.0])}, OptimizerState(lr=0.0))
        np.testing.assert_array_equal(p["w"], before)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adamw_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, OptimizerState())

    def test_frozen_parameter_untouched(self):
        rng = np.random.default_rng(0)
        lin = Linear(rng, 3, 2)
        lin.bias.requires_grad = False
        lin.weight.grad = np.ones((3, 2), dtype=np.float32)
        lin.bias.grad = np.ones(2, dtype=np.float32)
        before = lin.bias.data.copy()
        AdamW(lin.named_parameters(), lr=0.1).step()
        np.testing.assert_array_equal(lin.bias.data, before)


class TestCosine:
    def test_endpoints(self):
        assert cosine_lr(0, 100, 1e-4) == pytest.approx(1e-4)
        assert cosine_lr(100, 100, 1e-4) == pytest.approx(0.0, abs=1e-20)
        assert cosine_lr(50, 100, 1e-4) == pytest.approx(5e-5)

    def test_range(self):
        with pytest.raises(RangeError):
            cosine_lr(101, 100)


class TestGradCheck:
    def test_square_sum(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        assert grad_check(lambda t: (t * t).sum(), x) < 1e-6

    def test_constant(self):
        assert grad_check(lambda t: Tensor(np.array(3.0)), np.ones(4)) == 0.0

    def test_attention_cross_entropy(self):
        rng = np.random.default_rng(1)
        k = _t(rng.normal(size=(2, 4)))
        v = _t(rng.normal(size=(2, 4)))

        def f(q):
            out = attention(q, k, v)
            return cross_entropy(out, np.array([1, 3]))

        assert grad_check(f, rng.normal(size=(2, 4))) < 1e-4

    def test_non_finite(self):
        with pytest.raises(NumericError), np.errstate(invalid="ignore"):
            grad_check(lambda t: T.log(t).sum(), np.array([-1.0, 1.0]))

    @pytest.mark.parametrize("op", ["gelu", "tanh", "softmax", "layernorm", "concat", "getitem",
                                    "embedding", "matmul", "transpose"])
    def test_ops(self, op):
        rng = np.random.default_rng(2)
        other = _t(rng.normal(size=(4, 3)))
        gamma, beta = _t(rng.normal(size=3)), _t(rng.normal(size=3))
        fns = {
            "gelu": lambda t: (T.gelu(t) * other).sum(),
            "tanh": lambda t: (T.tanh(t) * other).sum(),
            "softmax": lambda t: (T.softmax(t) * other).sum(),
            "layernorm": lambda t: (layer_norm(t, gamma, beta) * other).sum(),
            "concat": lambda t: (T.concat([t, other], axis=0) * T.concat([other, t], axis=0)).sum(),
            "getitem": lambda t: (t[1:3] * other[:2]).sum(),
            "embedding": lambda t: (T.embedding(t, np.array([0, 2, 2, 1])) * other).sum(),
            "matmul": lambda t: ((t @ other.transpose(1, 0)) * 0.5).sum(),
            "transpose": lambda t: (t.transpose(1, 0) @ other).sum(),
        }
        assert grad_check(fns[op], rng.normal(size=(4, 3))) < 1e-6

    def test_encoder_block_parameters(self):
        rng = np.random.default_rng(4)
        with default_dtype(np.float64):
            block = EncoderBlock(rng, 8, 2)
            ln = LayerNorm(8)
        x = Tensor(rng.normal(size=(5, 8)))
        errs = grad_check_parameters(lambda: (ln(block(x)) * x).sum(), block.named_parameters())
        assert max(errs.values()) < 1e-4


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"a.weight": rng.normal(size=(3, 4)).astype(np.float32),
              "b": np.float32(rng.normal(size=7)), "scalar": np.array(2.0, dtype=np.float32)}
    save_checkpoint(tmp_path / "c.ckpt", arrays, {"kind": "Mixed", "step": 3})
    back, meta = load_checkpoint(tmp_path / "c.ckpt")
    assert meta == {"kind": "Mixed", "step": 3}
    assert set(back) == set(arrays)
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
