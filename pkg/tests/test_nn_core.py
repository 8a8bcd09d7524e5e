import math

import numpy as np
import pytest

from helpers import finite_diff_check
from qcmine.nn_core import (
    LINEAR,
    TANH,
    AdamState,
    DenseParams,
    EmptySequence,
    GruParams,
    Node,
    NonFiniteInput,
    ShapeMismatch,
    adam_update,
    backward,
    bigru_encode,
    concat,
    dense,
    embedding_row,
    glorot_init,
    gru_step,
    init_dense,
    init_gru,
    softmax,
    softmax_xent,
    tensor_from_obj,
    tensor_to_obj,
    zero_grad,
)


def zero_gru(d_x, d_h):
    shape = (d_h, d_x + d_h)
    return GruParams(
        w_r=Node(np.zeros(shape)), w_u=Node(np.zeros(shape)), w=Node(np.zeros(shape)),
        b_r=Node(np.zeros(d_h)), b_u=Node(np.zeros(d_h)), b=Node(np.zeros(d_h)),
    )


def scalar_gru_oracle(x, h, wr, br, wu, bu, w, b):
    """Plain-float GRU step for d_x = d_h = 1; weights are (w_x, w_h) pairs."""

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    r = sig(wr[0] * x + wr[1] * h + br)
    u = sig(wu[0] * x + wu[1] * h + bu)
    hc = math.tanh(w[0] * x + w[1] * (r * h) + b)
    return u * h + (1.0 - u) * hc


class TestGruStep:
    def test_zero_params_halve_previous_state(self):
        p = zero_gru(2, 3)
        h_prev = np.array([0.4, -0.6, 1.0])
        h = gru_step(np.array([5.0, -2.0]), h_prev, p)
        np.testing.assert_allclose(h.value, 0.5 * h_prev, atol=1e-15)

    def test_zero_state_zero_params(self):
        p = zero_gru(2, 2)
        h = gru_step(np.array([1.0, 2.0]), np.zeros(2), p)
        np.testing.assert_array_equal(h.value, np.zeros(2))

    def test_scalar_trace_matches_oracle(self):
        wr, br = (0.3, -0.2), 0.1
        wu, bu = (-0.5, 0.4), -0.3
        w, b = (0.7, 0.6), 0.2
        p = GruParams(
            w_r=Node([[*wr]]), w_u=Node([[*wu]]), w=Node([[*w]]),
            b_r=Node([br]), b_u=Node([bu]), b=Node([b]),
        )
        x, h0 = 0.8, -0.25
        expected = scalar_gru_oracle(x, h0, wr, br, wu, bu, w, b)
        got = gru_step(np.array([x]), np.array([h0]), p)
        assert got.value[0] == pytest.approx(expected, rel=1e-12)

    def test_output_is_convex_combination(self):
        rng = np.random.default_rng(5)
        p = init_gru(3, 4, rng)
        for _ in range(20):
            h_prev = rng.uniform(-1.5, 1.5, 4)
            h = gru_step(rng.uniform(-2, 2, 3), h_prev, p).value
            lo = np.minimum(h_prev, -1.0)
            hi = np.maximum(h_prev, 1.0)
            assert np.all(h > lo) and np.all(h < hi)

    def test_shape_mismatch(self):
        p = zero_gru(2, 3)
        with pytest.raises(ShapeMismatch):
            gru_step(np.zeros(5), np.zeros(3), p)

    def test_non_finite_rejected(self):
        p = zero_gru(2, 2)
        with pytest.raises(NonFiniteInput):
            gru_step(np.array([np.nan, 0.0]), np.zeros(2), p)


class TestBigruEncode:
    def test_single_step_equals_gru_step(self):
        rng = np.random.default_rng(1)
        fwd, bwd = init_gru(2, 3, rng), init_gru(2, 3, rng)
        x = rng.uniform(-1, 1, 2)
        f, b, states = bigru_encode([x], fwd, bwd)
        np.testing.assert_array_equal(f.value, gru_step(x, np.zeros(3), fwd).value)
        np.testing.assert_array_equal(b.value, gru_step(x, np.zeros(3), bwd).value)
        assert len(states) == 1

    def test_zero_params_zero_states(self):
        fwd, bwd = zero_gru(2, 3), zero_gru(2, 3)
        xs = [np.ones(2), -np.ones(2), np.ones(2)]
        f, b, states = bigru_encode(xs, fwd, bwd)
        assert np.all(f.value == 0) and np.all(b.value == 0)
        assert all(np.all(sf.value == 0) and np.all(sb.value == 0) for sf, sb in states)

    def test_three_step_scalar_recurrence(self):
        wr, br = (0.2, 0.5), 0.0
        wu, bu = (0.1, -0.4), 0.2
        w, b = (-0.6, 0.3), -0.1
        p = GruParams(
            w_r=Node([[*wr]]), w_u=Node([[*wu]]), w=Node([[*w]]),
            b_r=Node([br]), b_u=Node([bu]), b=Node([b]),
        )
        xs = [0.5, -1.0, 0.75]
        h = 0.0
        for x in xs:
            h = scalar_gru_oracle(x, h, wr, br, wu, bu, w, b)
        fwd_expected = h
        h = 0.0
        for x in reversed(xs):
            h = scalar_gru_oracle(x, h, wr, br, wu, bu, w, b)
        bwd_expected = h
        f, bnode, _ = bigru_encode([np.array([x]) for x in xs], p, p)
        assert f.value[0] == pytest.approx(fwd_expected, rel=1e-12)
        assert bnode.value[0] == pytest.approx(bwd_expected, rel=1e-12)

    def test_empty_sequence(self):
        p = zero_gru(1, 1)
        with pytest.raises(EmptySequence):
            bigru_encode([], p, p)


class TestDense:
    def test_identity(self):
        p = DenseParams(Node(np.eye(3)), Node(np.zeros(3)), LINEAR)
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(dense(x, p).value, x)

    def test_zero_input_tanh_bias(self):
        p = DenseParams(Node(np.ones((2, 3))), Node(np.array([0.3, -1.2])), TANH)
        np.testing.assert_allclose(
            dense(np.zeros(3), p).value, np.tanh([0.3, -1.2]), atol=1e-15
        )

    def test_two_by_two_hand_computed(self):
        w = [[0.5, -1.0], [2.0, 0.25]]
        b = [0.1, -0.2]
        x = [0.4, 0.8]
        expected = [
            math.tanh(0.5 * 0.4 + (-1.0) * 0.8 + 0.1),
            math.tanh(2.0 * 0.4 + 0.25 * 0.8 - 0.2),
        ]
        p = DenseParams(Node(w), Node(b), TANH)
        np.testing.assert_allclose(dense(np.array(x), p).value, expected, rtol=1e-15)

    def test_shape_mismatch(self):
        p = DenseParams(Node(np.zeros((2, 3))), Node(np.zeros(2)), LINEAR)
        with pytest.raises(ShapeMismatch):
            dense(np.zeros(4), p)


class TestSoftmaxXent:
    def test_uniform_logits(self):
        probs, loss = softmax_xent(np.array([0.0, 0.0]), 1)
        np.testing.assert_array_equal(probs, [0.5, 0.5])
        assert float(loss.value) == pytest.approx(math.log(2), rel=1e-12)

    def test_saturated(self):
        probs, loss = softmax_xent(np.array([20.0, -20.0]), 0)
        assert float(loss.value) == pytest.approx(0.0, abs=1e-12)
        assert probs[0] == pytest.approx(1.0, abs=1e-12)

    def test_closed_form(self):
        _, loss = softmax_xent(np.array([1.0, 2.0]), 1)
        assert float(loss.value) == pytest.approx(math.log(1 + math.exp(-1)), rel=1e-12)
        assert float(loss.value) == pytest.approx(0.313262, abs=1e-6)

    def test_probs_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            logits = rng.uniform(-30, 30, 2)
            probs = softmax(logits)
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            logits = rng.uniform(-5, 5, 2)
            shifted = logits + rng.uniform(-100, 100)
            np.testing.assert_allclose(softmax(logits), softmax(shifted), atol=1e-12)

    def test_gradient_is_probs_minus_onehot(self):
        logits = Node(np.array([0.0, 0.0]))
        _, loss = softmax_xent(logits, 1)
        backward(loss)
        np.testing.assert_allclose(logits.grad, [0.5, -0.5], atol=1e-15)

    def test_saturated_gradient_near_zero(self):
        logits = Node(np.array([30.0, -30.0]))
        _, loss = softmax_xent(logits, 0)
        backward(loss)
        assert np.all(np.abs(logits.grad) < 1e-12)


class TestBackwardGradients:
    """Central finite differences vs the tape, step 1e-5, rel error < 1e-4."""

    @pytest.mark.parametrize("seed", range(5))
    def test_gru_cell(self, seed):
        rng = np.random.default_rng(seed)
        d_x, d_h = rng.integers(1, 5), rng.integers(1, 5)
        p = init_gru(int(d_x), int(d_h), rng)
        x = Node(rng.uniform(-1, 1, d_x))
        h0 = Node(rng.uniform(-1, 1, d_h))
        w_mix = rng.uniform(-1, 1, d_h)

        def loss_fn():
            h = gru_step(x, h0, p)
            return dense(h, DenseParams(Node(w_mix[None, :]), Node(np.zeros(1)), LINEAR))

        nodes = [n for _, n in p.nodes()] + [x, h0]
        assert finite_diff_check(loss_fn, nodes) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_bigru_sequence(self, seed):
        rng = np.random.default_rng(100 + seed)
        d_x, d_h, T = 3, 2, int(rng.integers(1, 6))
        fwd, bwd = init_gru(d_x, d_h, rng), init_gru(d_x, d_h, rng)
        xs = [Node(rng.uniform(-1, 1, d_x)) for _ in range(T)]
        out = init_dense(2 * d_h, 2, LINEAR, rng)

        def loss_fn():
            f, b, _ = bigru_encode(xs, fwd, bwd)
            _, loss = softmax_xent(dense(concat(f, b), out), 1)
            return loss

        nodes = [n for _, n in fwd.nodes() + bwd.nodes() + out.nodes()] + xs
        assert finite_diff_check(loss_fn, nodes) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_tanh_chain(self, seed):
        rng = np.random.default_rng(200 + seed)
        layer1 = init_dense(4, 3, TANH, rng)
        layer2 = init_dense(3, 2, LINEAR, rng)
        x = Node(rng.uniform(-1, 1, 4))

        def loss_fn():
            _, loss = softmax_xent(dense(dense(x, layer1), layer2), 0)
            return loss

        nodes = [n for _, n in layer1.nodes() + layer2.nodes()] + [x]
        assert finite_diff_check(loss_fn, nodes) < 1e-4

    def test_embedding_gradients(self):
        rng = np.random.default_rng(7)
        table = Node(rng.uniform(-1, 1, (5, 3)))
        out = init_dense(3, 2, LINEAR, rng)

        def loss_fn():
            # same row twice: gradients must accumulate on it
            x = concat(embedding_row(table, 2), embedding_row(table, 2))
            half = Node(np.hstack([0.5 * np.eye(3), 0.5 * np.eye(3)]))
            merged = dense(x, DenseParams(half, Node(np.zeros(3)), LINEAR))
            _, loss = softmax_xent(dense(merged, out), 1)
            return loss

        assert finite_diff_check(loss_fn, [table]) < 1e-4

    def test_gradients_accumulate_across_calls(self):
        # two half-seeded sweeps equal one full sweep (mini-batch averaging)
        x = Node(np.array([1.0, 2.0]))
        p = DenseParams(Node(np.eye(2)), Node(np.zeros(2)), LINEAR)
        for _ in range(2):
            _, loss = softmax_xent(dense(x, p), 0)
            backward(loss, seed=0.5)
        accumulated = p.w.grad.copy()
        zero_grad([p.w, p.b, x])
        _, loss = softmax_xent(dense(x, p), 0)
        backward(loss)
        np.testing.assert_allclose(accumulated, p.w.grad, atol=1e-15)


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.zeros(2)}
        state = AdamState(lr=0.1)
        adam_update(params, grads, state)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])
        assert state.t == 1
        np.testing.assert_array_equal(state.m["w"], np.zeros(2))

    def test_first_step_sign_property(self):
        rng = np.random.default_rng(2)
        g = rng.uniform(-1, 1, 6)
        g[np.abs(g) < 0.1] = 0.5
        params = {"w": np.zeros(6)}
        state = AdamState(lr=0.01)
        adam_update(params, {"w": g.copy()}, state)
        assert np.all(np.sign(params["w"]) == -np.sign(g))
        np.testing.assert_allclose(np.abs(params["w"]), 0.01, rtol=1e-6)

    def test_two_step_scalar_trace(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p, g1, g2 = 1.0, 0.4, -0.3
        m = v = 0.0
        expect = p
        for t, g in ((1, g1), (2, g2)):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            expect -= lr * m_hat / (math.sqrt(v_hat) + eps)
        params = {"w": np.array([p])}
        state = AdamState(lr=lr)
        adam_update(params, {"w": np.array([g1])}, state)
        adam_update(params, {"w": np.array([g2])}, state)
        assert params["w"][0] == pytest.approx(expect, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_update({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


class TestGlorot:
    def test_bound_for_1x1(self):
        v = glorot_init((1, 1), 0)
        assert abs(v[0, 0]) < math.sqrt(3)

    def test_same_seed_identical(self):
        np.testing.assert_array_equal(glorot_init((4, 7), 42), glorot_init((4, 7), 42))

    def test_empirical_variance(self):
        shape = (250, 400)  # 1e5 samples
        a = math.sqrt(6.0 / (shape[0] + shape[1]))
        sample = glorot_init(shape, 9)
        assert np.all(np.abs(sample) < a)
        assert sample.var() == pytest.approx(a * a / 3.0, rel=0.05)


def test_tensor_json_round_trip():
    rng = np.random.default_rng(0)
    arr = rng.uniform(-1, 1, (3, 4))
    back = tensor_from_obj(tensor_to_obj(arr))
    np.testing.assert_array_equal(arr, back)
