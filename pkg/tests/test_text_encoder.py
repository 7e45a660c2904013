import numpy as np
import pytest

from memefuse import tensorcore as tc
from memefuse.errors import ShapeError
from memefuse.text_encoder import GATE_NAMES, LstmParams, bilstm_encode, run_direction

from oracles import naive_bilstm_layer


def zero_params(input_dim, units):
    rng = np.random.default_rng(0)
    params = LstmParams.init(rng, input_dim, units, std=0.0)
    for _, (fwd, bwd) in enumerate(params.layers):
        for cell in (fwd, bwd):
            for gate in GATE_NAMES:
                for t in cell.gates[gate]:
                    t.data[:] = 0.0
    return params


def gates_as_lists(cell):
    return {
        gate: (cell.gates[gate][0].data.tolist(),
               cell.gates[gate][1].data.tolist(),
               cell.gates[gate][2].data.reshape(-1).tolist())
        for gate in GATE_NAMES
    }


class TestBilstmEncode:
    def test_all_zero_weights_give_zero_encoding(self):
        params = zero_params(4, 3)
        emb = tc.Tensor(np.random.default_rng(1).normal(size=(4, 4)))
        h = bilstm_encode(emb, params)
        np.testing.assert_allclose(h.data, 0.0, atol=1e-15)

    def test_full_scale_shape(self):
        rng = np.random.default_rng(2)
        params = LstmParams.init(rng, 200, 256, std=0.02)
        emb = tc.Tensor(rng.normal(size=(5, 200)))
        h = bilstm_encode(emb, params)
        assert h.shape == (5, 512)

    def test_wrong_embedding_width(self):
        params = LstmParams.init(np.random.default_rng(0), 4, 3)
        with pytest.raises(ShapeError):
            bilstm_encode(tc.Tensor(np.zeros((2, 5))), params)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(3)
        units, emb_dim, n = 3, 4, 3
        params = LstmParams.init(rng, emb_dim, units, std=0.5)
        emb = rng.normal(size=(n, emb_dim))

        xs = [list(row) for row in emb]
        l1_f, l1_b = params.layers[0]
        l2_f, l2_b = params.layers[1]
        mid = naive_bilstm_layer(xs, gates_as_lists(l1_f), gates_as_lists(l1_b), units)
        want = naive_bilstm_layer(mid, gates_as_lists(l2_f), gates_as_lists(l2_b), units)

        got = bilstm_encode(tc.Tensor(emb), params)
        np.testing.assert_allclose(got.data, np.array(want), atol=1e-10, rtol=0)

    def test_stateless_across_calls(self):
        rng = np.random.default_rng(4)
        params = LstmParams.init(rng, 4, 3, std=0.3)
        emb = tc.Tensor(rng.normal(size=(3, 4)))
        first = bilstm_encode(emb, params).data
        second = bilstm_encode(emb, params).data
        np.testing.assert_array_equal(first, second)


class TestDirectionSymmetry:
    def test_backward_on_reversed_equals_forward_reversed(self):
        rng = np.random.default_rng(5)
        params = LstmParams.init(rng, 4, 3, std=0.5)
        cell = params.layers[0][0]
        rows = [tc.Tensor(rng.normal(size=(1, 4))) for _ in range(4)]
        fwd = [t.data for t in run_direction(rows, cell)]
        bwd_on_rev = [t.data for t in run_direction(rows[::-1], cell, reverse=True)]
        for a, b in zip(fwd, reversed(bwd_on_rev)):
            np.testing.assert_array_equal(a, b)


class TestGradients:
    def test_gradcheck_through_both_layers(self):
        rng = np.random.default_rng(6)
        units, emb_dim, n = 2, 3, 3
        params = LstmParams.init(rng, emb_dim, units, std=0.4)
        emb = tc.Tensor(rng.normal(size=(n, emb_dim)), requires_grad=True)
        weights = tc.Tensor(rng.uniform(0.5, 1.5, size=(n, 2 * units)))

        def f():
            return tc.sum_all(tc.mul(bilstm_encode(emb, params), weights))

        checked = dict(params.named())
        checked["embedded"] = emb
        errs = tc.grad_check(f, checked, step=1e-5)
        assert max(errs.values()) < 1e-4, errs
