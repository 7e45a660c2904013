import numpy as np
import pytest

from memefuse import tensorcore as tc
from memefuse.attention import MhaParams, multihop_attend
from memefuse.errors import ShapeError

from oracles import naive_multihop


def params_from(w1, w2, role="text"):
    return MhaParams(tc.Tensor(w1, requires_grad=True),
                     tc.Tensor(w2, requires_grad=True), role)


class TestMultihopAttend:
    def test_zero_w2_gives_uniform_hops(self):
        rng = np.random.default_rng(0)
        x = tc.Tensor(rng.normal(size=(5, 6)))
        params = params_from(rng.normal(size=(3, 6)), np.zeros((2, 3)))
        out = multihop_attend(x, params)
        np.testing.assert_allclose(out.a.data, 1 / 5, atol=1e-15)
        col_mean = x.data.mean(axis=0)
        for hop in out.m.data:
            np.testing.assert_allclose(hop, col_mean, atol=1e-12)

    def test_single_hop_shapes(self):
        rng = np.random.default_rng(1)
        x = tc.Tensor(rng.normal(size=(4, 6)))
        params = MhaParams.init(rng, width=6, hidden=3, hops=1, role="text", std=0.5)
        out = multihop_attend(x, params)
        assert out.a.shape == (1, 4)
        assert out.m.shape == (1, 6)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 5))
        w1 = rng.normal(size=(3, 5))
        w2 = rng.normal(size=(2, 3))
        out = multihop_attend(tc.Tensor(x), params_from(w1, w2))
        want_a, want_m = naive_multihop(x.tolist(), w1.tolist(), w2.tolist())
        np.testing.assert_allclose(out.a.data, np.array(want_a), atol=1e-10)
        np.testing.assert_allclose(out.m.data, np.array(want_m), atol=1e-10)

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = tc.Tensor(rng.normal(size=(rng.integers(1, 6), 4)))
            params = MhaParams.init(rng, 4, 3, 5, "visual", std=0.8)
            a = multihop_attend(x, params).a.data
            assert (a >= 0).all()
            np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)

    def test_hop_permutation_permutes_outputs(self):
        rng = np.random.default_rng(4)
        x = tc.Tensor(rng.normal(size=(4, 5)))
        w1 = rng.normal(size=(3, 5))
        w2 = rng.normal(size=(3, 3))
        perm = [2, 0, 1]
        base = multihop_attend(x, params_from(w1, w2))
        permuted = multihop_attend(x, params_from(w1, w2[perm]))
        np.testing.assert_array_equal(permuted.a.data, base.a.data[perm])
        np.testing.assert_array_equal(permuted.m.data, base.m.data[perm])

    def test_input_row_permutation_equivariance(self):
        # A(PX) = A(X) P^T and M(PX) = M(X): scoring is per-row
        rng = np.random.default_rng(5)
        x = rng.normal(size=(5, 4))
        w1 = rng.normal(size=(3, 4))
        w2 = rng.normal(size=(2, 3))
        perm = rng.permutation(5)
        p = np.eye(5)[perm]
        base = multihop_attend(tc.Tensor(x), params_from(w1, w2))
        shuffled = multihop_attend(tc.Tensor(p @ x), params_from(w1, w2))
        np.testing.assert_allclose(shuffled.a.data, base.a.data @ p.T, atol=1e-12)
        np.testing.assert_allclose(shuffled.m.data, base.m.data, atol=1e-12)

    def test_width_mismatch(self):
        params = MhaParams.init(np.random.default_rng(0), 6, 3, 2, "text")
        with pytest.raises(ShapeError):
            multihop_attend(tc.Tensor(np.zeros((2, 5))), params)

    def test_gradcheck(self):
        rng = np.random.default_rng(6)
        x = tc.Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        params = MhaParams.init(rng, 5, 3, 2, "text", std=0.5)
        weights = tc.Tensor(rng.uniform(0.5, 1.5, size=(2, 5)))

        def loss():
            return tc.sum_all(tc.mul(multihop_attend(x, params).m, weights))

        errs = tc.grad_check(loss, {"x": x, **params.named()}, step=1e-5)
        assert max(errs.values()) < 1e-4, errs
