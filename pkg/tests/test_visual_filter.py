import struct

import numpy as np
import pytest

from memefuse import tensorcore as tc
from memefuse.errors import ParseError, ShapeError
from memefuse.visual_filter import (
    FilterParams,
    image_encoding_filter,
    load_feature_map,
    save_feature_map,
)

from oracles import naive_encoding_filter


class TestMfm1Format:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.uniform(0, 1, size=(49, 512)).astype("<f4").astype(np.float64)
        path = tmp_path / "map.mfm"
        save_feature_map(path, values)
        loaded = load_feature_map(path)
        assert loaded.shape == (49, 512)
        np.testing.assert_array_equal(loaded.data, values)

    def test_magic_mismatch(self, tmp_path):
        path = tmp_path / "bad.mfm"
        path.write_bytes(b"XXXX" + struct.pack("<II", 49, 512) + b"\x00" * (49 * 512 * 4))
        with pytest.raises(ParseError, match="magic"):
            load_feature_map(path)

    def test_wrong_extents(self, tmp_path):
        path = tmp_path / "bad.mfm"
        save_feature_map(path, np.zeros((7, 512)))
        with pytest.raises(ParseError, match="extents"):
            load_feature_map(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "bad.mfm"
        path.write_bytes(b"MFM1" + struct.pack("<II", 49, 512) + b"\x00" * 100)
        with pytest.raises(ParseError, match="payload"):
            load_feature_map(path)

    def test_non_finite_payload(self, tmp_path):
        path = tmp_path / "bad.mfm"
        payload = np.full(49 * 512, np.nan, dtype="<f4")
        path.write_bytes(b"MFM1" + struct.pack("<II", 49, 512) + payload.tobytes())
        with pytest.raises(ParseError, match="non-finite"):
            load_feature_map(path)

    def test_all_zero_payload_accepted(self, tmp_path):
        path = tmp_path / "zero.mfm"
        save_feature_map(path, np.zeros((49, 512)))
        assert load_feature_map(path).data.sum() == 0.0

    def test_scaled_extents(self, tmp_path):
        path = tmp_path / "tiny.mfm"
        save_feature_map(path, np.ones((4, 8)))
        assert load_feature_map(path, rows=4, cols=8).shape == (4, 8)


def zero_filter_params(width):
    # W_b = 0 makes alpha uniform; with one word the attended vector is h itself
    return FilterParams(tc.Tensor(np.zeros((width, width)), requires_grad=True))


class TestFilterSemantics:
    def test_parallel_region_fully_filtered(self):
        h = tc.Tensor([[1.0, 2.0, 0.0, 0.0]])
        f = tc.Tensor([[2.0, 4.0, 0.0, 0.0],   # parallel to h
                       [0.0, 0.0, 3.0, 0.0]])  # orthogonal to h
        out = image_encoding_filter(h, f, zero_filter_params(4))
        assert out.relevance.data[0, 0] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(out.u.data[0], 0.0, atol=1e-12)

    def test_orthogonal_region_passes_unchanged(self):
        h = tc.Tensor([[1.0, 2.0, 0.0, 0.0]])
        f = tc.Tensor([[2.0, 4.0, 0.0, 0.0],
                       [0.0, 0.0, 3.0, 0.0]])
        out = image_encoding_filter(h, f, zero_filter_params(4))
        assert out.relevance.data[1, 0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(out.u.data[1], f.data[1], atol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        n, m, width = 3, 4, 5
        h = rng.normal(size=(n, width))
        f = rng.uniform(0, 1, size=(m, width))
        w_b = rng.normal(size=(width, width))
        params = FilterParams(tc.Tensor(w_b, requires_grad=True))
        out = image_encoding_filter(tc.Tensor(h), tc.Tensor(f), params)
        want_u, want_r, want_alpha = naive_encoding_filter(
            h.tolist(), f.tolist(), w_b.tolist()
        )
        np.testing.assert_allclose(out.u.data, np.array(want_u), atol=1e-10)
        np.testing.assert_allclose(out.relevance.data.reshape(-1),
                                   np.array(want_r), atol=1e-10)
        np.testing.assert_allclose(out.alpha.data, np.array(want_alpha), atol=1e-10)

    def test_alpha_columns_sum_to_one(self):
        rng = np.random.default_rng(2)
        h = tc.Tensor(rng.normal(size=(5, 6)))
        f = tc.Tensor(rng.uniform(0, 1, size=(3, 6)))
        params = FilterParams.init(rng, 6, std=0.5)
        out = image_encoding_filter(h, f, params)
        np.testing.assert_allclose(out.alpha.data.sum(axis=0), 1.0, atol=1e-9)

    def test_relevance_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            h = tc.Tensor(rng.normal(size=(4, 6)))
            f = tc.Tensor(rng.normal(size=(5, 6)))  # signed features allowed
            params = FilterParams.init(rng, 6, std=0.5)
            out = image_encoding_filter(h, f, params)
            r = out.relevance.data
            assert (r >= -1e-12).all() and (r <= 2.0 + 1e-12).all()

    def test_word_order_changes_output(self):
        # the attention sum itself is order-free; order enters through the
        # encoder, so permuted tokens give a different (not just permuted) H
        from memefuse.text_encoder import LstmParams, bilstm_encode

        rng = np.random.default_rng(4)
        lstm = LstmParams.init(rng, 4, 3, std=0.5)
        emb = rng.normal(size=(4, 4))
        f = tc.Tensor(rng.uniform(0, 1, size=(3, 6)))
        params = FilterParams.init(rng, 6, std=0.5)
        h = bilstm_encode(tc.Tensor(emb), lstm)
        h_perm = bilstm_encode(tc.Tensor(emb[::-1].copy()), lstm)
        out = image_encoding_filter(h, f, params)
        perm = image_encoding_filter(h_perm, f, params)
        assert not np.allclose(out.u.data, perm.u.data)

    def test_width_mismatch(self):
        params = FilterParams.init(np.random.default_rng(0), 6)
        with pytest.raises(ShapeError):
            image_encoding_filter(tc.Tensor(np.zeros((2, 5))),
                                  tc.Tensor(np.zeros((3, 6))), params)

    def test_gradcheck(self):
        rng = np.random.default_rng(5)
        h = tc.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        f = tc.Tensor(rng.uniform(0.2, 1.0, size=(4, 4)), requires_grad=True)
        params = FilterParams.init(rng, 4, std=0.5)
        weights = tc.Tensor(rng.uniform(0.5, 1.5, size=(4, 4)))

        def loss():
            out = image_encoding_filter(h, f, params)
            return tc.sum_all(tc.mul(out.u, weights))

        errs = tc.grad_check(loss, {"h": h, "f": f, "affinity": params.affinity}, step=1e-5)
        assert max(errs.values()) < 1e-4, errs
