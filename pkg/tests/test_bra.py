import numpy as np
import pytest

from classroom_bra.bra import (
    BiLevelRoutingAttention,
    BRAConfig,
    BRAParams,
    ConfigError,
    bra_forward,
    dense_attention_forward,
    flops,
    load_params,
    patchify,
    route,
    routed_attention,
    save_params,
    unpatchify,
)
from classroom_bra.harness import random_feature_map, random_params
from classroom_bra.tensor import depthwise_conv3x3


def loop_bra(fm, s, k, w_qkv, lce, scale_qk=True):
    """Per-token reference built from explicit pixel coordinates."""
    h, w, c = fm.shape
    ph, pw = h // s, w // s
    proj = fm @ w_qkv
    q, key, v = proj[..., :c], proj[..., c:2 * c], proj[..., 2 * c:]

    def pixels(region):
        ri, rj = divmod(region, s)
        return [(ri * ph + a, rj * pw + b) for a in range(ph) for b in range(pw)]

    q_r = np.array([np.mean([q[p] for p in pixels(r)], axis=0) for r in range(s * s)])
    k_r = np.array([np.mean([key[p] for p in pixels(r)], axis=0) for r in range(s * s)])
    adj = q_r @ k_r.T
    out = np.zeros_like(fm)
    for r in range(s * s):
        routed = sorted(range(s * s), key=lambda j: (-adj[r, j], j))[:k]
        keys = [p for j in routed for p in pixels(j)]
        for p in pixels(r):
            logits = np.array([q[p] @ key[kp] for kp in keys])
            if scale_qk:
                logits /= np.sqrt(c)
            wts = np.exp(logits - logits.max())
            wts /= wts.sum()
            out[p] = sum(wt * v[kp] for wt, kp in zip(wts, keys))
    return out + depthwise_conv3x3(v, lce)


class TestPatchify:
    def test_two_by_two(self):
        fm = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
        t = patchify(fm, 2)
        assert t.shape == (4, 1, 1)
        assert t.ravel().tolist() == [1.0, 2.0, 3.0, 4.0]
        assert np.array_equal(unpatchify(t, 2, 2, 2), fm)

    def test_tile_enumeration(self):
        h = w = 4
        coords = np.array([[[i, j] for j in range(w)] for i in range(h)], dtype=float)
        t = patchify(coords, 2)
        assert t[0].tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
        assert t[1].tolist() == [[0, 2], [0, 3], [1, 2], [1, 3]]
        assert t[2].tolist() == [[2, 0], [2, 1], [3, 0], [3, 1]]

    @pytest.mark.parametrize("shape,s", [((8, 8, 3), 4), ((6, 4, 2), 2), ((5, 5, 1), 1), ((12, 6, 2), 3)])
    def test_roundtrip(self, shape, s):
        x = np.random.default_rng(0).normal(size=shape)
        assert np.array_equal(unpatchify(patchify(x, s), s, shape[0], shape[1]), x)

    def test_region_permutation_moves_tiles(self):
        x = np.random.default_rng(1).normal(size=(4, 4, 1))
        swapped = unpatchify(patchify(x, 2)[[3, 1, 2, 0]], 2, 4, 4)
        assert np.array_equal(swapped[:2, :2], x[2:, 2:])
        assert np.array_equal(swapped[2:, 2:], x[:2, :2])
        assert np.array_equal(swapped[:2, 2:], x[:2, 2:])

    def test_divisibility(self):
        with pytest.raises(ConfigError):
            patchify(np.ones((6, 6, 1)), 4)

    def test_unpatchify_shape(self):
        with pytest.raises(ValueError):
            unpatchify(np.ones((4, 3, 1)), 2, 4, 4)


class TestRoute:
    def test_single_region(self):
        q = np.random.default_rng(2).normal(size=(1, 4, 3))
        assert route(q, q, 1).i_r.tolist() == [[0]]

    def test_hand_adjacency(self):
        # one token per region, so region means equal the tokens
        q = np.array([[[2.0, 0.0]], [[0.0, 3.0]]])
        k = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        tr = route(q, k, 1)
        assert tr.a_r.tolist() == [[2.0, 0.0], [0.0, 3.0]]
        q2 = np.array([[[2.0, 1.0]], [[0.0, 3.0]]])
        tr2 = route(q2, k, 1)
        assert tr2.a_r.tolist() == [[2.0, 1.0], [0.0, 3.0]]
        assert tr2.i_r.tolist() == [[0], [1]]

    def test_full_selection_is_permutation(self):
        rng = np.random.default_rng(3)
        q, k = rng.normal(size=(9, 2, 3)), rng.normal(size=(9, 2, 3))
        tr = route(q, k, 9)
        for row in tr.i_r:
            assert sorted(row.tolist()) == list(range(9))

    def test_rows_have_distinct_indices(self):
        rng = np.random.default_rng(4)
        q, k = rng.normal(size=(16, 3, 2)), rng.normal(size=(16, 3, 2))
        tr = route(q, k, 5)
        assert tr.i_r.shape == (16, 5)
        assert all(len(set(row)) == 5 for row in tr.i_r.tolist())


class TestForward:
    @pytest.mark.parametrize("hw,c,s,k", [(4, 2, 2, 1), (8, 3, 2, 3), (8, 2, 4, 5), (6, 2, 3, 2)])
    def test_matches_loop_reference(self, hw, c, s, k):
        params = random_params(c, seed=hw + c + s + k)
        x = random_feature_map(hw, hw, c, seed=k)
        out, _ = bra_forward(x, BRAConfig(s=s, k=k), params)
        ref = loop_bra(x, s, k, params.w_qkv, params.lce_kernels)
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)

    def test_unscaled_mode_matches_loop_reference(self):
        params = random_params(3, seed=5)
        x = random_feature_map(8, 8, 3, seed=6)
        out, _ = bra_forward(x, BRAConfig(s=2, k=2, scale_qk=False), params)
        ref = loop_bra(x, 2, 2, params.w_qkv, params.lce_kernels, scale_qk=False)
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)

    def test_full_routing_equals_dense(self):
        params = random_params(4, seed=7, zero_lce=True)
        x = random_feature_map(8, 8, 4, seed=8)
        out, _ = bra_forward(x, BRAConfig(s=2, k=4), params)
        assert np.max(np.abs(out - dense_attention_forward(x, params))) <= 1e-9

    def test_single_region_with_lce_equals_dense(self):
        params = random_params(3, seed=9)
        x = random_feature_map(4, 4, 3, seed=10)
        out, _ = bra_forward(x, BRAConfig(s=1, k=1), params)
        np.testing.assert_allclose(out, dense_attention_forward(x, params), rtol=0, atol=1e-12)

    def test_zero_weights_give_zero(self):
        c = 3
        params = BRAParams(np.zeros((c, 3 * c)), np.random.default_rng(0).normal(size=(c, 3, 3)))
        x = random_feature_map(4, 4, c, seed=11)
        out, _ = bra_forward(x, BRAConfig(s=2, k=2), params)
        assert np.all(out == 0)
        assert np.all(dense_attention_forward(x, params) == 0)

    def test_single_token_dense(self):
        params = random_params(3, seed=12)
        x = random_feature_map(1, 1, 3, seed=13)
        v = x[0, 0] @ params.w_qkv[:, 6:]
        expected = v + params.lce_kernels[:, 1, 1] * v
        np.testing.assert_allclose(dense_attention_forward(x, params)[0, 0], expected,
                                   rtol=0, atol=1e-15)

    def test_non_square_input(self):
        params = random_params(2, seed=14)
        x = random_feature_map(8, 4, 2, seed=15)
        out, tr = bra_forward(x, BRAConfig(s=2, k=2), params)
        assert out.shape == x.shape
        np.testing.assert_allclose(out, loop_bra(x, 2, 2, params.w_qkv, params.lce_kernels),
                                   rtol=0, atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        params = random_params(4, seed=16)
        tokens = patchify(random_feature_map(8, 8, 4, seed=17), 4)
        _, _, attn, _ = routed_attention(tokens, params.w_qkv, 3)
        assert attn.shape == (16, 4, 12)
        np.testing.assert_allclose(attn.sum(-1), 1.0, rtol=0, atol=1e-12)

    def test_config_errors(self):
        params = random_params(2, seed=0)
        with pytest.raises(ConfigError, match="height"):
            bra_forward(np.ones((6, 8, 2)), BRAConfig(s=4, k=1), params)
        with pytest.raises(ConfigError):
            BRAConfig(s=2, k=5)
        with pytest.raises(ConfigError):
            BRAConfig(s=0, k=1)

    def test_layer_wrapper(self):
        params = random_params(2, seed=1)
        layer = BiLevelRoutingAttention(BRAConfig(s=2, k=1), params)
        x = random_feature_map(4, 4, 2, seed=2)
        y = layer(x)
        assert y.shape == x.shape
        assert layer.last_trace.i_r.shape == (4, 1)
        assert np.array_equal(y, bra_forward(x, layer.cfg, params)[0])

    def test_deterministic_bytes(self):
        params = random_params(3, seed=3)
        x = random_feature_map(8, 8, 3, seed=4)
        a, _ = bra_forward(x, BRAConfig(s=2, k=2), params)
        b, _ = bra_forward(x, BRAConfig(s=2, k=2), params)
        assert a.tobytes() == b.tobytes()


class TestFlops:
    def test_hand_values(self):
        rep = flops(BRAConfig(s=2, k=1), 8, 8, 4)
        assert rep.token_to_token == 8192
        assert rep.dense_token_to_token == 32768
        assert rep.ratio == 0.25
        assert rep.qkv == 3 * 64 * 16
        assert rep.pooling == 2 * 64 * 4
        assert rep.adjacency == 16 * 4
        assert rep.lce == 9 * 64 * 4

    def test_full_routing_matches_dense(self):
        rep = flops(BRAConfig(s=4, k=16), 16, 16, 8)
        assert rep.token_to_token == rep.dense_token_to_token

    def test_linear_in_k(self):
        a = flops(BRAConfig(s=4, k=2), 16, 16, 8)
        b = flops(BRAConfig(s=4, k=4), 16, 16, 8)
        assert b.token_to_token == 2 * a.token_to_token
        assert (a.qkv, a.pooling, a.adjacency, a.lce) == (b.qkv, b.pooling, b.adjacency, b.lce)

    def test_requires_divisibility(self):
        with pytest.raises(ConfigError):
            flops(BRAConfig(s=3, k=1), 64, 64, 4)


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        cfg = BRAConfig(s=4, k=3, scale_qk=False)
        params = random_params(5, seed=21)
        path = tmp_path / "p.bin"
        save_params(path, cfg, params)
        cfg2, params2 = load_params(path)
        assert cfg2 == cfg
        assert np.array_equal(params2.w_qkv, params.w_qkv)
        assert np.array_equal(params2.lce_kernels, params.lce_kernels)
        assert path.stat().st_size == 24 + 8 * (5 * 15 + 5 * 9)

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "p.bin"
        path.write_bytes(b"X" * 40)
        with pytest.raises(ValueError, match="magic"):
            load_params(path)

    def test_rejects_truncated(self, tmp_path):
        path = tmp_path / "p.bin"
        save_params(path, BRAConfig(s=1, k=1), random_params(2, seed=0))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="expected"):
            load_params(path)
