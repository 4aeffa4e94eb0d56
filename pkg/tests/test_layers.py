import numpy as np
import pytest

from hrnn.errors import ConfigError, DimensionError, VocabularyError
from hrnn.layers import (
    GRU_FIELDS,
    AttentionParams,
    EmbeddingParams,
    GruParams,
    MultimodalParams,
    OutputParams,
    attend,
    attention_backward,
    attention_forward,
    attention_scores,
    dropout,
    embed_backward,
    embed_lookup,
    gru_backward,
    gru_step,
    multimodal_backward,
    multimodal_fuse,
    output_backward,
    output_logits,
)
from hrnn.numerics import finite_diff_grad, make_rng, relative_error, stanh

TOL = 1e-4
TRIALS = 20


def check(analytic, f, x):
    num = finite_diff_grad(f, x)
    assert relative_error(analytic, num) < TOL


def rand_gru(rng, d_x, d_h, activation="relu"):
    arrs = []
    for f in GRU_FIELDS:
        if f.startswith("W"):
            arrs.append(rng.standard_normal((d_h, d_x)) * 0.5)
        elif f.startswith("U"):
            arrs.append(rng.standard_normal((d_h, d_h)) * 0.5)
        else:
            arrs.append(rng.standard_normal(d_h) * 0.5)
    return GruParams(*arrs, state_activation=activation)


def rand_attention(rng, d_v, d_h, d_a):
    return AttentionParams(rng.standard_normal((d_a, d_v)), rng.standard_normal((d_a, d_h)),
                           rng.standard_normal(d_a), rng.standard_normal(d_a))


# -- embedding ---------------------------------------------------------------


def test_embed_identity_table():
    np.testing.assert_array_equal(embed_lookup(EmbeddingParams(np.eye(3)), 1), [0, 1, 0])


def test_embed_equals_one_hot_product():
    E = make_rng(0).standard_normal((4, 6))
    for i in range(6):
        np.testing.assert_array_equal(embed_lookup(EmbeddingParams(E), i), E @ np.eye(6)[i])


def test_embed_out_of_range():
    with pytest.raises(VocabularyError, match="7"):
        embed_lookup(EmbeddingParams(np.zeros((2, 3))), 7)
    with pytest.raises(VocabularyError):
        embed_lookup(EmbeddingParams(np.zeros((2, 3))), -1)


def test_embed_backward_single_column():
    rng = make_rng(1)
    E = rng.standard_normal((4, 5))
    c = rng.standard_normal(4)
    g = embed_backward(EmbeddingParams(E), 2, c)["E"]
    assert not np.any(np.delete(g, 2, axis=1))
    check(g, lambda e: float(c @ embed_lookup(EmbeddingParams(e), 2)), E)


# -- GRU ---------------------------------------------------------------------


@pytest.mark.parametrize("activation", ["relu", "stanh"])
def test_gru_zero_params(activation):
    z = np.zeros
    params = GruParams(z((3, 2)), z((3, 3)), z(3), z((3, 2)), z((3, 3)), z(3), z((3, 2)), z((3, 3)), z(3),
                       state_activation=activation)
    p = np.array([1.0, -2.0, 0.5])
    h, cache = gru_step(params, np.array([0.3, 0.7]), p)
    np.testing.assert_array_equal(cache.r, 0.5)
    np.testing.assert_array_equal(cache.z, 0.5)
    np.testing.assert_array_equal(cache.h_tilde, 0.0)
    np.testing.assert_array_equal(h, 0.5 * p)


def test_gru_gate_injection():
    rng = make_rng(2)
    params = rand_gru(rng, 4, 5)
    x, hp = rng.standard_normal(4), rng.standard_normal(5)
    h, _ = gru_step(params, x, hp, gates={"z": np.ones(5)})
    np.testing.assert_array_equal(h, hp)
    h, cache = gru_step(params, x, hp, gates={"z": np.zeros(5)})
    np.testing.assert_array_equal(h, cache.h_tilde)
    # r = 0 removes h_prev from the candidate
    _, cache = gru_step(params, x, hp, gates={"r": np.zeros(5), "z": np.zeros(5)})
    np.testing.assert_allclose(cache.a_h, params.W_h @ x + params.b_h, atol=1e-15)


def test_gru_shape_error():
    params = rand_gru(make_rng(3), 4, 5)
    with pytest.raises(DimensionError):
        gru_step(params, np.zeros(3), np.zeros(5))
    with pytest.raises(DimensionError):
        gru_step(params, np.zeros(4), np.zeros(4))


@pytest.mark.parametrize("activation", ["relu", "stanh"])
def test_gru_backward_matches_finite_differences(activation):
    rng = make_rng(4)
    for _ in range(TRIALS):
        d_x, d_h = rng.integers(3, 9, size=2)
        params = rand_gru(rng, d_x, d_h, activation)
        x, hp = rng.standard_normal(d_x), rng.standard_normal(d_h)
        c = rng.standard_normal(d_h)
        f = lambda: float(c @ gru_step(params, x, hp)[0])
        _, cache = gru_step(params, x, hp)
        dx, dhp, grads = gru_backward(params, cache, c)
        check(dx, lambda _: f(), x)
        check(dhp, lambda _: f(), hp)
        for name in GRU_FIELDS:
            check(grads[name], lambda _: f(), getattr(params, name))


# -- attention ---------------------------------------------------------------


def test_attention_zero_w():
    rng = make_rng(5)
    params = rand_attention(rng, 4, 3, 5)
    params.w[:] = 0
    np.testing.assert_array_equal(attention_scores(params, rng.standard_normal((6, 4)), rng.standard_normal(3)), 0)


def test_attention_identical_rows():
    rng = make_rng(6)
    params = rand_attention(rng, 4, 3, 5)
    pool = np.tile(rng.standard_normal(4), (5, 1))
    s = attention_scores(params, pool, rng.standard_normal(3))
    assert np.all(s == s[0])


def test_attention_scores_match_scalar_reference():
    rng = make_rng(7)
    params = rand_attention(rng, 4, 3, 5)
    pool, h = rng.standard_normal((6, 4)), rng.standard_normal(3)
    got = attention_scores(params, pool, h)
    for m in range(6):
        ref = 0.0
        for a in range(5):
            pre = params.b_q[a]
            for j in range(4):
                pre += params.W_q[a, j] * pool[m, j]
            for j in range(3):
                pre += params.U_q[a, j] * h[j]
            ref += params.w[a] * 1.7159 * np.tanh(2.0 / 3.0 * pre)
        assert abs(got[m] - ref) <= 1e-12


def test_attention_empty_pool():
    params = rand_attention(make_rng(8), 4, 3, 5)
    with pytest.raises(DimensionError):
        attention_scores(params, np.zeros((0, 4)), np.zeros(3))


def test_attend_single_feature():
    v = np.array([[1.5, -2.0, 3.0]])
    u, w = attend(np.array([0.7]), v)
    np.testing.assert_array_equal(w, [1.0])
    np.testing.assert_array_equal(u, v[0])


def test_attend_equal_scores_is_mean():
    pool = make_rng(9).standard_normal((5, 3))
    u, _ = attend(np.full(5, 2.0), pool)
    np.testing.assert_allclose(u, pool.mean(axis=0), atol=1e-14)


def test_attend_saturation():
    pool = make_rng(10).standard_normal((4, 3))
    scores = np.zeros(4)
    scores[2] = 50.0
    u, _ = attend(scores, pool)
    np.testing.assert_allclose(u, pool[2], atol=1e-12)


def test_attend_length_mismatch():
    with pytest.raises(DimensionError):
        attend(np.zeros(3), np.zeros((4, 2)))


def test_attention_weights_distribution():
    rng = make_rng(11)
    for _ in range(200):
        params = rand_attention(rng, 4, 3, 5)
        _, cache = attention_forward(params, rng.standard_normal((int(rng.integers(1, 9)), 4)) * 5, rng.standard_normal(3))
        assert np.all(cache.weights >= 0)
        assert abs(cache.weights.sum() - 1.0) <= 1e-12


def test_attention_backward_matches_finite_differences():
    rng = make_rng(12)
    for _ in range(TRIALS):
        d_v, d_h, d_a, km = rng.integers(3, 9, size=4)
        params = rand_attention(rng, d_v, d_h, d_a)
        pool, h = rng.standard_normal((km, d_v)), rng.standard_normal(d_h)
        c = rng.standard_normal(d_v)
        f = lambda _: float(c @ attention_forward(params, pool, h)[0])
        _, cache = attention_forward(params, pool, h)
        dpool, dh, grads = attention_backward(params, cache, c)
        check(dpool, f, pool)
        check(dh, f, h)
        for name in ("W_q", "U_q", "b_q", "w"):
            check(grads[name], f, getattr(params, name))


# -- multimodal --------------------------------------------------------------


def rand_mm(rng, dims, d_h, d_m):
    return MultimodalParams({ch: rng.standard_normal((d_m, d)) for ch, d in dims.items()},
                            rng.standard_normal((d_m, d_h)), rng.standard_normal(d_m))


def test_multimodal_zero_params():
    z = np.zeros
    params = MultimodalParams({"o": z((4, 3)), "a": z((4, 2))}, z((4, 5)), z(4))
    rng = make_rng(13)
    m, _ = multimodal_fuse(params, {"o": rng.standard_normal(3), "a": rng.standard_normal(2)}, rng.standard_normal(5))
    np.testing.assert_array_equal(m, 0)


def test_multimodal_channel_isolation():
    rng = make_rng(14)
    params = rand_mm(rng, {"o": 3, "a": 2}, 5, 4)
    params.W["o"][:] = 0
    h = rng.standard_normal(5)
    m1, _ = multimodal_fuse(params, {"o": rng.standard_normal(3), "a": np.zeros(2)}, h)
    m2, _ = multimodal_fuse(params, {"o": rng.standard_normal(3), "a": np.zeros(2)}, h)
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_allclose(m1, stanh(params.U_m @ h + params.b_m), atol=1e-15)


def test_multimodal_bounded_and_shape_errors():
    rng = make_rng(15)
    params = rand_mm(rng, {"o": 3, "a": 2}, 5, 4)
    m, _ = multimodal_fuse(params, {"o": 100 * rng.standard_normal(3), "a": rng.standard_normal(2)}, rng.standard_normal(5))
    assert np.all(np.abs(m) <= 1.7159)
    with pytest.raises(DimensionError):
        multimodal_fuse(params, {"o": np.zeros(4), "a": np.zeros(2)}, np.zeros(5))
    with pytest.raises(DimensionError):
        multimodal_fuse(params, {"o": np.zeros(3)}, np.zeros(5))


def test_multimodal_backward_matches_finite_differences():
    rng = make_rng(16)
    for _ in range(TRIALS):
        d_o, d_a, d_h, d_m = rng.integers(3, 9, size=4)
        params = rand_mm(rng, {"o": d_o, "a": d_a}, d_h, d_m)
        params.W = {k: v * 0.3 for k, v in params.W.items()}
        feats = {"o": rng.standard_normal(d_o), "a": rng.standard_normal(d_a)}
        h = rng.standard_normal(d_h)
        c = rng.standard_normal(d_m)
        f = lambda _: float(c @ multimodal_fuse(params, feats, h)[0])
        _, cache = multimodal_fuse(params, feats, h)
        dfeats, dh, grads = multimodal_backward(params, cache, c)
        check(dh, f, h)
        for ch in ("o", "a"):
            check(dfeats[ch], f, feats[ch])
            check(grads[f"W.{ch}"], f, params.W[ch])
        check(grads["U_m"], f, params.U_m)
        check(grads["b_m"], f, params.b_m)


# -- dropout -----------------------------------------------------------------


def test_dropout_identity_cases():
    x = make_rng(17).standard_normal(100)
    for mode in ("train", "eval"):
        np.testing.assert_array_equal(dropout(x, 0.0, mode, make_rng(0)), x)
    np.testing.assert_array_equal(dropout(x, 0.5, "eval", make_rng(0)), x)


def test_dropout_mean_preserved():
    x = np.full(100_000, 2.0)
    y = dropout(x, 0.5, "train", make_rng(18))
    assert abs(y.mean() - 2.0) <= 0.02 * 2.0
    assert set(np.unique(y)) <= {0.0, 4.0}
    assert abs(np.mean(y == 0) - 0.5) < 0.01


def test_dropout_bad_rate():
    for rate in (-0.1, 1.0, 1.5):
        with pytest.raises(ConfigError):
            dropout(np.ones(3), rate, "train", make_rng(0))


# -- output stack ------------------------------------------------------------


def rand_output(rng, d_e, d_m, n, bias=True):
    return OutputParams(rng.standard_normal((d_e, d_m)) * 0.5, rng.standard_normal(d_e),
                        rng.standard_normal(n) if bias else None)


def test_output_zero_table_gives_bias():
    rng = make_rng(19)
    out = rand_output(rng, 4, 5, 6)
    emb = EmbeddingParams(np.zeros((4, 6)))
    for _ in range(3):
        logits, _ = output_logits(out, emb, rng.standard_normal(5))
        np.testing.assert_array_equal(logits, out.b_soft)


def test_output_shares_table_with_lookup():
    rng = make_rng(20)
    emb = EmbeddingParams(rng.standard_normal((4, 6)))
    out = rand_output(rng, 4, 5, 6)
    m = rng.standard_normal(5)
    before_logits, _ = output_logits(out, emb, m)
    before_vec = embed_lookup(emb, 3)
    emb.E[:, 3] += 1.0
    after_logits, _ = output_logits(out, emb, m)
    assert after_logits[3] != before_logits[3]
    assert not np.array_equal(embed_lookup(emb, 3), before_vec)


def test_output_shape_errors():
    rng = make_rng(21)
    out = rand_output(rng, 4, 5, 6)
    with pytest.raises(DimensionError):
        output_logits(out, EmbeddingParams(np.zeros((4, 6))), np.zeros(4))
    with pytest.raises(DimensionError):
        output_logits(out, EmbeddingParams(np.zeros((3, 6))), np.zeros(5))


@pytest.mark.parametrize("bias", [True, False])
def test_output_backward_matches_finite_differences(bias):
    rng = make_rng(22)
    for _ in range(TRIALS):
        d_e, d_m, n = rng.integers(3, 9, size=3)
        emb = EmbeddingParams(rng.standard_normal((d_e, n)))
        out = rand_output(rng, d_e, d_m, n, bias)
        m = rng.standard_normal(d_m)
        c = rng.standard_normal(n)
        f = lambda _: float(c @ output_logits(out, emb, m)[0])
        _, cache = output_logits(out, emb, m)
        dm, grads = output_backward(out, emb, cache, c)
        check(dm, f, m)
        check(grads["E"], f, emb.E)
        check(grads["W_hid"], f, out.W_hid)
        check(grads["b_hid"], f, out.b_hid)
        if bias:
            check(grads["b_soft"], f, out.b_soft)


def test_tied_table_gradient_from_both_uses():
    # Loss = c . logits(m(x)) where x = embed_lookup(E, k): E enters twice.
    rng = make_rng(23)
    d_e, d_m, n, k = 4, 5, 6, 2
    E = rng.standard_normal((d_e, n))
    W = rng.standard_normal((d_m, d_e)) * 0.5
    out = rand_output(rng, d_e, d_m, n)
    c = rng.standard_normal(n)

    def loss(table):
        emb = EmbeddingParams(table)
        m = np.tanh(W @ embed_lookup(emb, k))
        return float(c @ output_logits(out, emb, m)[0])

    emb = EmbeddingParams(E)
    x = embed_lookup(emb, k)
    m = np.tanh(W @ x)
    _, cache = output_logits(out, emb, m)
    dm, grads = output_backward(out, emb, cache, c)
    dx = W.T @ (dm * (1 - m * m))
    total = grads["E"] + embed_backward(emb, k, dx)["E"]
    check(total, loss, E)
    assert relative_error(grads["E"], finite_diff_grad(loss, E)) > 1e-3
