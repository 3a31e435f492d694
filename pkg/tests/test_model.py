import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclelane import model as M
from cyclelane.errors import ShapeError
from cyclelane.taxonomy import MainClass, SubClass
from oracles import numeric_grad

SMALL = M.ModelConfig(n_features=6, latent=8, heads=2, blocks=3)


def params_for(cfg, seed=0):
    return M.init_params(cfg, np.random.default_rng(seed))


def rel_err(a, n, floor=1e-5):
    # floor: tensors whose true gradient vanishes (attention key bias) compare
    # two round-off sized numbers, where a plain ratio is meaningless. Real
    # gradients here have norms above 1e-2, far from the floor.
    return np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor)


# ---------------------------------------------------------------- positional encoding

def test_pe_values():
    pe = M.positional_encoding(5, 8)
    assert np.all(pe[0, 0::2] == 0.0)
    assert np.all(pe[0, 1::2] == 1.0)
    assert pe[1, 0] == pytest.approx(0.841471, abs=1e-6)
    # independent evaluation of the sinusoid table
    for pos in range(5):
        for i in range(4):
            assert pe[pos, 2 * i] == pytest.approx(math.sin(pos / 10000 ** (2 * i / 8)), abs=1e-15)
            assert pe[pos, 2 * i + 1] == pytest.approx(math.cos(pos / 10000 ** (2 * i / 8)), abs=1e-15)


def test_pe_odd_dimension():
    with pytest.raises(ShapeError):
        M.positional_encoding(4, 7)


# ---------------------------------------------------------------- encoder

def test_encode_zero_weights():
    p = {k: np.zeros_like(v) for k, v in params_for(SMALL).items()}
    z, _ = M.encode(np.random.default_rng(1).normal(size=(3, 6)), p, SMALL)
    assert np.all(z == 0.0)


def test_encode_identity():
    cfg = M.ModelConfig(n_features=8, latent=8, heads=2, encoder_layers=1)
    p = params_for(cfg)
    p["enc.0.W"] = np.eye(8)
    x = np.random.default_rng(2).normal(size=(4, 8))
    z, _ = M.encode(x, p, cfg)
    assert np.array_equal(z, x)


def test_encode_shape_error():
    with pytest.raises(ShapeError):
        M.encode(np.zeros((3, 5)), params_for(SMALL), SMALL)


def test_encoder_latent_gradient():
    rng = np.random.default_rng(3)
    p = params_for(SMALL, 3)
    x = rng.normal(size=(4, 6))
    probe = rng.normal(size=(4, 8))

    def f():
        return float((M.encode(x, p, SMALL)[0] * probe).sum())

    z, caches = M.encode(x, p, SMALL)
    g = {}
    M._encode_back(probe, caches, p, SMALL, g)
    for k in M.encoder_keys(p):
        if k.startswith("enc."):
            assert rel_err(g[k], numeric_grad(f, p[k])) < 1e-4, k


# ---------------------------------------------------------------- attention

def test_attention_single_step():
    p = params_for(SMALL)
    w = M.attention_weights(np.random.default_rng(0).normal(size=(1, 8)), M.full_mask(1), p, SMALL)
    assert w.shape == (1, 2, 1, 1)
    assert np.all(w == 1.0)


def test_attention_identical_keys_uniform():
    p = params_for(SMALL)
    row = np.random.default_rng(0).normal(size=8)
    x = np.tile(row, (5, 1))
    w = M.attention_weights(x, M.full_mask(5), p, SMALL)
    assert np.allclose(w, 1 / 5, atol=1e-15)
    wc = M.attention_weights(x, M.causal_mask(5), p, SMALL)
    for i in range(5):
        assert np.allclose(wc[0, :, i, : i + 1], 1 / (i + 1), atol=1e-15)
        assert np.all(wc[0, :, i, i + 1:] == 0.0)


@given(st.integers(1, 9), st.integers(0, 1000), st.booleans())
def test_attention_rows_sum_to_one(n, seed, causal):
    p = params_for(SMALL, seed % 7)
    x = np.random.default_rng(seed).normal(size=(n, 8)) * 3
    mask = M.causal_mask(n) if causal else M.full_mask(n)
    w = M.attention_weights(x, mask, p, SMALL)
    assert np.allclose(w.sum(-1), 1.0, atol=1e-12)
    assert np.all(w[..., ~mask] == 0.0)


def test_causal_future_invariance():
    rng = np.random.default_rng(4)
    p = params_for(SMALL, 4)
    x = rng.normal(size=(7, 6))
    base_m, base_s, _ = M.forward(x, p, SMALL, causal=True)
    for i in range(7):
        y = x.copy()
        y[i + 1:] = rng.normal(size=y[i + 1:].shape) * 10
        m, s, _ = M.forward(y, p, SMALL, causal=True)
        assert np.array_equal(m[: i + 1], base_m[: i + 1])
        assert np.array_equal(s[: i + 1], base_s[: i + 1])


def test_global_attention_is_sensitive():
    rng = np.random.default_rng(5)
    p = params_for(SMALL, 5)
    x = rng.normal(size=(8, 6))
    m, _, _ = M.forward(x, p, SMALL)
    y = x.copy()
    y[[0, 7]] = y[[7, 0]]
    m2, _, _ = M.forward(y, p, SMALL)
    assert not np.allclose(m[3], m2[3])


def test_single_step_causal_equals_full():
    p = params_for(SMALL)
    x = np.random.default_rng(6).normal(size=(1, 6))
    a = M.forward(x, p, SMALL, causal=True)
    b = M.forward(x, p, SMALL, causal=False)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_batch_matches_single():
    p = params_for(SMALL)
    x = np.random.default_rng(7).normal(size=(3, 5, 6))
    m, s, _ = M.forward(x, p, SMALL)
    for b in range(3):
        mb, sb, _ = M.forward(x[b], p, SMALL)
        assert np.allclose(m[b], mb, atol=1e-12) and np.allclose(s[b], sb, atol=1e-12)


# ---------------------------------------------------------------- decoding

def test_decode_uniform_main():
    pred = M.decode_hierarchical(np.zeros(5), np.zeros(13))
    assert np.allclose(pred.main_probs, 0.2)
    assert pred.main_argmax == 0
    assert pred.sub_probs[: 5] == pytest.approx([0.2] * 5)
    assert np.all(pred.sub_probs[5:] == 0.0)


def test_decode_singleton_branch():
    main = np.zeros(5)
    main[int(MainClass.PROTECTED_BIKE_LANE)] = 3.0
    pred = M.decode_hierarchical(main, np.random.default_rng(0).normal(size=13))
    assert np.count_nonzero(pred.sub_probs) == 1
    assert pred.sub_probs[int(SubClass.PROTECTED_BIKE_LANE)] == 1.0


# multiples of 1/64 keep logit + shift exact, so argmax comparisons are not rounding-sensitive
logits = st.lists(st.integers(-1920, 1920), min_size=18, max_size=18)


@given(logits, st.integers(-3200, 3200))
def test_decode_properties(vals, c):
    vals = np.array(vals) / 64.0
    c = c / 64.0
    main, sub = vals[:5], vals[5:]
    pred = M.decode_hierarchical(main, sub)
    assert pred.main_probs.sum() == pytest.approx(1.0, abs=1e-6)
    branch = M.CHILD_MASK[pred.main_argmax]
    assert pred.sub_probs[branch].sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(pred.sub_probs[~branch] == 0.0)
    assert np.all((pred.main_probs >= 0) & (pred.main_probs <= 1))
    shifted = M.decode_hierarchical(main + c, sub + c)
    assert shifted.main_argmax == pred.main_argmax
    assert shifted.sub_argmax == pred.sub_argmax
    assert np.allclose(shifted.sub_probs, pred.sub_probs, atol=1e-9)


# ---------------------------------------------------------------- loss

def test_loss_zero_confidence():
    rng = np.random.default_rng(0)
    value, dm, ds, _ = M.loss_terms(rng.normal(size=(4, 5)), rng.normal(size=(4, 13)),
                                    np.array([0, 3, -1, 12]), np.zeros(4))
    assert value == 0.0
    assert np.all(dm == 0.0) and np.all(ds == 0.0)


def test_loss_uniform_example():
    value = M.loss(np.zeros((1, 5)), np.zeros((1, 13)), np.array([2]), np.ones(1))
    assert value == pytest.approx(1.5 * math.log(5), abs=1e-12)
    assert value == pytest.approx(2.414, abs=1e-3)


def test_loss_linear_in_sub_weight():
    rng = np.random.default_rng(1)
    main, sub = rng.normal(size=(6, 5)), rng.normal(size=(6, 13))
    y = np.array([0, 5, 6, 9, 10, 12])
    c = rng.uniform(0.1, 1, 6)
    lo, _, _, (_, ce_s) = M.loss_terms(main, sub, y, c, w_s=0.5)
    hi = M.loss(main, sub, y, c, w_s=1.0)
    assert hi - lo == pytest.approx(0.5 * float((c * ce_s).mean()), abs=1e-12)


def test_loss_teacher_forced_branch():
    # the sub term only sees the true main class's children
    main, sub = np.zeros((1, 5)), np.zeros((1, 13))
    y = np.array([int(SubClass.BUFFERED_BOTH)])
    base = M.loss(main, sub, y, np.ones(1))
    sub2 = sub.copy()
    sub2[0, 0] = 50.0  # a child of another main class
    assert M.loss(main, sub2, y, np.ones(1)) == base


def test_unlabeled_needs_zero_confidence():
    with pytest.raises(ShapeError):
        M.loss(np.zeros((1, 5)), np.zeros((1, 13)), np.array([-1]), np.ones(1))


# ---------------------------------------------------------------- gradients

def _grad_check(cfg, n, temporal, causal, seed):
    rng = np.random.default_rng(seed)
    p = params_for(cfg, seed)
    # perturb the neutral initial values so every path carries signal
    for k in p:
        if k.endswith((".b", ".g")):
            p[k] = p[k] + rng.normal(0, 0.1, size=p[k].shape)
    x = rng.normal(size=(2, n, cfg.n_features))
    y = rng.integers(0, 13, size=(2, n))
    c = rng.uniform(0.2, 1.0, size=(2, n))
    y[0, 1], c[0, 1] = -1, 0.0

    def f():
        return M.loss_and_grad(p, cfg, x, y, c, temporal, causal)[0]

    _, g = M.loss_and_grad(p, cfg, x, y, c, temporal, causal)
    errs = {k: rel_err(g[k], numeric_grad(f, p[k])) for k in g}
    return errs, g


@pytest.mark.parametrize("causal", [False, True])
def test_full_gradient(causal):
    errs, g = _grad_check(SMALL, 4, True, causal, seed=11)
    assert set(g) == set(params_for(SMALL))
    bad = {k: e for k, e in errs.items() if not e < 1e-4}
    assert not bad


def test_key_bias_gradient_vanishes():
    # softmax is shift invariant along each query row, so the key bias cannot matter
    _, g = _grad_check(SMALL, 4, True, False, seed=12)
    for i in range(SMALL.blocks):
        assert np.abs(g[f"blk{i}.attn.k.b"]).max() < 1e-12


def test_phase1_gradient():
    errs, g = _grad_check(SMALL, 3, False, False, seed=13)
    assert set(g) == set(M.encoder_keys(params_for(SMALL)))
    assert max(errs.values()) < 1e-4


def test_zero_confidence_steps_no_gradient():
    p = params_for(SMALL, 2)
    x = np.random.default_rng(2).normal(size=(1, 4, 6))
    _, g = M.loss_and_grad(p, SMALL, x, np.array([[0, 1, 2, 3]]), np.zeros((1, 4)))
    assert all(np.all(v == 0.0) for v in g.values())
