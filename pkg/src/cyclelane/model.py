"""Temporal sequence classifier in plain numpy with hand-written backprop.

Pipeline per sequence of ``N`` feature vectors::

    encoder MLP -> + sinusoidal positions -> attention blocks -> two linear heads

The no-temporal variant skips the positions and the attention blocks, so every
step is classified on its own. Activations are batched as ``(B, N, dim)``.
Parameters live in a flat ``dict[str, ndarray]``; gradients use the same keys.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError
from .taxonomy import CHILDREN, N_MAIN, N_SUB, SUB_TO_MAIN

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)

_SUB_TO_MAIN = np.array(SUB_TO_MAIN)
# (5, 13) boolean: row m marks the children of main class m
CHILD_MASK = np.zeros((N_MAIN, N_SUB), dtype=bool)
for _m, _subs in enumerate(CHILDREN):
    CHILD_MASK[_m, list(_subs)] = True


@dataclass(frozen=True)
class ModelConfig:
    n_features: int = 64
    latent: int = 64
    heads: int = 4
    blocks: int = 3
    ff_mult: int = 4
    encoder_layers: int = 2

    def __post_init__(self):
        if self.latent % 2:
            raise ShapeError(f"latent size must be even for positional encoding, got {self.latent}")
        if self.latent % self.heads:
            raise ShapeError(f"latent size {self.latent} not divisible by {self.heads} heads")
        if self.encoder_layers < 1 or self.blocks < 0:
            raise ShapeError("need at least one encoder layer")

    def to_dict(self):
        return asdict(self)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """LeCun-normal weights, zero biases, unit layer-norm gains."""
    p = {}

    def dense(name, n_in, n_out):
        p[f"{name}.W"] = rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_in, n_out))
        p[f"{name}.b"] = np.zeros(n_out)

    mu = cfg.latent
    dims = [cfg.n_features] + [mu] * cfg.encoder_layers
    for k in range(cfg.encoder_layers):
        dense(f"enc.{k}", dims[k], dims[k + 1])
    for i in range(cfg.blocks):
        b = f"blk{i}"
        for ln in ("ln1", "ln2"):
            p[f"{b}.{ln}.g"] = np.ones(mu)
            p[f"{b}.{ln}.b"] = np.zeros(mu)
        for proj in ("q", "k", "v", "o"):
            dense(f"{b}.attn.{proj}", mu, mu)
        dense(f"{b}.ff.1", mu, cfg.ff_mult * mu)
        dense(f"{b}.ff.2", cfg.ff_mult * mu, mu)
    dense("dec.main", mu, N_MAIN)
    dense("dec.sub", mu, N_SUB)
    return p


def encoder_keys(params):
    return [k for k in params if k.startswith(("enc.", "dec."))]


# ---------------------------------------------------------------- primitives

def positional_encoding(n: int, dim: int) -> np.ndarray:
    if dim % 2:
        raise ShapeError(f"positional encoding needs an even dimension, got {dim}")
    if n < 1:
        raise ShapeError("sequence length must be at least 1")
    pos = np.arange(n)[:, None]
    freq = 10000.0 ** (np.arange(0, dim, 2) / dim)
    pe = np.empty((n, dim))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


def _linear(x, W, b):
    return x @ W + b


def _linear_back(dy, x, W):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.T, x2.T @ dy2, dy2.sum(axis=0)


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + t), t


def _gelu_back(dy, x, t):
    du = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _layernorm(x, g, b):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_back(dy, g, cache):
    xhat, inv = cache
    n = xhat.shape[-1]
    dxhat = dy * g
    dx = inv / n * (n * dxhat - dxhat.sum(-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(-1, keepdims=True))
    dg = (dy * xhat).reshape(-1, n).sum(axis=0)
    db = dy.reshape(-1, n).sum(axis=0)
    return dx, dg, db


def masked_softmax(scores, mask):
    """Softmax over the last axis; disallowed entries get exactly zero weight."""
    s = np.where(mask, scores, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def full_mask(n):
    return np.ones((n, n), dtype=bool)


def causal_mask(n):
    return np.tril(np.ones((n, n), dtype=bool))


def _split_heads(x, h):
    B, N, D = x.shape
    return x.reshape(B, N, h, D // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, N, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, N, H * d)


# ---------------------------------------------------------------- attention

def _mha(h, mask, p, pre, heads):
    q = _split_heads(_linear(h, p[pre + ".q.W"], p[pre + ".q.b"]), heads)
    k = _split_heads(_linear(h, p[pre + ".k.W"], p[pre + ".k.b"]), heads)
    v = _split_heads(_linear(h, p[pre + ".v.W"], p[pre + ".v.b"]), heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    a = masked_softmax(q @ k.transpose(0, 1, 3, 2) * scale, mask)
    ctx = _merge_heads(a @ v)
    out = _linear(ctx, p[pre + ".o.W"], p[pre + ".o.b"])
    return out, (h, q, k, v, a, ctx, scale)


def _mha_back(dout, cache, p, pre, g):
    h, q, k, v, a, ctx, scale = cache
    heads = q.shape[1]
    dctx, g[pre + ".o.W"], g[pre + ".o.b"] = _linear_back(dout, ctx, p[pre + ".o.W"])
    dctx = _split_heads(dctx, heads)
    da = dctx @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ dctx
    ds = a * (da - (da * a).sum(-1, keepdims=True)) * scale
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q
    dh = np.zeros_like(h)
    for name, d in (("q", dq), ("k", dk), ("v", dv)):
        dx, g[f"{pre}.{name}.W"], g[f"{pre}.{name}.b"] = _linear_back(_merge_heads(d), h, p[f"{pre}.{name}.W"])
        dh += dx
    return dh


def attention_weights(latents, mask, params, cfg: ModelConfig, block=0):
    """Attention matrix of one block's attention sub-layer, shape (B, H, N, N)."""
    x = np.asarray(latents, dtype=float)
    if x.ndim == 2:
        x = x[None]
    pre = f"blk{block}"
    heads = cfg.heads
    h, _ = _layernorm(x, params[pre + ".ln1.g"], params[pre + ".ln1.b"])
    _, cache = _mha(h, mask, params, pre + ".attn", heads)
    return cache[4]


def attention_block(x, mask, params, block, heads):
    """One pre-norm transformer block: x + MHA(LN(x)), then + FFN(LN(.))."""
    pre = f"blk{block}"
    h1, ln1 = _layernorm(x, params[pre + ".ln1.g"], params[pre + ".ln1.b"])
    att, att_cache = _mha(h1, mask, params, pre + ".attn", heads)
    x1 = x + att
    h2, ln2 = _layernorm(x1, params[pre + ".ln2.g"], params[pre + ".ln2.b"])
    u = _linear(h2, params[pre + ".ff.1.W"], params[pre + ".ff.1.b"])
    gu, t = _gelu(u)
    f = _linear(gu, params[pre + ".ff.2.W"], params[pre + ".ff.2.b"])
    return x1 + f, (ln1, att_cache, ln2, h2, u, t, gu)


def _block_back(dy, cache, params, block, g):
    pre = f"blk{block}"
    ln1, att_cache, ln2, h2, u, t, gu = cache
    dgu, g[pre + ".ff.2.W"], g[pre + ".ff.2.b"] = _linear_back(dy, gu, params[pre + ".ff.2.W"])
    du = _gelu_back(dgu, u, t)
    dh2, g[pre + ".ff.1.W"], g[pre + ".ff.1.b"] = _linear_back(du, h2, params[pre + ".ff.1.W"])
    dx1, g[pre + ".ln2.g"], g[pre + ".ln2.b"] = _layernorm_back(dh2, params[pre + ".ln2.g"], ln2)
    dx1 = dx1 + dy
    dh1 = _mha_back(dx1, att_cache, params, pre + ".attn", g)
    dx, g[pre + ".ln1.g"], g[pre + ".ln1.b"] = _layernorm_back(dh1, params[pre + ".ln1.g"], ln1)
    return dx + dx1


# ---------------------------------------------------------------- full model

def encode(features, params, cfg: ModelConfig):
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != cfg.n_features:
        raise ShapeError(f"expected {cfg.n_features} features, got {x.shape[-1]}")
    caches = []
    for k in range(cfg.encoder_layers):
        y = _linear(x, params[f"enc.{k}.W"], params[f"enc.{k}.b"])
        if k < cfg.encoder_layers - 1:
            a, t = _gelu(y)
            caches.append((x, y, t))
            x = a
        else:
            caches.append((x, None, None))
            x = y
    return x, caches


def _encode_back(dz, caches, params, cfg, g):
    for k in reversed(range(cfg.encoder_layers)):
        x, y, t = caches[k]
        if y is not None:
            dz = _gelu_back(dz, y, t)
        dz, g[f"enc.{k}.W"], g[f"enc.{k}.b"] = _linear_back(dz, x, params[f"enc.{k}.W"])
    return dz


def forward(features, params, cfg: ModelConfig, temporal=True, causal=False):
    """Logits for every step.

    ``features`` is ``(B, N, F)`` or ``(N, F)``. Returns ``(main_logits, sub_logits, cache)``
    with logits shaped like the input batch.
    """
    x = np.asarray(features, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"features must be (B, N, F), got shape {x.shape}")
    n = x.shape[1]
    z, enc_cache = encode(x, params, cfg)
    blk_caches = []
    mask = None
    if temporal:
        mask = causal_mask(n) if causal else full_mask(n)
        z = z + positional_encoding(n, cfg.latent)
        for i in range(cfg.blocks):
            z, c = attention_block(z, mask, params, i, cfg.heads)
            blk_caches.append(c)
    main = _linear(z, params["dec.main.W"], params["dec.main.b"])
    sub = _linear(z, params["dec.sub.W"], params["dec.sub.b"])
    cache = (z, enc_cache, blk_caches, temporal)
    if squeeze:
        return main[0], sub[0], cache
    return main, sub, cache


def backward(dmain, dsub, cache, params, cfg: ModelConfig) -> dict[str, np.ndarray]:
    z, enc_cache, blk_caches, temporal = cache
    if dmain.ndim == 2:
        dmain, dsub = dmain[None], dsub[None]
    g = {}
    dz, g["dec.main.W"], g["dec.main.b"] = _linear_back(dmain, z, params["dec.main.W"])
    dz2, g["dec.sub.W"], g["dec.sub.b"] = _linear_back(dsub, z, params["dec.sub.W"])
    dz = dz + dz2
    if temporal:
        for i in reversed(range(len(blk_caches))):
            dz = _block_back(dz, blk_caches[i], params, i, g)
    _encode_back(dz, enc_cache, params, cfg, g)
    return g


# ---------------------------------------------------------------- decoding & loss

def _log_softmax(x, mask=None):
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    s = x - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


@dataclass
class HierarchicalPrediction:
    main_probs: np.ndarray
    sub_probs: np.ndarray
    main_argmax: np.ndarray
    sub_argmax: np.ndarray


def decode_hierarchical(main_logits, sub_logits) -> HierarchicalPrediction:
    """Softmax over main classes, then over the winning main's children only.

    Works on any leading batch shape. ``np.argmax`` returns the first maximum,
    so ties go to the lowest class id.
    """
    main_logits = np.asarray(main_logits, dtype=float)
    sub_logits = np.asarray(sub_logits, dtype=float)
    main_probs = np.exp(_log_softmax(main_logits))
    main_arg = main_probs.argmax(axis=-1)
    branch = CHILD_MASK[main_arg]
    sub_probs = np.exp(_log_softmax(sub_logits, branch))
    sub_probs = np.where(branch, sub_probs, 0.0)
    sub_arg = sub_probs.argmax(axis=-1)
    return HierarchicalPrediction(main_probs, sub_probs, main_arg, sub_arg)


def loss_terms(main_logits, sub_logits, sub_labels, conf, w_m=1.0, w_s=0.5):
    """Confidence-weighted hierarchical cross-entropy and its logit gradients.

    The sub-class term is a softmax over the true main class's children.
    Steps with label ``-1`` must carry confidence 0. Returns
    ``(loss, dmain, dsub, parts)`` where the loss is the mean over all steps and
    ``parts`` holds the per-step main and sub cross-entropies.
    """
    sub_labels = np.asarray(sub_labels)
    conf = np.asarray(conf, dtype=float)
    if np.any((sub_labels < 0) & (conf != 0)):
        raise ShapeError("unlabeled steps must have zero confidence")
    ys = np.where(sub_labels < 0, 0, sub_labels)
    ym = _SUB_TO_MAIN[ys]
    count = conf.size

    lp_main = _log_softmax(main_logits)
    branch = CHILD_MASK[ym]
    lp_sub = _log_softmax(sub_logits, branch)
    ce_m = -np.take_along_axis(lp_main, ym[..., None], -1)[..., 0]
    ce_s = -np.take_along_axis(lp_sub, ys[..., None], -1)[..., 0]
    loss = float((conf * (w_m * ce_m + w_s * ce_s)).sum() / count)

    scale = (conf / count)[..., None]
    dmain = np.exp(lp_main)
    np.put_along_axis(dmain, ym[..., None], np.take_along_axis(dmain, ym[..., None], -1) - 1.0, -1)
    dmain *= w_m * scale
    dsub = np.where(branch, np.exp(lp_sub), 0.0)
    np.put_along_axis(dsub, ys[..., None], np.take_along_axis(dsub, ys[..., None], -1) - 1.0, -1)
    dsub *= w_s * scale
    return loss, dmain, dsub, (ce_m, ce_s)


def loss(main_logits, sub_logits, sub_labels, conf, w_m=1.0, w_s=0.5) -> float:
    return loss_terms(main_logits, sub_logits, sub_labels, conf, w_m, w_s)[0]


def loss_and_grad(params, cfg, features, sub_labels, conf, temporal=True, causal=False,
                  w_m=1.0, w_s=0.5):
    main, sub, cache = forward(features, params, cfg, temporal, causal)
    value, dmain, dsub, _ = loss_terms(main, sub, sub_labels, conf, w_m, w_s)
    return value, backward(dmain, dsub, cache, params, cfg)
