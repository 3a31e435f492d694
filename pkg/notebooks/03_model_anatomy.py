# %% [markdown]
# # Inside the sequence classifier
#
# A small numpy transformer: a per-step encoder, sinusoidal positions, a stack
# of self-attention blocks and two linear heads (5 main classes, 13
# sub-classes). Gradients are written by hand, so the first thing to look at
# is how they compare with finite differences.

# %%
import numpy as np

from cyclelane import model as M

cfg = M.ModelConfig(n_features=6, latent=8, heads=2, blocks=3)
rng = np.random.default_rng(0)
params = M.init_params(cfg, rng)
x = rng.normal(size=(2, 4, 6))
y = rng.integers(0, 13, (2, 4))
conf = rng.uniform(0.2, 1.0, (2, 4))

value, grads = M.loss_and_grad(params, cfg, x, y, conf)
print("loss", value)

# %%
h = 1e-5
for name in ("enc.0.W", "blk1.attn.q.W", "blk2.ff.2.b", "dec.sub.W"):
    w = params[name]
    num = np.zeros_like(w)
    for i in np.ndindex(w.shape):
        old = w[i]
        w[i] = old + h
        up = M.loss_and_grad(params, cfg, x, y, conf)[0]
        w[i] = old - h
        down = M.loss_and_grad(params, cfg, x, y, conf)[0]
        w[i] = old
        num[i] = (up - down) / (2 * h)
    err = np.linalg.norm(num - grads[name]) / np.linalg.norm(num)
    print(f"{name:16s} rel err {err:.1e}")

# %% [markdown]
# Decoding is hierarchical: the sub-class softmax only runs over the children
# of the winning main class.

# %%
main, sub, _ = M.forward(x[0], params, cfg)
pred = M.decode_hierarchical(main, sub)
print(pred.main_argmax, pred.sub_argmax)
print(np.round(pred.sub_probs[0], 3))

# %% [markdown]
# With a causal mask, step i never sees later steps.

# %%
a, _, _ = M.forward(x[0], params, cfg, causal=True)
x2 = x[0].copy()
x2[2:] += 10
b, _, _ = M.forward(x2, params, cfg, causal=True)
print(np.array_equal(a[:2], b[:2]), np.array_equal(a[2:], b[2:]))
