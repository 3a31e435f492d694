# %% [markdown]
# # Blacking out frames, and picking videos to review
#
# Steps are replaced by a blank feature vector with probability p, while their
# labels are kept. Each probability is evaluated twice per checkpoint with
# fresh masks.

# %%
from cyclelane import bench, synth
from cyclelane import training as T

train = synth.generate_dataset(synth.SynthConfig(seed=100), 200)
test = synth.generate_dataset(synth.SynthConfig(seed=200), 50)
p1 = T.train_phase1(train, T.TrainConfig(learning_rate=0.01, epochs=5, seed=0)).checkpoint
p2 = T.train_phase2(train, T.TrainConfig(learning_rate=0.01, epochs=20, seed=0), init=p1).checkpoint

# %%
probs = (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)
for name, ck in (("per step", p1), ("sequence", p2)):
    curve = bench.blackout_sweep([ck], test, passes=2, seed=1, probs=probs)
    print(name, [f"{pt.p:.2f}:{pt.mean:.2f}" for pt in curve])

# %% [markdown]
# Ranking videos by model accuracy puts label problems first. Here one copy of
# a video has most of its labels scrambled.

# %%
import numpy as np

clean = test.subset(range(10))
noisy = test.subset(range(10))
rng = np.random.default_rng(0)
classes = np.array([int(c) for c in synth.DEFAULT_CLASSES])
noisy.sub = np.where(rng.random(noisy.sub.shape) < 0.7, rng.choice(classes, noisy.sub.shape), noisy.sub)
print(bench.rank_videos(p2, {"ride_a": clean, "ride_a_relabelled": noisy}))
