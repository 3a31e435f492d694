"""Two-phase training, the on-disk feature cache and model checkpoints."""
from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import model as M
from .errors import CacheError, ConfigError, DivergenceError, ValidationError

log = logging.getLogger(__name__)

CACHE_MAGIC = b"CLFC"
CACHE_VERSION = 1
CKPT_MAGIC = b"CLCK"
CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    w_m: float = 1.0
    w_s: float = 0.5
    learning_rate: float = 1e-2
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 10            # sequences per phase-2 step
    phase1_batch_size: int = 32     # single steps per phase-1 step
    seed: int = 0
    causal_mask: bool = False
    # phase 2: shift each training window by up to this many steps, padding with blank features
    window_jitter: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.w_m <= 0 or self.w_s <= 0:
            raise ConfigError("w_m and w_s must be positive")
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1 or self.phase1_batch_size < 1:
            raise ConfigError("invalid learning rate, epoch count or batch size")
        if self.window_jitter < 0:
            raise ConfigError("window_jitter must be non-negative")

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"train config: unknown keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class SequenceDataset:
    """Fixed-length labeled feature sequences.

    ``features`` is float32 ``(S, N, F)``; ``sub`` holds sub-class ids with -1 for
    unlabeled steps; ``conf`` is float32 and zero wherever ``sub`` is -1.
    """

    features: np.ndarray
    sub: np.ndarray
    conf: np.ndarray
    blackout: np.ndarray | None = None
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.sub = np.asarray(self.sub, dtype=np.int64)
        self.conf = np.asarray(self.conf, dtype=np.float32)
        if self.features.ndim != 3 or self.sub.shape != self.features.shape[:2] or self.conf.shape != self.sub.shape:
            raise ValidationError(
                f"inconsistent dataset shapes {self.features.shape}, {self.sub.shape}, {self.conf.shape}")
        if self.blackout is None:
            self.blackout = np.zeros(self.sub.shape, dtype=bool)
        if not self.ids:
            self.ids = [str(i) for i in range(len(self))]

    def __len__(self):
        return self.features.shape[0]

    @property
    def seq_len(self):
        return self.features.shape[1]

    @property
    def n_features(self):
        return self.features.shape[2]

    def subset(self, idx) -> "SequenceDataset":
        idx = list(idx)
        return SequenceDataset(self.features[idx], self.sub[idx], self.conf[idx],
                               self.blackout[idx], [self.ids[i] for i in idx])


# ---------------------------------------------------------------- cache

def write_cache(dest, data: SequenceDataset, latent: int = 0):
    """Write features and labels as little-endian float32 records.

    Header: magic, version, F, latent size, N, record count (u32 each after the
    magic). One record per step: F features, then sub id, then confidence.
    ``dest`` is a path or a binary file object.
    """
    S, N, F = data.features.shape
    rec = np.empty((S * N, F + 2), dtype="<f4")
    rec[:, :F] = data.features.reshape(-1, F)
    rec[:, F] = data.sub.reshape(-1)
    rec[:, F + 1] = data.conf.reshape(-1)
    header = CACHE_MAGIC + struct.pack("<5I", CACHE_VERSION, F, latent, N, S * N)
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            fh.write(header)
            fh.write(rec.tobytes())
    else:
        dest.write(header)
        dest.write(rec.tobytes())


def read_cache(src, n_features=None, latent=None) -> SequenceDataset:
    if isinstance(src, (str, Path)):
        try:
            raw = Path(src).read_bytes()
        except FileNotFoundError:
            raise CacheError(f"cache not found: {src}") from None
    else:
        raw = src.read()
    if raw[:4] != CACHE_MAGIC:
        raise CacheError("not a feature cache (bad magic)")
    version, F, mu, N, count = struct.unpack("<5I", raw[4:24])
    if version != CACHE_VERSION:
        raise CacheError(f"unsupported cache version {version}")
    if n_features is not None and F != n_features:
        raise CacheError(f"cache has {F} features, model expects {n_features}")
    if latent is not None and mu and mu != latent:
        raise CacheError(f"cache was built for latent size {mu}, model has {latent}")
    if N == 0 or count % N:
        raise CacheError(f"record count {count} is not a multiple of sequence length {N}")
    body = np.frombuffer(raw[24:], dtype="<f4")
    if body.size != count * (F + 2):
        raise CacheError(f"cache truncated: expected {count * (F + 2)} values, found {body.size}")
    rec = body.reshape(count, F + 2)
    S = count // N
    return SequenceDataset(rec[:, :F].reshape(S, N, F).copy(),
                           rec[:, F].astype(np.int64).reshape(S, N),
                           rec[:, F + 1].reshape(S, N).copy())


def cache_features(data: SequenceDataset, dest, latent: int = 0) -> int:
    """Persist provider features once so temporal training never calls the provider."""
    write_cache(dest, data, latent)
    return len(data) * data.seq_len


# ---------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    model: M.ModelConfig
    params: dict[str, np.ndarray]
    temporal: bool
    causal: bool = False
    meta: dict = field(default_factory=dict)

    def logits(self, features):
        main, sub, _ = M.forward(features, self.params, self.model, self.temporal, self.causal)
        return main, sub

    def predict(self, features) -> M.HierarchicalPrediction:
        return M.decode_hierarchical(*self.logits(features))


def save_checkpoint(dest, ckpt: Checkpoint):
    names = list(ckpt.params)
    head = {
        "model": ckpt.model.to_dict(),
        "temporal": ckpt.temporal,
        "causal": ckpt.causal,
        "meta": ckpt.meta,
        "tensors": [[n, list(ckpt.params[n].shape)] for n in names],
    }
    blob = json.dumps(head, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC + struct.pack("<2I", CKPT_VERSION, len(blob)))
    buf.write(blob)
    for n in names:
        buf.write(np.ascontiguousarray(ckpt.params[n], dtype="<f4").tobytes())
    Path(dest).write_bytes(buf.getvalue())


def load_checkpoint(src) -> Checkpoint:
    try:
        raw = Path(src).read_bytes()
    except FileNotFoundError:
        raise ValidationError(f"checkpoint not found: {src}") from None
    if raw[:4] != CKPT_MAGIC:
        raise ValidationError(f"{src}: not a checkpoint")
    version, n = struct.unpack("<2I", raw[4:12])
    if version != CKPT_VERSION:
        raise ValidationError(f"{src}: unsupported checkpoint version {version}")
    head = json.loads(raw[12:12 + n])
    off = 12 + n
    params = {}
    for name, shape in head["tensors"]:
        size = int(np.prod(shape))
        params[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 4 * size
    return Checkpoint(M.ModelConfig(**head["model"]), params, head["temporal"], head["causal"], head["meta"])


# ---------------------------------------------------------------- optimisation

class SGD:
    """Stochastic gradient descent with heavy-ball momentum."""

    def __init__(self, params, lr, momentum=0.9, clip_norm=None, keys=None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.keys = list(keys if keys is not None else params)
        self.velocity = {k: np.zeros_like(params[k]) for k in self.keys}

    def step(self, grads):
        scale = 1.0
        if self.clip_norm:
            norm = math.sqrt(sum(float((grads[k] ** 2).sum()) for k in self.keys))
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
        for k in self.keys:
            v = self.velocity[k]
            v *= self.momentum
            v += scale * grads[k]
            self.params[k] -= self.lr * v


def _check_finite(value, epoch, step):
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    epoch_loss: list[float]


def train_phase1(data: SequenceDataset, cfg: TrainConfig, model_cfg: M.ModelConfig | None = None,
                 params=None) -> TrainResult:
    """Encoder + decoder on single steps, no attention."""
    model_cfg = model_cfg or M.ModelConfig(n_features=data.n_features)
    if model_cfg.n_features != data.n_features:
        raise ConfigError(f"model expects {model_cfg.n_features} features, data has {data.n_features}")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        full = M.init_params(model_cfg, rng)
        params = {k: full[k] for k in M.encoder_keys(full)}
    x = data.features.reshape(-1, 1, data.n_features)
    y = data.sub.reshape(-1, 1)
    c = data.conf.reshape(-1, 1)
    opt = SGD(params, cfg.learning_rate, cfg.momentum, cfg.clip_norm)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        total, steps = 0.0, 0
        for step, start in enumerate(range(0, len(order), cfg.phase1_batch_size)):
            idx = order[start:start + cfg.phase1_batch_size]
            value, grads = M.loss_and_grad(params, model_cfg, x[idx], y[idx], c[idx],
                                           temporal=False, w_m=cfg.w_m, w_s=cfg.w_s)
            _check_finite(value, epoch, step)
            opt.step(grads)
            total += value
            steps += 1
        history.append(total / max(steps, 1))
        log.debug("phase 1 epoch %d loss %.6f", epoch, history[-1])
    ckpt = Checkpoint(model_cfg, params, temporal=False,
                      meta={"phase": 1, "train": asdict(cfg), "epoch_loss": history})
    return TrainResult(ckpt, history)


def _jitter_window(feat, sub, conf, shift):
    """Shift a sequence by ``shift`` steps, filling vacated steps with blank, unlabeled entries."""
    if shift == 0:
        return feat, sub, conf
    f2 = np.zeros_like(feat)
    s2 = np.full_like(sub, -1)
    c2 = np.zeros_like(conf)
    n = feat.shape[0]
    if shift > 0:
        f2[shift:], s2[shift:], c2[shift:] = feat[:n - shift], sub[:n - shift], conf[:n - shift]
    else:
        f2[:shift], s2[:shift], c2[:shift] = feat[-shift:], sub[-shift:], conf[-shift:]
    return f2, s2, c2


def train_phase2(data: SequenceDataset, cfg: TrainConfig, init: Checkpoint | None = None,
                 model_cfg: M.ModelConfig | None = None) -> TrainResult:
    """Full model on whole sequences, starting from phase-1 encoder/decoder weights."""
    if init is not None:
        model_cfg = init.model
    model_cfg = model_cfg or M.ModelConfig(n_features=data.n_features)
    if model_cfg.n_features != data.n_features:
        raise ConfigError(f"model expects {model_cfg.n_features} features, data has {data.n_features}")
    rng = np.random.default_rng(cfg.seed + 1_000_003)
    params = M.init_params(model_cfg, rng)
    if init is not None:
        for k in M.encoder_keys(params):
            params[k] = np.array(init.params[k], dtype=np.float64)
    opt = SGD(params, cfg.learning_rate, cfg.momentum, cfg.clip_norm)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        total, steps = 0.0, 0
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            x, y, c = data.features[idx], data.sub[idx], data.conf[idx]
            if cfg.window_jitter:
                shifts = rng.integers(-cfg.window_jitter, cfg.window_jitter + 1, size=len(idx))
                parts = [_jitter_window(x[i], y[i], c[i], int(s)) for i, s in enumerate(shifts)]
                x = np.stack([p[0] for p in parts])
                y = np.stack([p[1] for p in parts])
                c = np.stack([p[2] for p in parts])
            value, grads = M.loss_and_grad(params, model_cfg, x, y, c, temporal=True,
                                           causal=cfg.causal_mask, w_m=cfg.w_m, w_s=cfg.w_s)
            _check_finite(value, epoch, step)
            opt.step(grads)
            total += value
            steps += 1
        history.append(total / max(steps, 1))
        log.debug("phase 2 epoch %d loss %.6f", epoch, history[-1])
    ckpt = Checkpoint(model_cfg, params, temporal=True, causal=cfg.causal_mask,
                      meta={"phase": 2, "train": asdict(cfg), "epoch_loss": history})
    return TrainResult(ckpt, history)


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
