"""Synthetic feature sequences with intermittent class evidence.

Each sequence has one ground-truth sub-class. At every step the class's
signature appears with probability ``signal_rate``; the remaining steps show a
background pattern shared by all classes. The signal therefore has to be
integrated over time to recover the class from most steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .taxonomy import MainClass, SubClass, parse_sub, subclasses_of
from .training import SequenceDataset

# one sub-class per main class
DEFAULT_CLASSES = tuple(subclasses_of(m)[0] for m in MainClass)


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple[SubClass, ...] = DEFAULT_CLASSES
    signal_rate: float = 0.1
    noise_std: float = 0.5
    n_features: int = 64
    seq_len: int = 50
    seed: int = 0
    # seed of the class signatures and background; shared between train and test splits
    pattern_seed: int = 12345

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(parse_sub(c) for c in self.classes))
        if not self.classes:
            raise ConfigError("synthetic benchmark needs at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("duplicate classes in synthetic config")
        if not 0.0 <= self.signal_rate <= 1.0:
            raise ConfigError("signal_rate must lie in [0, 1]")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.n_features < 1 or self.seq_len < 1:
            raise ConfigError("n_features and seq_len must be positive")


@dataclass
class Patterns:
    signatures: np.ndarray = field(repr=False)  # (K, F)
    background: np.ndarray = field(repr=False)  # (F,)


def make_patterns(cfg: SynthConfig) -> Patterns:
    rng = np.random.default_rng(cfg.pattern_seed)
    sig = rng.normal(size=(len(cfg.classes), cfg.n_features))
    bg = rng.normal(size=cfg.n_features)
    return Patterns(sig, bg)


def generate_dataset(cfg: SynthConfig, count: int) -> SequenceDataset:
    """``count`` sequences with classes balanced round-robin, then shuffled."""
    if count < 0:
        raise ConfigError("count must be non-negative")
    pat = make_patterns(cfg)
    rng = np.random.default_rng(cfg.seed)
    K, N, F = len(cfg.classes), cfg.seq_len, cfg.n_features
    cls = rng.permutation(np.arange(count) % K)
    present = rng.random((count, N)) < cfg.signal_rate
    noise = rng.normal(size=(count, N, F)) * cfg.noise_std
    clean = np.where(present[..., None], pat.signatures[cls][:, None, :], pat.background)
    feats = (clean + noise).astype(np.float32)
    sub_ids = np.array([int(c) for c in cfg.classes])[cls]
    sub = np.repeat(sub_ids[:, None], N, axis=1)
    conf = np.ones((count, N), dtype=np.float32)
    return SequenceDataset(feats, sub, conf, ids=[f"seq{i:04d}" for i in range(count)])


def signal_mask(cfg: SynthConfig, count: int) -> np.ndarray:
    """The per-step signature presence used by ``generate_dataset`` for the same config."""
    rng = np.random.default_rng(cfg.seed)
    rng.permutation(count)
    return rng.random((count, cfg.seq_len)) < cfg.signal_rate


def apply_blackout(data: SequenceDataset, p: float, seed, fill=None) -> SequenceDataset:
    """Replace each step independently with the blank feature vector with probability ``p``.

    Labels are kept: blanked steps still have to be classified.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError("blackout probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    hit = rng.random(data.sub.shape) < p
    blank = np.zeros(data.n_features, dtype=np.float32) if fill is None else np.asarray(fill, np.float32)
    feats = np.where(hit[..., None], blank, data.features)
    return SequenceDataset(feats, data.sub.copy(), data.conf.copy(), data.blackout | hit, list(data.ids))
