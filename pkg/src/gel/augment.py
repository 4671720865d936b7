"""Embedding-space augmentation applied during classifier training only.

The primary scheme perturbs exactly one embedding dimension per character
position by a uniform draw; the baseline zeroes whole positions like
dropout. Both are pure functions of (batch, config, rng) so callers own
determinism by seeding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SsaConfig:
    gamma: float = 2.0  # perturbation drawn from U(-gamma, gamma)
    rate: float = 1.0   # probability a character position is perturbed

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("rate must be in [0, 1]")


@dataclass(frozen=True)
class WtConfig:
    p: float = 0.1  # probability a character position is zeroed entirely

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must be in [0, 1]")


def ssa(batch: np.ndarray, cfg: SsaConfig, rng: np.random.Generator,
        pad_mask: np.ndarray | None = None) -> np.ndarray:
    """Perturb one uniformly chosen dimension per selected character position.

    batch is (N, c, d') embedding vectors; pad positions (pad_mask True) are
    never touched. Returns a fresh array; gamma = 0 is a bit-exact identity.
    """
    out = batch.copy()
    if cfg.gamma == 0.0 or cfg.rate == 0.0:
        return out
    n, c, d = batch.shape
    apply = rng.random((n, c)) < cfg.rate
    if pad_mask is not None:
        apply &= ~pad_mask
    dims = rng.integers(0, d, size=(n, c))
    u = rng.uniform(-cfg.gamma, cfg.gamma, size=(n, c)).astype(batch.dtype)
    ni, ci = np.nonzero(apply)
    out[ni, ci, dims[ni, ci]] += u[ni, ci]
    return out


def wildcard(batch: np.ndarray, cfg: WtConfig, rng: np.random.Generator,
             pad_mask: np.ndarray | None = None) -> np.ndarray:
    """Zero whole character positions with probability cfg.p."""
    out = batch.copy()
    if cfg.p == 0.0:
        return out
    n, c, _ = batch.shape
    drop = rng.random((n, c)) < cfg.p
    if pad_mask is not None:
        drop &= ~pad_mask
    out[drop] = 0.0
    return out
