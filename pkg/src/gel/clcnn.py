"""Character-level convolutional text classifier.

Consumes fixed-length sequences of frozen character embeddings (mu vectors;
pad positions embed to zero), optionally augmented during training, and
trains with Adam plus decoupled weight decay under early stopping on
validation accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import nn
from .augment import SsaConfig, WtConfig, ssa, wildcard
from .corpus import EncodedSample, crop_windows
from .errors import ConfigError
from .glyphs import Charset
from .nn import ops
from .nn.tensor import NumericalError, Tensor, no_grad
from .vce import EmbeddingTable

log = logging.getLogger(__name__)

Augmentation = Union[None, SsaConfig, WtConfig]


@dataclass(frozen=True)
class ClcnnConfig:
    window: int = 80          # characters per sample (c)
    classes: int = 9
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch: int = 256
    max_epochs: int = 200
    patience: int = 10
    augmentation: Augmentation = None
    seed: int = 0
    channels: int = 512


def _build_stack(window: int, d: int, channels: int, classes: int,
                 rng, dtype) -> nn.Sequential:
    o = channels
    return nn.Sequential((window, d), [
        nn.Conv1d("conv1", d, o, 3, rng, dtype), nn.ReLU(),
        nn.MaxPool1d("pool1", 3, 3),
        nn.Conv1d("conv2", o, o, 3, rng, dtype), nn.ReLU(),
        nn.MaxPool1d("pool2", 3, 3),
        nn.Conv1d("conv3", o, o, 3, rng, dtype), nn.ReLU(),
        nn.Conv1d("conv4", o, o, 3, rng, dtype), nn.ReLU(),
        nn.Flatten(),
    ])


class ClcnnModel:
    """Four conv1d stages with two pools, flattened into one linear head."""

    def __init__(self, cfg: ClcnnConfig, latent_dim: int,
                 rng: np.random.Generator = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.latent_dim = latent_dim
        try:
            self.stack = _build_stack(cfg.window, latent_dim, cfg.channels,
                                      cfg.classes, rng, dtype)
        except nn.ShapeError as e:
            raise ConfigError(f"window {cfg.window} is too short for the "
                              f"conv/pool stack: {e}") from e
        flat = self.stack.output_shape[0]
        self.head = nn.Linear("head", flat, cfg.classes, rng, dtype)
        self.store = nn.ParamStore(self.stack.params() + self.head.params())

    def length_chain(self) -> list[int]:
        return [s[0] for s in self.stack.shape_chain if len(s) == 2]

    def forward_graph(self, x: Tensor) -> Tensor:
        return self.head(self.stack(x))

    def logits(self, x: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.forward_graph(Tensor(x)).data

    def save(self, path, meta: dict) -> None:
        meta = dict(meta, kind="clcnn", window=self.cfg.window,
                    classes=self.cfg.classes, channels=self.cfg.channels,
                    latent_dim=self.latent_dim)
        nn.save_weights(path, {n: p.data for n, p in self.store.params.items()}, meta)

    @classmethod
    def load(cls, path) -> tuple["ClcnnModel", dict]:
        tensors, meta = nn.load_weights(path)
        cfg = ClcnnConfig(window=meta["window"], classes=meta["classes"],
                          channels=meta["channels"])
        model = cls(cfg, meta["latent_dim"])
        model.store.restore(tensors)
        return model, meta


def embed_indices(indices: np.ndarray, table: EmbeddingTable) -> np.ndarray:
    """(N, c) charset indices -> (N, c, d') mu vectors; pad rows are zero."""
    return table.embedding_matrix()[indices]


def _augment(embedded: np.ndarray, indices: np.ndarray, pad_index: int,
             aug: Augmentation, rng: np.random.Generator) -> np.ndarray:
    if aug is None:
        return embedded
    pad_mask = indices == pad_index
    if isinstance(aug, SsaConfig):
        return ssa(embedded, aug, rng, pad_mask=pad_mask)
    if isinstance(aug, WtConfig):
        return wildcard(embedded, aug, rng, pad_mask=pad_mask)
    raise ConfigError(f"unknown augmentation {aug!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    augmentation: str = "none"
    best_epoch: int = 0
    best_val_accuracy: float = 0.0


def _as_arrays(samples: list[EncodedSample]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.stack([s.indices for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return idx, labels


def train_classifier(table: EmbeddingTable, train_samples: list[EncodedSample],
                     val_samples: list[EncodedSample], cfg: ClcnnConfig,
                     progress=None) -> tuple[ClcnnModel, TrainHistory]:
    """Train on frozen embeddings with the configured augmentation.

    Early-stops after cfg.patience epochs without a validation-accuracy
    improvement and restores the best checkpoint.
    """
    rng = np.random.default_rng(cfg.seed)
    model = ClcnnModel(cfg, table.latent_dim, rng)
    emb = table.embedding_matrix()
    pad = table.charset.pad_index

    tr_idx, tr_labels = _as_arrays(train_samples)
    va_idx, va_labels = _as_arrays(val_samples)

    history = TrainHistory(augmentation=repr(cfg.augmentation))
    best_acc, best_epoch = -1.0, 0
    best_snap = model.store.snapshot()

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(tr_idx))
        losses = []
        for lo in range(0, len(perm), cfg.batch):
            sel = perm[lo:lo + cfg.batch]
            batch_idx = tr_idx[sel]
            x = emb[batch_idx]
            x = _augment(x, batch_idx, pad, cfg.augmentation, rng)
            model.store.zero_grad()
            logits = model.forward_graph(Tensor(x))
            loss = ops.softmax_cross_entropy(logits, tr_labels[sel])
            if not np.isfinite(loss.data):
                raise NumericalError(f"non-finite loss at epoch {epoch}, "
                                     f"batch {lo // cfg.batch}")
            loss.backward()
            nn.adam_step(model.store, cfg.lr, weight_decay=cfg.weight_decay)
            losses.append(float(loss.data))

        val_acc = _accuracy(model, emb[va_idx], va_labels)
        history.epochs.append(EpochRecord(epoch, float(np.mean(losses)), val_acc))
        if progress:
            progress(history.epochs[-1])
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best_snap = model.store.snapshot()
        elif epoch - best_epoch >= cfg.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break

    model.store.restore(best_snap)
    history.best_epoch = best_epoch
    history.best_val_accuracy = best_acc
    return model, history


def _accuracy(model: ClcnnModel, x: np.ndarray, labels: np.ndarray,
              batch: int = 512) -> float:
    correct = 0
    for lo in range(0, len(x), batch):
        pred = model.logits(x[lo:lo + batch]).argmax(axis=1)
        correct += int((pred == labels[lo:lo + batch]).sum())
    return correct / len(x)


def evaluate_whole(model: ClcnnModel, table: EmbeddingTable,
                   samples: list[EncodedSample],
                   batch: int = 512) -> tuple[float, np.ndarray]:
    """Accuracy and confusion matrix (rows true, columns predicted)."""
    idx, labels = _as_arrays(samples)
    emb = table.embedding_matrix()
    k = model.cfg.classes
    confusion = np.zeros((k, k), dtype=np.int64)
    for lo in range(0, len(idx), batch):
        pred = model.logits(emb[idx[lo:lo + batch]]).argmax(axis=1)
        for t, p in zip(labels[lo:lo + batch], pred):
            confusion[t, p] += 1
    accuracy = float(np.trace(confusion)) / len(idx)
    return accuracy, confusion


@dataclass
class WindowRecord:
    start: int
    probs: np.ndarray


def evaluate_sliding(model: ClcnnModel, table: EmbeddingTable, charset: Charset,
                     text: str, c: int | None = None,
                     batch: int = 512) -> tuple[int, np.ndarray, list[WindowRecord]]:
    """Label a document by averaging softmax over all stride-1 windows."""
    c = c if c is not None else model.cfg.window
    windows = crop_windows(text, charset, c, "slide_all")
    idx = np.stack(windows)
    emb = table.embedding_matrix()
    probs = []
    for lo in range(0, len(idx), batch):
        probs.append(ops.softmax(model.logits(emb[idx[lo:lo + batch]]), axis=1))
    probs = np.concatenate(probs)
    mean_probs = probs.mean(axis=0)
    records = [WindowRecord(i, probs[i]) for i in range(len(windows))]
    return int(mean_probs.argmax()), mean_probs, records
