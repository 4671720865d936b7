"""Variational character encoder: glyph autoencoder training and embeddings.

The encoder maps a 64x64 glyph to a diagonal-Gaussian latent (mu, sigma);
the decoder reconstructs through a sigmoid head. Training maximizes the
Bernoulli reconstruction log-likelihood minus beta times the KL to the
standard-normal prior. A deterministic-bottleneck variant (no sampling, no
KL) serves as the conventional autoencoder baseline.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import FormatError
from .glyphs import GLYPH_SIZE, Charset, GlyphDataset
from .nn import ops
from .nn.tensor import NumericalError, Tensor, no_grad

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 1

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


@dataclass(frozen=True)
class VceConfig:
    latent_dim: int = 10
    beta: float = 8.0
    lr: float = 1e-4
    batch: int = 64
    steps: int = 50_000
    seed: int = 0
    log_every: int = 100
    channels: tuple[int, int, int, int] = (32, 32, 64, 64)
    hidden: int = 256

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass(frozen=True)
class LatentCode:
    mu: np.ndarray     # (d',)
    sigma: np.ndarray  # (d',), strictly positive


def _dedupe(xs: list[int]) -> list[int]:
    out = [xs[0]]
    for x in xs[1:]:
        if x != out[-1]:
            out.append(x)
    return out


def _build_encoder(cfg: VceConfig, rng, dtype, head_out: int) -> nn.Sequential:
    c = cfg.channels
    return nn.Sequential((GLYPH_SIZE, GLYPH_SIZE, 1), [
        nn.Conv2d("enc_conv1", 1, c[0], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Conv2d("enc_conv2", c[0], c[1], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Conv2d("enc_conv3", c[1], c[2], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Conv2d("enc_conv4", c[2], c[3], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Flatten(),
        nn.Linear("enc_fc1", c[3] * 4 * 4, cfg.hidden, rng, dtype), nn.ReLU(),
        nn.Linear("enc_head", cfg.hidden, head_out, rng, dtype),
    ])


def _build_decoder(cfg: VceConfig, rng, dtype) -> nn.Sequential:
    c = cfg.channels
    return nn.Sequential((cfg.latent_dim,), [
        nn.Linear("dec_fc1", cfg.latent_dim, cfg.hidden, rng, dtype), nn.ReLU(),
        nn.Linear("dec_fc2", cfg.hidden, c[3] * 4 * 4, rng, dtype), nn.ReLU(),
        nn.Reshape("dec_reshape", (4, 4, c[3])),
        nn.Deconv2d("dec_deconv1", c[3], c[3], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Deconv2d("dec_deconv2", c[3], c[1], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Deconv2d("dec_deconv3", c[1], c[0], 4, 2, 1, rng, dtype), nn.ReLU(),
        nn.Deconv2d("dec_deconv4", c[0], 1, 4, 2, 1, rng, dtype), nn.Sigmoid(),
    ])


class VceModel:
    """Encoder/decoder pair with a variational (mu, log-variance) head."""

    kind = "vce"

    def __init__(self, cfg: VceConfig, rng: np.random.Generator = None,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.encoder = _build_encoder(cfg, rng, dtype, 2 * cfg.latent_dim)
        self.decoder = _build_decoder(cfg, rng, dtype)
        self.store = nn.ParamStore(self.encoder.params() + self.decoder.params())

    # shape chains of the conv/deconv spatial sizes, for inspection and tests
    def encoder_spatial_chain(self) -> list[int]:
        return _dedupe([s[0] for s in self.encoder.shape_chain if len(s) == 3])

    def decoder_spatial_chain(self) -> list[int]:
        return _dedupe([s[0] for s in self.decoder.shape_chain if len(s) == 3])

    def encode_graph(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """(N,H,W,1) -> (mu, clamped log-variance), both (N, d')."""
        d = self.cfg.latent_dim
        out = self.encoder(x)
        mu = out[:, :d]
        logvar = out[:, d:].clip(LOGVAR_MIN, LOGVAR_MAX)
        return mu, logvar

    def encode_batch(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(N,64,64) -> (mu, sigma) arrays, no graph."""
        with no_grad():
            mu, logvar = self.encode_graph(Tensor(images[..., None]))
        return mu.data, np.exp(0.5 * logvar.data)

    def encode(self, image: np.ndarray) -> LatentCode:
        mu, sigma = self.encode_batch(image[None])
        return LatentCode(mu[0], sigma[0])

    def decode_batch(self, z: np.ndarray) -> np.ndarray:
        """(N,d') -> (N,64,64) reconstructions in (0,1), no graph."""
        with no_grad():
            out = self.decoder(Tensor(np.asarray(z, dtype=np.float32)))
        return out.data[..., 0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.decode_batch(np.asarray(z)[None])[0]

    def save(self, path, meta: dict) -> None:
        meta = dict(meta, kind=self.kind, latent_dim=self.cfg.latent_dim,
                    channels=list(self.cfg.channels), hidden=self.cfg.hidden)
        nn.save_weights(path, {n: p.data for n, p in self.store.params.items()}, meta)

    @classmethod
    def load(cls, path) -> tuple["VceModel", dict]:
        tensors, meta = nn.load_weights(path)
        cfg = VceConfig(latent_dim=meta["latent_dim"], channels=tuple(meta["channels"]),
                        hidden=meta["hidden"])
        model = cls(cfg)
        model.store.restore(tensors)
        return model, meta


class CaeModel(VceModel):
    """Deterministic-bottleneck baseline: one linear to d', no sampling head."""

    kind = "cae"

    def __init__(self, cfg: VceConfig, rng: np.random.Generator = None,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.encoder = _build_encoder(cfg, rng, dtype, cfg.latent_dim)
        self.decoder = _build_decoder(cfg, rng, dtype)
        self.store = nn.ParamStore(self.encoder.params() + self.decoder.params())

    def encode_graph(self, x: Tensor) -> Tensor:
        return self.encoder(x)

    def encode_batch(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        with no_grad():
            code = self.encode_graph(Tensor(images[..., None]))
        return code.data, np.zeros_like(code.data)

    @classmethod
    def load(cls, path) -> tuple["CaeModel", dict]:
        tensors, meta = nn.load_weights(path)
        cfg = VceConfig(latent_dim=meta["latent_dim"], channels=tuple(meta["channels"]),
                        hidden=meta["hidden"])
        model = cls(cfg)
        model.store.restore(tensors)
        return model, meta


def load_model(path) -> tuple[VceModel, dict]:
    """Load either model kind from a WTS1 file, dispatching on metadata."""
    _, meta = nn.load_weights(path)
    cls = CaeModel if meta.get("kind") == "cae" else VceModel
    return cls.load(path)


def reparameterize(code: LatentCode, rng: np.random.Generator) -> np.ndarray:
    """Sample z = mu + alpha * sigma with alpha ~ N(0, I)."""
    alpha = rng.standard_normal(code.mu.shape)
    return code.mu + alpha * code.sigma


def gaussian_kl(mu: np.ndarray, sigma: np.ndarray) -> float:
    """Closed-form KL from N(mu, diag sigma^2) to the standard normal."""
    return float(0.5 * np.sum(mu ** 2 + sigma ** 2 - np.log(sigma ** 2) - 1.0))


def elbo_loss(x: np.ndarray, xhat: np.ndarray, code: LatentCode,
              beta: float) -> tuple[float, float, float]:
    """(total, reconstruction term, KL term) for one sample; total = recon - beta*kl."""
    xh = np.clip(xhat, 1e-6, 1.0 - 1e-6)
    recon = float(np.sum(x * np.log(xh) + (1.0 - x) * np.log1p(-xh)))
    kl = gaussian_kl(code.mu, code.sigma)
    return recon - beta * kl, recon, kl


def _elbo_graph(x: np.ndarray, mu: Tensor, logvar: Tensor, xhat: Tensor,
                beta: float) -> tuple[Tensor, float, float, np.ndarray]:
    """Batch-mean negative ELBO as a graph node, plus logging scalars."""
    n = x.shape[0]
    recon = ops.bernoulli_log_likelihood(xhat, x)
    kl_terms = 0.5 * (mu * mu + logvar.exp() - logvar - 1.0)
    kl = kl_terms.sum()
    loss = (kl * beta - recon) / n
    kl_per_dim = kl_terms.data.mean(axis=0) if kl_terms.data.ndim == 2 else kl_terms.data
    return loss, float(recon.data) / n, float(kl.data) / n, kl_per_dim


@dataclass
class TrainLogRow:
    step: int
    total: float
    recon: float
    kl: float
    kl_per_dim: list[float]


def _iterate_batches(n: int, batch: int, steps: int, rng: np.random.Generator):
    """Shuffled minibatch index stream covering `steps` batches."""
    produced = 0
    while produced < steps:
        perm = rng.permutation(n)
        for lo in range(0, n, batch):
            if produced >= steps:
                return
            yield perm[lo:lo + batch]
            produced += 1


def train_vce(dataset: GlyphDataset, cfg: VceConfig,
              progress=None) -> tuple[VceModel, list[TrainLogRow]]:
    """Train the variational model; returns the best-ELBO checkpoint and log.

    Deterministic for a fixed config: one seeded generator drives init,
    shuffling, and sampling noise in a fixed order.
    """
    rng = np.random.default_rng(cfg.seed)
    model = VceModel(cfg, rng)
    return _train(model, dataset, cfg, rng, variational=True, progress=progress)


def train_cae(dataset: GlyphDataset, cfg: VceConfig,
              progress=None) -> tuple[CaeModel, list[TrainLogRow]]:
    """Train the deterministic baseline; log rows carry only the BCE term."""
    rng = np.random.default_rng(cfg.seed)
    model = CaeModel(cfg, rng)
    return _train(model, dataset, cfg, rng, variational=False, progress=progress)


def _train(model, dataset, cfg, rng, variational, progress):
    data = dataset.images.astype(np.float32)[..., None]
    n = data.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")

    rows: list[TrainLogRow] = []
    win_total: list[float] = []
    win_recon: list[float] = []
    win_kl: list[float] = []
    win_kld: list[np.ndarray] = []
    best_elbo = -np.inf
    best_snap = model.store.snapshot()

    for step, idx in enumerate(_iterate_batches(n, cfg.batch, cfg.steps, rng), start=1):
        x = data[idx]
        model.store.zero_grad()
        if variational:
            mu, logvar = model.encode_graph(Tensor(x))
            alpha = rng.standard_normal(mu.shape).astype(np.float32)
            z = mu + Tensor(alpha) * (logvar * 0.5).exp()
            xhat = model.decoder(z)
            loss, recon, kl, kl_per_dim = _elbo_graph(x, mu, logvar, xhat, cfg.beta)
            total = recon - cfg.beta * kl
        else:
            code = model.encode_graph(Tensor(x))
            xhat = model.decoder(code)
            recon_t = ops.bernoulli_log_likelihood(xhat, x)
            loss = -recon_t / x.shape[0]
            recon = float(recon_t.data) / x.shape[0]
            kl, kl_per_dim = 0.0, np.zeros(cfg.latent_dim)
            total = recon

        if not np.isfinite(loss.data):
            norms = model.store.param_norms()
            worst = sorted(norms.items(), key=lambda kv: -kv[1])[:5]
            raise NumericalError(f"non-finite loss at step {step}; "
                                 f"largest parameter norms: {worst}")
        loss.backward()
        nn.adam_step(model.store, cfg.lr, weight_decay=0.0)

        win_total.append(total)
        win_recon.append(recon)
        win_kl.append(kl)
        win_kld.append(np.asarray(kl_per_dim))
        if step % cfg.log_every == 0 or step == cfg.steps:
            mean_elbo = float(np.mean(win_total))
            rows.append(TrainLogRow(step, mean_elbo, float(np.mean(win_recon)),
                                    float(np.mean(win_kl)),
                                    [float(v) for v in np.mean(win_kld, axis=0)]))
            if mean_elbo > best_elbo:
                best_elbo = mean_elbo
                best_snap = model.store.snapshot()
            win_total.clear(); win_recon.clear(); win_kl.clear(); win_kld.clear()
            if progress:
                progress(rows[-1])

    model.store.restore(best_snap)
    return model, rows


def write_train_log(path, rows: list[TrainLogRow], variational: bool = True) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        if variational:
            d = len(rows[0].kl_per_dim) if rows else 0
            cols = ",".join(f"kl_dim_{i}" for i in range(d))
            f.write(f"step,total,recon,kl,{cols}\n")
            for r in rows:
                dims = ",".join(f"{v:.6f}" for v in r.kl_per_dim)
                f.write(f"{r.step},{r.total:.6f},{r.recon:.6f},{r.kl:.6f},{dims}\n")
        else:
            f.write("step,bce\n")
            for r in rows:
                f.write(f"{r.step},{-r.recon:.6f}\n")


# -- embedding table ---------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Per-character latent Gaussian parameters, aligned with the charset."""

    charset: Charset
    mu: np.ndarray     # (N, d') float32
    sigma: np.ndarray  # (N, d') float32
    charset_hash: str = field(default="")

    def __post_init__(self):
        if not self.charset_hash:
            self.charset_hash = self.charset.hash_hex()

    @property
    def latent_dim(self) -> int:
        return self.mu.shape[1]

    def lookup(self, ch: str) -> np.ndarray:
        return self.mu[self.charset.index_of(ch)]

    def embedding_matrix(self) -> np.ndarray:
        """(N+1, d') lookup matrix; the final row is the all-zero pad vector."""
        return np.vstack([self.mu, np.zeros((1, self.latent_dim), dtype=self.mu.dtype)])

    def active_dims(self, threshold: float = 0.1) -> list[int]:
        """Dimensions whose mean per-character KL exceeds the threshold (nats)."""
        kl = 0.5 * (self.mu ** 2 + self.sigma ** 2
                    - np.log(np.maximum(self.sigma ** 2, 1e-12)) - 1.0)
        return [int(i) for i in np.nonzero(kl.mean(axis=0) > threshold)[0]]

    def mean_kl(self) -> float:
        """Mean over characters of the total closed-form KL."""
        kl = 0.5 * (self.mu ** 2 + self.sigma ** 2
                    - np.log(np.maximum(self.sigma ** 2, 1e-12)) - 1.0)
        return float(kl.sum(axis=1).mean())


def export_embeddings(model: VceModel, dataset: GlyphDataset,
                      batch: int = 256) -> EmbeddingTable:
    """Encode every charset glyph; downstream lookups use mu only."""
    mus, sigmas = [], []
    for lo in range(0, len(dataset.charset), batch):
        mu, sigma = model.encode_batch(dataset.images[lo:lo + batch])
        mus.append(mu)
        sigmas.append(sigma)
    return EmbeddingTable(dataset.charset,
                          np.concatenate(mus).astype(np.float32),
                          np.concatenate(sigmas).astype(np.float32))


def save_table(table: EmbeddingTable, path) -> None:
    path = Path(path)
    d = table.latent_dim
    with open(path, "wb") as f:
        f.write(EMB1_MAGIC)
        f.write(struct.pack("<HHI", EMB1_VERSION, d, len(table.charset)))
        f.write(table.charset.hash_bytes())
        for i, cp in enumerate(table.charset.entries):
            f.write(struct.pack("<I", cp))
            f.write(table.mu[i].astype("<f4").tobytes())
            f.write(table.sigma[i].astype("<f4").tobytes())


def load_table(path) -> EmbeddingTable:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != EMB1_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {EMB1_MAGIC!r}")
    if len(raw) < 44:
        raise FormatError(f"{path}: truncated header")
    version, d, count = struct.unpack_from("<HHI", raw, 4)
    if version != EMB1_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    hash_bytes = raw[12:44]
    rec = 4 + 8 * d
    if len(raw) != 44 + count * rec:
        raise FormatError(f"{path}: expected {count} entries, file size mismatch")
    cps = np.empty(count, dtype=np.int64)
    mu = np.empty((count, d), dtype=np.float32)
    sigma = np.empty((count, d), dtype=np.float32)
    off = 44
    for i in range(count):
        (cps[i],) = struct.unpack_from("<I", raw, off)
        mu[i] = np.frombuffer(raw[off + 4:off + 4 + 4 * d], dtype="<f4")
        sigma[i] = np.frombuffer(raw[off + 4 + 4 * d:off + rec], dtype="<f4")
        off += rec
    charset = Charset(tuple(int(c) for c in cps))
    table = EmbeddingTable(charset, mu, sigma, charset_hash=hash_bytes.hex())
    if charset.hash_bytes() != hash_bytes:
        raise FormatError(f"{path}: stored charset hash does not match entries")
    return table


def table_file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- traversal ---------------------------------------------------------------


class UnknownCharacterError(KeyError):
    def __init__(self, ch: str, hints: list[str]):
        super().__init__(f"'{ch}' (U+{ord(ch):04X}) is not in the charset; "
                         f"nearest codepoints: {', '.join(hints)}")
        self.hints = hints


def traverse(model: VceModel, table: EmbeddingTable, char: str, dim: int,
             lo: float, hi: float, steps: int) -> np.ndarray:
    """Decode mu(char) with one dimension offset over [lo, hi].

    Returns (steps, 64, 64). With lo = -hi and an odd step count the center
    image is the plain reconstruction.
    """
    if char not in table.charset:
        raise UnknownCharacterError(char, table.charset.nearest_codepoints(char))
    if not (0 <= dim < table.latent_dim):
        raise ValueError(f"dim must be in [0, {table.latent_dim})")
    mu = table.lookup(char)
    offsets = np.linspace(lo, hi, steps)
    zs = np.tile(mu, (steps, 1))
    zs[:, dim] = mu[dim] + offsets
    return model.decode_batch(zs)
