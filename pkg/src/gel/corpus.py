"""Livedoor-layout news corpus: loading, deterministic splits, encoding.

Expected directory layout: one subdirectory per category holding UTF-8
text files whose first three lines are URL, timestamp, and title, with the
body on the remaining lines. LICENSE files are skipped. Categories double
as labels, indexed by sorted directory name.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .glyphs import Charset

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 80


@dataclass(frozen=True)
class Document:
    label: int
    category: str
    title: str
    body: str
    source: str  # path relative to the corpus root


@dataclass(frozen=True)
class EncodedSample:
    indices: np.ndarray  # (c,) int32 charset indices; pad only as a suffix
    label: int


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train: float = 0.72
    val: float = 0.08
    eval: float = 0.20

    def __post_init__(self):
        if abs(self.train + self.val + self.eval - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


@dataclass
class CorpusReport:
    total: int
    per_category: dict[str, int]
    skipped: int


def load_livedoor(root) -> tuple[list[Document], CorpusReport]:
    """Load all documents; malformed files are skipped with a warning."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root '{root}' does not exist")
    categories = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not categories:
        raise DataError(f"corpus root '{root}' contains no category directories")

    docs: list[Document] = []
    per_category: dict[str, int] = {}
    skipped = 0
    for label, cat in enumerate(categories):
        count = 0
        for f in sorted((root / cat).glob("*.txt")):
            if f.name.upper().startswith("LICENSE"):
                continue
            lines = f.read_text(encoding="utf-8").split("\n")
            if len(lines) < 3 or not lines[2].strip():
                log.warning("skipping malformed file %s", f)
                skipped += 1
                continue
            docs.append(Document(label=label, category=cat,
                                 title=lines[2].strip(),
                                 body="\n".join(lines[3:]).strip(),
                                 source=str(f.relative_to(root))))
            count += 1
        per_category[cat] = count
    if not docs:
        raise DataError(f"corpus root '{root}' holds no documents")
    return docs, CorpusReport(len(docs), per_category, skipped)


def encode_text(text: str, charset: Charset, c: int) -> np.ndarray:
    """Map characters to charset indices, truncate to c, right-pad."""
    idx = np.full(c, charset.pad_index, dtype=np.int32)
    for i, ch in enumerate(text[:c]):
        idx[i] = charset.index_of(ch)
    return idx


def encode_title(doc: Document, charset: Charset, c: int = DEFAULT_WINDOW) -> EncodedSample:
    return EncodedSample(encode_text(doc.title, charset, c), doc.label)


def crop_windows(body: str, charset: Charset, c: int, mode: str,
                 rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Length-c index windows over a body.

    random_crop: one uniformly positioned window (requires rng).
    slide_all: every window at stride 1; short bodies yield one padded window.
    """
    if mode == "random_crop":
        if rng is None:
            raise ValueError("random_crop requires an rng")
        if len(body) <= c:
            return [encode_text(body, charset, c)]
        start = int(rng.integers(0, len(body) - c + 1))
        return [encode_text(body[start:start + c], charset, c)]
    if mode == "slide_all":
        if len(body) <= c:
            return [encode_text(body, charset, c)]
        return [encode_text(body[i:i + c], charset, c)
                for i in range(len(body) - c + 1)]
    raise ValueError(f"unknown crop mode '{mode}'")


def split(docs: list[Document], spec: SplitSpec) -> dict[str, list[int]]:
    """Stratified, seed-deterministic train/val/eval document indices.

    Per category the eval share is rounded to the nearest document, the val
    share likewise, and the remainder trains.
    """
    rng = np.random.default_rng(spec.seed)
    by_cat: dict[int, list[int]] = {}
    for i, d in enumerate(docs):
        by_cat.setdefault(d.label, []).append(i)

    out = {"train": [], "val": [], "eval": []}
    for label in sorted(by_cat):
        idx = np.array(by_cat[label])
        if len(idx) < 5:
            raise DataError(f"category label {label} has only {len(idx)} documents; "
                            "cannot stratify")
        perm = rng.permutation(len(idx))
        n_eval = round(spec.eval * len(idx))
        n_val = round(spec.val * len(idx))
        out["eval"].extend(int(i) for i in idx[perm[:n_eval]])
        out["val"].extend(int(i) for i in idx[perm[n_eval:n_eval + n_val]])
        out["train"].extend(int(i) for i in idx[perm[n_eval + n_val:]])
    for k in out:
        out[k].sort()
    return out


def split_manifest(docs: list[Document], spec: SplitSpec,
                   splits: dict[str, list[int]]) -> dict:
    """Replayable record of the split: seed, fractions, per-split document IDs."""
    return {
        "seed": spec.seed,
        "fractions": {"train": spec.train, "val": spec.val, "eval": spec.eval},
        "splits": {k: [docs[i].source for i in v] for k, v in splits.items()},
    }


def save_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def apply_manifest(docs: list[Document], manifest: dict) -> dict[str, list[int]]:
    """Resolve a saved manifest back to index lists over freshly loaded docs."""
    by_source = {d.source: i for i, d in enumerate(docs)}
    out = {}
    for name, sources in manifest["splits"].items():
        try:
            out[name] = [by_source[s] for s in sources]
        except KeyError as e:
            raise DataError(f"manifest references unknown document {e}") from None
    return out
