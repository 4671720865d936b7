"""Character inventory and glyph rasterization.

The default charset enumerates the JIS X 0208 grid (kanji levels 1 and 2,
hiragana, katakana) through Python's euc_jp codec plus printable ASCII and
the geta mark, which doubles as the unknown-character glyph. Rasterization
renders each codepoint with a user-supplied TTF/OTF into a 64x64 grayscale
cell, ink=1 on background=0.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

from .errors import DataError, FormatError

log = logging.getLogger(__name__)

UNKNOWN_CODEPOINT = 0x3013  # geta mark
GLYPH_SIZE = 64

GLY1_MAGIC = b"GLY1"
GLY1_VERSION = 1


@dataclass(frozen=True)
class Charset:
    """Ordered, deduplicated codepoint inventory.

    The pad sentinel is an index one past the last entry; it has no glyph
    and never appears in `entries`.
    """

    entries: tuple[int, ...]
    _index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        entries = tuple(self.entries)
        if list(entries) != sorted(set(entries)):
            raise ValueError("charset entries must be unique and sorted")
        if UNKNOWN_CODEPOINT not in entries:
            raise ValueError("charset must contain the geta mark (U+3013)")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_index", {cp: i for i, cp in enumerate(entries)})

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, ch: str) -> bool:
        return ord(ch) in self._index

    @property
    def unknown_index(self) -> int:
        return self._index[UNKNOWN_CODEPOINT]

    @property
    def pad_index(self) -> int:
        return len(self.entries)

    def index_of(self, ch: str) -> int:
        """Charset index for a character; unknown characters map to the geta mark."""
        return self._index.get(ord(ch), self.unknown_index)

    def hash_bytes(self) -> bytes:
        h = hashlib.sha256()
        h.update(np.asarray(self.entries, dtype="<u4").tobytes())
        return h.digest()

    def hash_hex(self) -> str:
        return self.hash_bytes().hex()

    def nearest_codepoints(self, ch: str, k: int = 3) -> list[str]:
        """Charset members numerically closest to a codepoint (for error hints)."""
        cp = ord(ch)
        order = sorted(self.entries, key=lambda e: (abs(e - cp), e))
        return [chr(e) for e in order[:k]]

    def subset_indices(self, n: int) -> list[int]:
        """First n entries, swapping the geta mark in if it would be lost."""
        idx = list(range(min(n, len(self.entries))))
        if self.unknown_index not in idx:
            idx[-1] = self.unknown_index
        return idx

    def subset(self, n: int) -> "Charset":
        return Charset(tuple(self.entries[i] for i in self.subset_indices(n)))


def _jis_row(row: int) -> list[int]:
    out = []
    for col in range(1, 95):
        try:
            ch = bytes([0xA0 + row, 0xA0 + col]).decode("euc_jp")
        except UnicodeDecodeError:
            continue
        out.append(ord(ch))
    return out


def build_default_charset() -> Charset:
    """Printable ASCII, hiragana, katakana, JIS level-1/2 kanji, geta mark."""
    cps: set[int] = set(range(0x21, 0x7F))
    cps.update(_jis_row(4))    # hiragana
    cps.update(_jis_row(5))    # katakana
    for row in range(16, 85):  # kanji, both levels
        cps.update(_jis_row(row))
    cps.add(UNKNOWN_CODEPOINT)
    return Charset(tuple(sorted(cps)))


@dataclass(frozen=True)
class GlyphImage:
    codepoint: int
    pixels: np.ndarray  # (64, 64) float32 in [0, 1]


@dataclass
class GlyphDataset:
    charset: Charset
    images: np.ndarray  # (N, 64, 64) float32, aligned with charset order
    font_id: str

    def __post_init__(self):
        if self.images.shape != (len(self.charset), GLYPH_SIZE, GLYPH_SIZE):
            raise ValueError(f"images shape {self.images.shape} does not match "
                             f"charset of {len(self.charset)} entries")

    def glyph(self, i: int) -> GlyphImage:
        return GlyphImage(self.charset.entries[i], self.images[i])

    def subset(self, n: int) -> "GlyphDataset":
        """First n charset entries, keeping the geta mark so the charset stays valid."""
        idx = self.charset.subset_indices(n)
        cps = tuple(self.charset.entries[i] for i in idx)
        return GlyphDataset(Charset(cps), self.images[idx].copy(), self.font_id)


@dataclass(frozen=True)
class RenderConfig:
    em_px: int = 56
    cell: int = GLYPH_SIZE
    min_coverage: float = 0.99


def _quantize(a: np.ndarray) -> np.ndarray:
    return (np.clip(a, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def _render_char(ch: str, font: ImageFont.FreeTypeFont, cfg: RenderConfig) -> np.ndarray:
    """Render one glyph, bbox-centered into the cell; returns u8 (cell, cell)."""
    pad = cfg.em_px
    canvas = Image.new("L", (cfg.cell + 2 * pad, cfg.cell + 2 * pad), 0)
    draw = ImageDraw.Draw(canvas)
    draw.text((pad, pad), ch, fill=255, font=font)
    arr = np.asarray(canvas)
    ys, xs = np.nonzero(arr)
    cell = np.zeros((cfg.cell, cfg.cell), dtype=np.uint8)
    if len(ys) == 0:
        return cell
    crop = Image.fromarray(arr[ys.min():ys.max() + 1, xs.min():xs.max() + 1])
    if crop.width > cfg.cell or crop.height > cfg.cell:
        scale = cfg.cell / max(crop.width, crop.height)
        crop = crop.resize((max(1, round(crop.width * scale)),
                            max(1, round(crop.height * scale))), Image.LANCZOS)
    sub = np.asarray(crop)
    y0 = (cfg.cell - sub.shape[0]) // 2
    x0 = (cfg.cell - sub.shape[1]) // 2
    cell[y0:y0 + sub.shape[0], x0:x0 + sub.shape[1]] = sub
    return cell


def _fallback_glyph(cfg: RenderConfig) -> np.ndarray:
    """Procedural two-bar placeholder used when the font lacks the geta mark."""
    cell = np.zeros((cfg.cell, cfg.cell), dtype=np.uint8)
    w = cfg.em_px
    x0 = (cfg.cell - w) // 2
    bar = cfg.em_px // 5
    y_top = (cfg.cell - 2 * bar - bar) // 2
    cell[y_top:y_top + bar, x0:x0 + w] = 255
    cell[y_top + 2 * bar:y_top + 3 * bar, x0:x0 + w] = 255
    return cell


def rasterize(charset: Charset, font_file, render_cfg: RenderConfig = RenderConfig()) -> GlyphDataset:
    """Render every charset entry with the given TTF/OTF font.

    Codepoints the font does not cover render as the geta-mark glyph (or a
    procedural placeholder when the font lacks the geta mark too) and are
    logged. Coverage below render_cfg.min_coverage is fatal.
    """
    if isinstance(font_file, (str, Path)):
        font_bytes = Path(font_file).read_bytes()
        font_name = Path(font_file).name
    else:
        font_bytes = font_file.read()
        font_name = "stream"
    try:
        tt = TTFont(io.BytesIO(font_bytes), fontNumber=0, lazy=True)
        cmap = set(tt.getBestCmap().keys())
        font = ImageFont.truetype(io.BytesIO(font_bytes), render_cfg.em_px)
    except Exception as e:
        raise DataError(f"font '{font_name}' unreadable: {e}") from e

    # the geta mark always renders (procedural placeholder), so it counts
    # as covered for the threshold
    covered = [cp for cp in charset.entries
               if cp in cmap or cp == UNKNOWN_CODEPOINT]
    coverage = len(covered) / len(charset)
    if coverage < render_cfg.min_coverage:
        missing = [cp for cp in charset.entries
                   if cp not in cmap and cp != UNKNOWN_CODEPOINT]
        shown = ", ".join(f"U+{cp:04X}" for cp in missing[:20])
        raise DataError(
            f"font '{font_name}' covers {coverage:.1%} of the charset "
            f"(minimum {render_cfg.min_coverage:.0%}); missing {len(missing)}: {shown}"
            + (", ..." if len(missing) > 20 else ""))

    if UNKNOWN_CODEPOINT in cmap:
        fallback = _render_char(chr(UNKNOWN_CODEPOINT), font, render_cfg)
    else:
        fallback = _fallback_glyph(render_cfg)
        log.warning("font '%s' lacks the geta mark; using procedural placeholder", font_name)

    images = np.zeros((len(charset), render_cfg.cell, render_cfg.cell), dtype=np.uint8)
    n_missing = 0
    for i, cp in enumerate(charset.entries):
        if cp in cmap:
            images[i] = _render_char(chr(cp), font, render_cfg)
        else:
            images[i] = fallback
            n_missing += 1
            log.info("U+%04X not in font; rendered geta-mark fallback", cp)
    if n_missing:
        log.warning("%d/%d glyphs fell back to the geta mark", n_missing, len(charset))

    font_id = f"{font_name}:{hashlib.sha256(font_bytes).hexdigest()[:16]}"
    return GlyphDataset(charset, images.astype(np.float32) / 255.0, font_id)


def save_dataset(ds: GlyphDataset, path) -> None:
    """Write GLY1 plus a JSON sidecar carrying provenance."""
    path = Path(path)
    w = h = GLYPH_SIZE
    with open(path, "wb") as f:
        f.write(GLY1_MAGIC)
        f.write(struct.pack("<HIHH", GLY1_VERSION, len(ds.charset), w, h))
        quant = _quantize(ds.images)
        for i, cp in enumerate(ds.charset.entries):
            f.write(struct.pack("<I", cp))
            f.write(quant[i].tobytes())
    meta = {
        "count": len(ds.charset),
        "font_id": ds.font_id,
        "charset_hash": ds.charset.hash_hex(),
    }
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def load_dataset(path) -> GlyphDataset:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != GLY1_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {GLY1_MAGIC!r}")
    if len(raw) < 14:
        raise FormatError(f"{path}: truncated header")
    version, count, w, h = struct.unpack_from("<HIHH", raw, 4)
    if version != GLY1_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    rec = 4 + w * h
    expect = 14 + count * rec
    if len(raw) != expect:
        raise FormatError(f"{path}: header promises {count} glyphs "
                          f"({expect} bytes) but file has {len(raw)}")
    cps = np.empty(count, dtype=np.int64)
    images = np.empty((count, h, w), dtype=np.uint8)
    off = 14
    for i in range(count):
        (cps[i],) = struct.unpack_from("<I", raw, off)
        images[i] = np.frombuffer(raw[off + 4:off + rec], dtype=np.uint8).reshape(h, w)
        off += rec

    side = Path(str(path) + ".json")
    font_id = "unknown"
    if side.exists():
        font_id = json.loads(side.read_text(encoding="utf-8")).get("font_id", "unknown")
    charset = Charset(tuple(int(c) for c in cps))
    return GlyphDataset(charset, images.astype(np.float32) / 255.0, font_id)


def find_system_font() -> Path | None:
    """Locate a usable default font (tests and quick starts); never bundled."""
    candidates = [
        Path("/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"),
        Path("/usr/share/fonts/truetype/dejavu/DejaVuSerif.ttf"),
    ]
    try:
        import matplotlib
        candidates.append(Path(matplotlib.get_data_path()) / "fonts/ttf/DejaVuSans.ttf")
    except ImportError:
        pass
    for c in candidates:
        if c.exists():
            return c
    return None
