import os
import re
from pathlib import Path

import numpy as np
import pytest

from gel.glyphs import Charset, GlyphDataset, find_system_font


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail/skip line per acceptance criterion."""
    rows = {}
    for status in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(status, []):
            m = re.search(r"test_criterion(\d+)([a-z]?)", getattr(rep, "nodeid", ""))
            if m:
                key = (int(m.group(1)), m.group(2))
                rows[key] = status.upper()
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for (num, sub), status in sorted(rows.items()):
        terminalreporter.write_line(f"criterion {num}{sub}: {status}")


def ascii_charset(n: int = 200) -> Charset:
    """ASCII-heavy charset (plus the geta mark) renderable by DejaVu."""
    cps = list(range(0x21, 0x7F))                      # printable ASCII
    cps += list(range(0xC0, 0xC0 + max(0, n - 95)))    # Latin-1 letters
    cps = sorted(set(cps[:n - 1] + [0x3013]))
    return Charset(tuple(cps))


@pytest.fixture(scope="session")
def system_font() -> Path:
    font = find_system_font()
    if font is None:
        pytest.skip("no system TTF font available")
    return font


@pytest.fixture(scope="session")
def small_charset() -> Charset:
    return ascii_charset(40)


def synthetic_dataset(n: int = 60, seed: int = 0) -> GlyphDataset:
    """Random blob glyphs; enough structure for smoke-training."""
    cs = ascii_charset(n)
    rng = np.random.default_rng(seed)
    base = rng.random((len(cs), 8, 8)) < 0.3
    images = np.kron(base, np.ones((8, 8))).astype(np.float32)
    return GlyphDataset(cs, images, "synthetic")


def livedoor_root() -> Path | None:
    """Real corpus location, if the user provided one."""
    for env in ("LIVEDOOR_ROOT",):
        if os.environ.get(env) and Path(os.environ[env]).is_dir():
            return Path(os.environ[env])
    data_dir = os.environ.get("GEL_DATA_DIR")
    if data_dir:
        for sub in ("livedoor", "ldcc/text", "text"):
            p = Path(data_dir) / sub
            if p.is_dir():
                return p
    return None


def make_fake_livedoor(root: Path, per_cat: dict[str, int], seed: int = 0,
                       body_len: int = 200) -> None:
    """Tiny corpus in the livedoor directory layout for loader tests."""
    rng = np.random.default_rng(seed)
    letters = "abcdefghijklmnopqrstuvwxyz "
    for cat, n in per_cat.items():
        d = root / cat
        d.mkdir(parents=True, exist_ok=True)
        (d / "LICENSE.txt").write_text("license text\n", encoding="utf-8")
        for i in range(n):
            title = f"{cat} story {i} " + "".join(
                rng.choice(list(letters), size=12))
            body = "".join(rng.choice(list(letters), size=body_len))
            (d / f"{cat}-{i:04d}.txt").write_text(
                f"http://example.com/{cat}/{i}\n2013-01-01T00:00:00+0900\n"
                f"{title}\n{body}\n", encoding="utf-8")
