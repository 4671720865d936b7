"""Acceptance suite: one test per criterion, each printing a pass/fail line
(see the acceptance-criteria table at the end of the pytest run).

Thresholds marked "pilot" were frozen from a seeded pilot run of the same
configuration on this implementation (scripts/pilot.py); they carry wide
margins over the observed values.

Criteria needing the livedoor corpus or a Japanese font skip with precise
instructions when those user-supplied inputs are absent: the corpus is not
redistributable and no CJK font ships with this repository.
"""

import io
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from gel import nn
from gel.augment import SsaConfig, WtConfig, ssa, wildcard
from gel.clcnn import ClcnnConfig, ClcnnModel, evaluate_sliding, train_classifier
from gel.corpus import SplitSpec, apply_manifest, crop_windows, load_livedoor, split, split_manifest
from gel.glyphs import build_default_charset, load_dataset, rasterize
from gel.nn import Tensor, grad_check, ops, parameter
from gel.service import ServiceState, create_app
from gel.vce import (EmbeddingTable, VceConfig, VceModel, export_embeddings,
                     gaussian_kl, load_table, save_table, train_vce)
from gel.cli import main as cli_main

from conftest import ascii_charset, livedoor_root, make_fake_livedoor

RNG = np.random.default_rng(20240801)

# pilot-frozen bounds (scripts/pilot.py, seed 0, DejaVu 200-char subset):
# observed bce/pixel 0.0317, all 10 dims active, |mu mean| <= 0.081,
# mu std in [0.92, 1.14], wall 12.3 min
PILOT_BCE_PER_PIXEL_MAX = 0.045
DESK_SCALE_STEPS = 5000
DESK_SCALE_SECONDS_MAX = 15 * 60
BETA_SWEEP_STEPS = 1500

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def _render_subset(font, n=200):
    cs = ascii_charset(n)
    return rasterize(cs, font)


@pytest.fixture(scope="module")
def glyphs200(system_font):
    """200 rendered glyphs; a user-supplied font (GEL_FONT) takes priority."""
    font = os.environ.get("GEL_FONT", str(system_font))
    return _render_subset(font)


# -- criterion 1: gradient oracle ---------------------------------------------

def test_criterion1_gradient_oracle():
    """Every op and both down-scaled nets vs central differences, float64."""
    t0 = time.time()
    rng = np.random.default_rng(11)

    def proj(t, r):
        return (t * Tensor(np.asarray(r, dtype=t.dtype))).sum()

    worst_ops = {}

    x = parameter(rng.normal(size=(1, 6, 6, 2)))
    w = parameter(rng.normal(size=(4, 4, 2, 3)) * 0.5)
    b = parameter(rng.normal(size=3) * 0.1)
    r = rng.normal(size=(1, 3, 3, 3))
    rep = grad_check(lambda: proj(ops.conv2d(x, w, b, 2, 1), r),
                     [("x", x), ("w", w), ("b", b)])
    worst_ops["conv2d"] = max(rep.values())

    xd = parameter(rng.normal(size=(1, 3, 3, 4)))
    wd = parameter(rng.normal(size=(4, 4, 2, 4)) * 0.5)
    bd = parameter(rng.normal(size=2) * 0.1)
    rd = rng.normal(size=(1, 6, 6, 2))
    rep = grad_check(lambda: proj(ops.deconv2d(xd, wd, bd, 2, 1), rd),
                     [("x", xd), ("w", wd), ("b", bd)])
    worst_ops["deconv2d"] = max(rep.values())

    x1 = parameter(rng.normal(size=(2, 9, 3)))
    w1 = parameter(rng.normal(size=(3, 3, 4)) * 0.5)
    b1 = parameter(rng.normal(size=4) * 0.1)
    r1 = rng.normal(size=(2, 7, 4))
    rep = grad_check(lambda: proj(ops.conv1d(x1, w1, b1), r1),
                     [("x", x1), ("w", w1), ("b", b1)])
    worst_ops["conv1d"] = max(rep.values())

    xp = parameter(rng.permutation(2 * 12 * 2).astype(np.float64).reshape(2, 12, 2))
    rp = rng.normal(size=(2, 4, 2))
    rep = grad_check(lambda: proj(ops.maxpool1d(xp, 3, 3), rp), [("x", xp)])
    worst_ops["maxpool1d"] = max(rep.values())

    xl = parameter(rng.normal(size=(4, 5)))
    wl = parameter(rng.normal(size=(5, 3)) * 0.5)
    bl = parameter(rng.normal(size=3) * 0.1)
    rl = rng.normal(size=(4, 3))
    rep = grad_check(lambda: proj(ops.linear(xl, wl, bl), rl),
                     [("x", xl), ("w", wl), ("b", bl)])
    worst_ops["linear"] = max(rep.values())

    # relu probed away from the kink at 0 (subgradient point excluded)
    xr = parameter(np.where(np.abs(v := rng.normal(size=(3, 7))) < 1e-3,
                            v + 0.1, v))
    rr = rng.normal(size=(3, 7))
    rep = grad_check(lambda: proj(xr.relu(), rr), [("x", xr)])
    worst_ops["relu"] = max(rep.values())

    xs = parameter(rng.normal(size=(3, 7)))
    rep = grad_check(lambda: proj(xs.sigmoid(), rr), [("x", xs)])
    worst_ops["sigmoid"] = max(rep.values())

    target = (rng.random((2, 4, 4, 1)) < 0.4).astype(np.float64)
    xb = parameter(rng.normal(size=(2, 4, 4, 1)))
    rep = grad_check(lambda: ops.bernoulli_log_likelihood(xb.sigmoid(), target),
                     [("x", xb)])
    worst_ops["bernoulli_ll"] = max(rep.values())

    zc = parameter(rng.normal(size=(5, 3)))
    labels = rng.integers(0, 3, size=5)
    rep = grad_check(lambda: ops.softmax_cross_entropy(zc, labels), [("z", zc)])
    worst_ops["softmax_ce"] = max(rep.values())

    assert max(worst_ops.values()) < 1e-5, worst_ops

    # full down-scaled variational net through the ELBO
    vcfg = VceConfig(latent_dim=3, channels=(2, 2, 3, 3), hidden=12)
    vmodel = VceModel(vcfg, np.random.default_rng(1), dtype=np.float64)
    xv = (rng.random((2, 64, 64, 1)) < 0.3).astype(np.float64)
    alpha = rng.standard_normal((2, 3))

    def vce_loss():
        mu, logvar = vmodel.encode_graph(Tensor(xv))
        z = mu + Tensor(alpha) * (logvar * 0.5).exp()
        xhat = vmodel.decoder(z)
        recon = ops.bernoulli_log_likelihood(xhat, xv)
        kl = (0.5 * (mu * mu + logvar.exp() - logvar - 1.0)).sum()
        return (kl * vcfg.beta - recon) / 2.0

    # subgradient points (relu kinks crossed by the probe) are excluded,
    # as the op contract specifies; the exclusion is capped at 2%
    vrep = grad_check(vce_loss, list(vmodel.store.params.items()),
                      exclude_nonsmooth=True)
    assert max(vrep.values()) < 1e-4, vrep

    # full down-scaled classifier through the cross-entropy
    ccfg = ClcnnConfig(window=60, classes=3, channels=8)
    cmodel = ClcnnModel(ccfg, latent_dim=3, rng=np.random.default_rng(2),
                        dtype=np.float64)
    xc = rng.normal(size=(2, 60, 3))
    yc = np.array([0, 2])

    def clf_loss():
        return ops.softmax_cross_entropy(cmodel.forward_graph(Tensor(xc)), yc)

    crep = grad_check(clf_loss, list(cmodel.store.params.items()),
                      exclude_nonsmooth=True)
    assert max(crep.values()) < 1e-4, crep

    elapsed = time.time() - t0
    assert elapsed < 120, f"gradient suite took {elapsed:.0f}s (budget 120s)"


# -- criterion 2: shape oracle --------------------------------------------------

def test_criterion2_shape_oracle():
    model = VceModel(VceConfig())
    assert model.encoder_spatial_chain() == [64, 32, 16, 8, 4]
    assert model.decoder_spatial_chain() == [4, 8, 16, 32, 64]

    m128 = ClcnnModel(ClcnnConfig(window=128, channels=512), latent_dim=10)
    assert m128.length_chain() == [128, 126, 126, 42, 40, 40, 13, 11, 11, 9, 9]
    assert m128.stack.output_shape == (4608,)

    m80 = ClcnnModel(ClcnnConfig(window=80, channels=512), latent_dim=10)
    assert m80.length_chain() == [80, 78, 78, 26, 24, 24, 8, 6, 6, 4, 4]
    assert m80.stack.output_shape == (2048,)


# -- criterion 3: KL correctness -------------------------------------------------

def test_criterion3_kl_correctness():
    assert gaussian_kl(np.zeros(10), np.ones(10)) == 0.0

    rng = np.random.default_rng(77)
    for _ in range(100):
        mu = rng.uniform(-2, 2, size=10)
        sigma = np.exp(rng.uniform(-0.5, 0.5, size=10))
        z = mu + rng.standard_normal((100_000, 10)) * sigma
        log_q = -0.5 * (((z - mu) / sigma) ** 2 + np.log(2 * np.pi * sigma ** 2))
        log_p = -0.5 * (z ** 2 + np.log(2 * np.pi))
        mc = float((log_q - log_p).sum(axis=1).mean())
        closed = gaussian_kl(mu, sigma)
        assert abs(mc - closed) / closed < 0.01, (mc, closed)


# -- criterion 4: SSA contract ----------------------------------------------------

def test_criterion4_ssa_contract():
    rng = np.random.default_rng(4)
    batch = rng.normal(size=(32, 9, 10)).astype(np.float32)

    out0 = ssa(batch, SsaConfig(gamma=0.0), np.random.default_rng(1))
    assert out0.tobytes() == batch.tobytes()

    gamma = 2.0
    out = ssa(batch, SsaConfig(gamma=gamma), np.random.default_rng(2))
    diff = out - batch
    assert (diff != 0).sum(axis=2).max() <= 1
    assert np.abs(diff).max() <= gamma

    n = 100_000
    zeros = np.zeros((n, 1, 10))
    drawn = ssa(zeros, SsaConfig(gamma=gamma), np.random.default_rng(3))[:, 0, :]
    us = drawn[drawn != 0]
    dims = drawn.nonzero()[1]
    assert len(us) >= n - 5
    ks = stats.kstest(us, stats.uniform(loc=-gamma, scale=2 * gamma).cdf)
    assert ks.pvalue > 0.01, ks
    chi2 = stats.chisquare(np.bincount(dims, minlength=10))
    assert chi2.pvalue > 0.01, chi2


# -- criterion 5: desk-scale training (pilot-frozen thresholds) -------------------

@pytest.mark.slow
def test_criterion5_desk_scale_training(glyphs200):
    cfg = VceConfig(beta=8.0, steps=DESK_SCALE_STEPS, seed=0)
    t0 = time.time()
    model, rows = train_vce(glyphs200, cfg)
    elapsed = time.time() - t0
    assert elapsed < DESK_SCALE_SECONDS_MAX, f"{elapsed:.0f}s"

    images = glyphs200.images
    xhat = np.concatenate([model.decode_batch(model.encode_batch(b)[0])
                           for b in np.array_split(images, 4)])
    xh = np.clip(xhat, 1e-6, 1 - 1e-6)
    bce = float(-(images * np.log(xh) + (1 - images) * np.log1p(-xh)).mean())
    assert bce < PILOT_BCE_PER_PIXEL_MAX, bce

    table = export_embeddings(model, glyphs200)
    active = table.active_dims(0.1)
    assert len(active) >= 2, active
    for d in active:
        assert abs(float(table.mu[:, d].mean())) <= 0.3
        assert 0.2 <= float(table.mu[:, d].std()) <= 1.5

    # stash for criterion 10 (service over a really trained model)
    test_criterion5_desk_scale_training.artifacts = (model, table)


# -- criterion 6: beta monotonicity ------------------------------------------------

@pytest.mark.slow
def test_criterion6_beta_monotonicity(glyphs200):
    kls = []
    for beta in (1.0, 4.0, 8.0, 16.0):
        model, _ = train_vce(glyphs200, VceConfig(beta=beta,
                                                  steps=BETA_SWEEP_STEPS, seed=0))
        table = export_embeddings(model, glyphs200)
        kls.append(table.mean_kl())
    for a, b in zip(kls, kls[1:]):
        assert b <= a * 1.0 + 1e-9, kls


# -- criterion 7: livedoor reproduction + sliding-window properties -----------------

def test_criterion7a_sliding_window_properties():
    cs = ascii_charset(60)
    rng = np.random.default_rng(0)
    mu = rng.normal(size=(len(cs), 6)).astype(np.float32)
    table_small = EmbeddingTable(cs, mu, np.ones_like(mu))
    model = ClcnnModel(ClcnnConfig(window=128, classes=4, channels=8), latent_dim=6)

    label, probs, records = evaluate_sliding(model, table_small, cs, "a" * 130)
    assert len(records) == 3  # 130 - 128 + 1

    # unanimity: every window agreeing forces the aggregate
    votes = [int(r.probs.argmax()) for r in records]
    if len(set(votes)) == 1:
        assert label == votes[0]
    # and a short document yields exactly one window
    _, _, one = evaluate_sliding(model, table_small, cs, "short text")
    assert len(one) == 1


@pytest.mark.slow
def test_criterion7b_livedoor_reproduction():
    """Table-level reproduction: vanilla within +-5.0 of 67.16, SSA >= vanilla
    and within +-5.0 of 69.05, WT present. Needs the real corpus, a Japanese
    font, and hours of CPU; runs from a previously produced report."""
    report_path = Path(os.environ.get("GEL_DATA_DIR", ".")) / "livedoor_table4.json"
    if not report_path.exists():
        pytest.skip(
            "livedoor reproduction artifacts not found: place the livedoor "
            "corpus (LIVEDOOR_ROOT), a JIS-coverage font (GEL_FONT), and run "
            "scripts/reproduce_livedoor.py to produce "
            f"{report_path}; the corpus and font are not redistributable")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    vanilla = report["vanilla"]["mean_eval_accuracy"] * 100
    ssa_acc = report["ssa"]["mean_eval_accuracy"] * 100
    assert "wt" in report, "WT baseline missing from the report"
    assert abs(vanilla - 67.16) <= 5.0, vanilla
    assert ssa_acc >= vanilla - 1e-9, (ssa_acc, vanilla)
    assert abs(ssa_acc - 69.05) <= 5.0, ssa_acc


# -- criterion 8: determinism --------------------------------------------------------

@pytest.mark.slow
def test_criterion8_determinism(tmp_path, system_font):
    cfg = {
        "glyphset": {"font": str(system_font), "subset": 60},
        "vce": {"latent_dim": 4, "channels": [2, 2, 3, 3], "hidden": 16,
                "steps": 40, "batch": 16, "log_every": 20, "seed": 9},
        "clcnn": {"window": 80, "channels": 8, "batch": 16, "max_epochs": 2,
                  "patience": 2, "seed": 1},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    corpus = tmp_path / "corpus"
    make_fake_livedoor(corpus, {"ca": 10, "cb": 10})

    outputs = []
    for run in ("one", "two"):
        d = tmp_path / run
        assert cli_main(["render", "--config", str(cfg_path),
                         "--out", str(d / "g.gly")]) == 0
        assert cli_main(["train-vce", "--config", str(cfg_path),
                         "--data", str(d / "g.gly"), "--out", str(d)]) == 0
        assert cli_main(["export-emb", "--weights", str(d / "vce.wts"),
                         "--data", str(d / "g.gly"),
                         "--out", str(d / "t.emb")]) == 0
        assert cli_main(["train-clf", "--config", str(cfg_path),
                         "--table", str(d / "t.emb"), "--corpus", str(corpus),
                         "--out", str(d / "clf")]) == 0
        outputs.append({
            "gly": (d / "g.gly").read_bytes(),
            "wts": (d / "vce.wts").read_bytes(),
            "emb": (d / "t.emb").read_bytes(),
            "clf": (d / "clf" / "clf_seed1.wts").read_bytes(),
            "log": (d / "train_log.csv").read_bytes(),
            "report": json.loads((d / "clf" / "train_report.json").read_text()),
        })
    a, b = outputs
    for key in ("gly", "wts", "emb", "clf", "log"):
        assert a[key] == b[key], f"{key} differs between identical runs"
    assert a["report"] == b["report"]


# -- criterion 9: corpus --------------------------------------------------------------

def test_criterion9a_real_corpus_counts():
    root = livedoor_root()
    if root is None:
        pytest.skip("livedoor corpus not present (set LIVEDOOR_ROOT or put it "
                    "under $GEL_DATA_DIR); it is not redistributable")
    docs, report = load_livedoor(root)
    assert report.total == 7367, report.per_category
    assert report.per_category["movie-enter"] == 870
    assert report.per_category["sports-watch"] == 900
    parts = split(docs, SplitSpec(seed=0))
    n_eval = len(parts["eval"])
    assert abs(n_eval - round(0.2 * 7367)) <= 9


def test_criterion9b_split_properties(tmp_path):
    make_fake_livedoor(tmp_path, {"x": 25, "y": 40, "z": 35})
    docs, _ = load_livedoor(tmp_path)
    spec = SplitSpec(seed=3)
    parts = split(docs, spec)
    joined = sorted(parts["train"] + parts["val"] + parts["eval"])
    assert joined == list(range(len(docs)))  # disjoint and exhaustive
    for label, total in [(0, 25), (1, 40), (2, 35)]:
        n_eval = sum(1 for i in parts["eval"] if docs[i].label == label)
        assert n_eval == round(0.2 * total)  # stratified
    manifest = split_manifest(docs, spec, parts)
    assert apply_manifest(docs, manifest) == parts  # replayable


# -- criterion 10: service -------------------------------------------------------------

@pytest.mark.slow
def test_criterion10_service(glyphs200):
    from fastapi.testclient import TestClient

    artifacts = getattr(test_criterion5_desk_scale_training, "artifacts", None)
    if artifacts is None:
        # criterion 5 did not run first; train briefly so the service sees a
        # real full-width model (latency depends only on architecture)
        model, _ = train_vce(glyphs200, VceConfig(beta=8.0, steps=50, seed=0))
        table = export_embeddings(model, glyphs200)
    else:
        model, table = artifacts

    client = TestClient(create_app(ServiceState(model, table)))
    d = table.latent_dim

    # p95 decode latency on the full-size decoder
    z = {"z": [0.0] * d}
    client.post("/api/decode", json=z)  # warm
    times = []
    for _ in range(200):
        t0 = time.perf_counter()
        r = client.post("/api/decode", json=z)
        times.append((time.perf_counter() - t0) * 1000)
        assert r.status_code == 200
    times.sort()
    p95 = times[189]
    assert p95 < 50.0, f"decode p95 {p95:.1f} ms"

    # neighbors vs an independent exhaustive re-scan on 1,000 random queries;
    # the re-scan walks the table row by row at the service's float32 width
    rng = np.random.default_rng(10)
    for _ in range(1000):
        q = rng.uniform(-3, 3, size=d)
        got = client.post("/api/neighbors",
                          json={"z": [float(v) for v in q], "k": 5}).json()
        qf = np.clip(np.asarray(q, dtype=np.float32), -4, 4)
        d2 = [float(np.sum((table.mu[i] - qf) ** 2, dtype=np.float32))
              for i in range(len(table.mu))]
        order = sorted(range(len(d2)),
                       key=lambda i: (d2[i], table.charset.entries[i]))
        expect = [table.charset.entries[i] for i in order[:5]]
        assert [n["codepoint"] for n in got["neighbors"]] == expect

    # trivial/error cases
    ch = chr(table.charset.entries[0])
    assert client.get(f"/api/embedding/{ch}").status_code == 200
    assert client.get("/api/embedding/☃").status_code == 404
    assert client.post("/api/decode", json={"z": [0.0] * (d - 1)}).status_code == 400
    a = client.post("/api/decode", json=z).content
    b = client.post("/api/decode", json=z).content
    assert a == b
    assert client.post("/api/neighbors", json={"z": [0.0] * d, "k": 0}).json()[
        "neighbors"] == []
    assert client.post("/api/ssa_preview",
                       json={"char": ch, "dim": 0, "u": 9.0}).status_code == 400
    assert client.post("/api/classify", json={"text": "x"}).status_code == 503
    assert client.get("/api/chars", params={"query": "☃"}).json()["entries"] == []
