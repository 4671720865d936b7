"""Pilot run: establishes the desk-scale training thresholds that the
acceptance suite freezes (reconstruction BCE bound, active-dim stats, and
the step budget at which the beta/KL monotonicity is stable).

Run from the repo root: python scripts/pilot.py
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import ascii_charset
from gel.glyphs import find_system_font, rasterize
from gel.vce import VceConfig, export_embeddings, train_cae, train_vce


def mean_bce_per_pixel(model, images):
    xhat = np.concatenate([model.decode_batch(model.encode_batch(b)[0])
                           for b in np.array_split(images, 4)])
    xh = np.clip(xhat, 1e-6, 1 - 1e-6)
    return float(-(images * np.log(xh) + (1 - images) * np.log1p(-xh)).mean())


def main():
    font = find_system_font()
    cs = ascii_charset(200)
    ds = rasterize(cs, font)
    print(f"rendered {len(ds.charset)} glyphs from {font}")

    results = {}

    # -- criterion 5 pilot: 200 chars, beta=8, 5000 steps ---------------------
    cfg = VceConfig(beta=8.0, steps=5000, seed=0)
    t0 = time.time()
    model, rows = train_vce(ds, cfg)
    minutes = (time.time() - t0) / 60
    table = export_embeddings(model, ds)
    bce = mean_bce_per_pixel(model, ds.images)
    active = table.active_dims(0.1)
    stats = {
        "minutes": round(minutes, 2),
        "bce_per_pixel": round(bce, 5),
        "active_dims": active,
        "mu_mean_active": [round(float(table.mu[:, d].mean()), 4) for d in active],
        "mu_std_active": [round(float(table.mu[:, d].std()), 4) for d in active],
        "mean_kl": round(table.mean_kl(), 4),
        "final_log": {"total": rows[-1].total, "recon": rows[-1].recon,
                      "kl": rows[-1].kl},
    }
    results["criterion5"] = stats
    print("criterion5:", json.dumps(stats, indent=2), flush=True)

    # -- CAE vs VCE at equal (shorter) steps -----------------------------------
    short = VceConfig(beta=8.0, steps=1200, seed=0)
    vce_s, _ = train_vce(ds, short)
    cae_s, _ = train_cae(ds, short)
    results["cae_vs_vce_1200"] = {
        "vce_bce": round(mean_bce_per_pixel(vce_s, ds.images), 5),
        "cae_bce": round(mean_bce_per_pixel(cae_s, ds.images), 5),
    }
    print("cae_vs_vce:", results["cae_vs_vce_1200"], flush=True)

    # -- criterion 6 pilot: beta sweep monotonicity at two step budgets --------
    for steps in (800, 1500):
        kls = {}
        for beta in (1.0, 4.0, 8.0, 16.0):
            m, _ = train_vce(ds, VceConfig(beta=beta, steps=steps, seed=0))
            t = export_embeddings(m, ds)
            kls[beta] = round(t.mean_kl(), 4)
        results[f"beta_sweep_{steps}"] = kls
        print(f"beta sweep at {steps} steps:", kls, flush=True)

    out = Path(__file__).parent / "pilot_results.json"
    out.write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
