"""Command-line entry point: render, train-vce, train-cae, export-emb,
traverse, train-clf, eval, sweep, serve.

Every command is replayable: outputs land next to a resolved config
snapshot, and all randomness hangs off explicit seeds. Exit codes: 0
success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import corpus as corpusmod
from . import vce as vcemod
from .augment import SsaConfig, WtConfig
from .clcnn import ClcnnConfig, ClcnnModel, evaluate_whole, train_classifier
from .errors import ConfigError, DataError, FormatError
from .glyphs import (RenderConfig, build_default_charset, load_dataset,
                     rasterize, save_dataset)
from .nn.tensor import NumericalError
from .vce import VceConfig

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _vce_config(cfg: dict, steps=None, beta=None, seed=None) -> VceConfig:
    v = cfg["vce"]
    return VceConfig(latent_dim=v["latent_dim"],
                     beta=v["beta"] if beta is None else beta,
                     lr=v["lr"], batch=v["batch"],
                     steps=v["steps"] if steps is None else steps,
                     seed=v["seed"] if seed is None else seed,
                     log_every=v["log_every"],
                     channels=tuple(v["channels"]), hidden=v["hidden"])


def _augmentation(kind: str, cfg: dict, gamma=None, p=None):
    if kind == "none":
        return None
    if kind == "ssa":
        g = cfg["augment"]["gamma"] if gamma is None else gamma
        return SsaConfig(gamma=g, rate=cfg["augment"]["rate"])
    if kind == "wt":
        return WtConfig(p=cfg["augment"]["p_wt"] if p is None else p)
    raise ConfigError(f"unknown augmentation '{kind}'")


def cmd_render(args) -> int:
    cfg = cfgmod.resolve(args.config, {
        ("glyphset", "font"): args.font,
        ("glyphset", "subset"): args.subset,
    })
    font = cfg["glyphset"]["font"]
    if not font:
        raise ConfigError("no font given (--font or glyphset.font)")
    if not Path(font).exists():
        raise DataError(f"font file '{font}' does not exist")
    charset = build_default_charset()
    if cfg["glyphset"]["subset"]:
        charset = charset.subset(cfg["glyphset"]["subset"])
    render_cfg = RenderConfig(em_px=cfg["glyphset"]["em_px"],
                              min_coverage=cfg["glyphset"]["min_coverage"])
    ds = rasterize(charset, font, render_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    cfgmod.write_snapshot(cfg, out.parent)
    print(f"rendered {len(ds.charset)} glyphs from {Path(font).name} -> {out}")
    return 0


def _cmd_train_autoencoder(args, variational: bool) -> int:
    cfg = cfgmod.resolve(args.config, {
        ("vce", "beta"): args.beta,
        ("vce", "steps"): args.steps,
        ("vce", "seed"): args.seed,
    })
    ds = load_dataset(args.data)
    vcfg = _vce_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_snapshot(cfg, out)

    def progress(row):
        print(f"step {row.step}: elbo {row.total:.1f} recon {row.recon:.1f} "
              f"kl {row.kl:.3f}", flush=True)

    train = vcemod.train_vce if variational else vcemod.train_cae
    model, rows = train(ds, vcfg, progress=progress if args.verbose else None)
    kind = "vce" if variational else "cae"
    model.save(out / f"{kind}.wts", {
        "charset_hash": ds.charset.hash_hex(),
        "seed": vcfg.seed, "beta": vcfg.beta, "steps": vcfg.steps,
        "lr": vcfg.lr, "batch": vcfg.batch, "font_id": ds.font_id,
    })
    vcemod.write_train_log(out / "train_log.csv", rows, variational=variational)
    print(f"trained {kind} for {vcfg.steps} steps -> {out / (kind + '.wts')}")
    return 0


def cmd_train_vce(args) -> int:
    return _cmd_train_autoencoder(args, variational=True)


def cmd_train_cae(args) -> int:
    return _cmd_train_autoencoder(args, variational=False)


def cmd_export_emb(args) -> int:
    model, meta = vcemod.load_model(args.weights)
    ds = load_dataset(args.data)
    if meta.get("charset_hash") and meta["charset_hash"] != ds.charset.hash_hex():
        raise DataError("weights were trained on a different charset than the dataset")
    table = vcemod.export_embeddings(model, ds)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vcemod.save_table(table, out)
    print(f"exported {len(table.charset)} embeddings (d'={table.latent_dim}) -> {out}")
    return 0


def cmd_traverse(args) -> int:
    from PIL import Image

    model, _ = vcemod.load_model(args.weights)
    table = vcemod.load_table(args.table)
    dims = range(table.latent_dim) if args.all_dims else [args.dim]
    strips = [vcemod.traverse(model, table, args.char, d, args.lo, args.hi,
                              args.steps) for d in dims]
    grid = np.concatenate([np.concatenate(list(s), axis=1) for s in strips], axis=0)
    u8 = (np.clip(grid, 0, 1) * 255).round().astype(np.uint8)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(u8, mode="L").save(out)
    print(f"wrote {len(strips)}x{args.steps} traversal grid for "
          f"'{args.char}' -> {out}")
    return 0


def _load_corpus_splits(cfg: dict, corpus_root: str, out_dir: Path | None):
    docs, report = corpusmod.load_livedoor(corpus_root)
    spec = corpusmod.SplitSpec(seed=cfg["corpus"]["seed"], train=cfg["corpus"]["train"],
                               val=cfg["corpus"]["val"], eval=cfg["corpus"]["eval"])
    splits = corpusmod.split(docs, spec)
    if out_dir is not None:
        manifest = corpusmod.split_manifest(docs, spec, splits)
        corpusmod.save_manifest(manifest, out_dir / "splits.json")
    categories = sorted({d.category for d in docs})
    return docs, splits, categories, report


def _encode_splits(docs, splits, charset, c: int) -> dict:
    return {name: [corpusmod.encode_title(docs[i], charset, c) for i in idx]
            for name, idx in splits.items()}


def _load_corpus_samples(cfg: dict, corpus_root: str, table, out_dir: Path | None):
    docs, splits, categories, report = _load_corpus_splits(cfg, corpus_root, out_dir)
    samples = _encode_splits(docs, splits, table.charset, cfg["clcnn"]["window"])
    return samples, categories, report


def cmd_train_clf(args) -> int:
    cfg = cfgmod.resolve(args.config, {
        ("clcnn", "augmentation"): args.aug,
        ("augment", "gamma"): args.gamma,
        ("augment", "p_wt"): args.p,
        ("clcnn", "seed"): args.seed,
        ("corpus", "root"): args.corpus,
    })
    root = cfg["corpus"]["root"]
    if not root:
        raise ConfigError("no corpus root given (--corpus or corpus.root)")
    table = vcemod.load_table(args.table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_snapshot(cfg, out)
    samples, categories, report = _load_corpus_samples(cfg, root, table, out)
    print(f"corpus: {report.total} documents over {len(categories)} categories "
          f"({report.skipped} skipped)")

    aug = _augmentation(cfg["clcnn"]["augmentation"], cfg)
    base_seed = cfg["clcnn"]["seed"]
    results = []
    for i in range(args.seeds):
        seed = base_seed + i
        ccfg = ClcnnConfig(window=cfg["clcnn"]["window"], classes=len(categories),
                           lr=cfg["clcnn"]["lr"],
                           weight_decay=cfg["clcnn"]["weight_decay"],
                           batch=cfg["clcnn"]["batch"],
                           max_epochs=cfg["clcnn"]["max_epochs"],
                           patience=cfg["clcnn"]["patience"],
                           augmentation=aug, seed=seed,
                           channels=cfg["clcnn"]["channels"])
        def progress(rec):
            print(f"seed {seed} epoch {rec.epoch}: loss {rec.train_loss:.4f} "
                  f"val {rec.val_accuracy:.4f}", flush=True)
        model, history = train_classifier(table, samples["train"], samples["val"],
                                          ccfg, progress=progress if args.verbose else None)
        acc, confusion = evaluate_whole(model, table, samples["eval"])
        model.save(out / f"clf_seed{seed}.wts", {
            "table_hash": vcemod.table_file_hash(args.table),
            "class_names": categories,
            "augmentation": repr(aug),
            "seed": seed,
            "best_epoch": history.best_epoch,
            "val_accuracy": history.best_val_accuracy,
        })
        results.append({
            "seed": seed,
            "eval_accuracy": acc,
            "val_accuracy": history.best_val_accuracy,
            "best_epoch": history.best_epoch,
            "confusion": confusion.tolist(),
            "history": [[r.epoch, r.train_loss, r.val_accuracy]
                        for r in history.epochs],
        })
        print(f"seed {seed}: eval accuracy {acc:.4f}")

    mean_acc = float(np.mean([r["eval_accuracy"] for r in results]))
    report_doc = {
        "augmentation": cfg["clcnn"]["augmentation"],
        "gamma": cfg["augment"]["gamma"],
        "p_wt": cfg["augment"]["p_wt"],
        "classes": categories,
        "per_seed": results,
        "mean_eval_accuracy": mean_acc,
    }
    (out / "train_report.json").write_text(
        json.dumps(report_doc, indent=2) + "\n", encoding="utf-8")
    print(f"mean eval accuracy over {args.seeds} seed(s): {mean_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = cfgmod.resolve(args.config, {("corpus", "root"): args.corpus})
    root = cfg["corpus"]["root"]
    if not root:
        raise ConfigError("no corpus root given (--corpus or corpus.root)")
    table = vcemod.load_table(args.table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    docs, splits, categories, _ = _load_corpus_splits(cfg, root, None)

    rows = []
    encoded: dict[int, list] = {}
    for clf_path in args.clf:
        model, meta = ClcnnModel.load(clf_path)
        c = model.cfg.window
        if c not in encoded:
            encoded[c] = _encode_splits(docs, splits, table.charset, c)["eval"]
        acc, confusion = evaluate_whole(model, table, encoded[c])
        rows.append({"model": str(clf_path), "augmentation": meta.get("augmentation"),
                     "accuracy": acc, "confusion": confusion.tolist()})
        print(f"{clf_path}: accuracy {acc:.4f}")

    report = {"classes": categories, "results": rows,
              "mean_accuracy": float(np.mean([r["accuracy"] for r in rows]))}
    (out / "eval_report.json").write_text(json.dumps(report, indent=2) + "\n",
                                          encoding="utf-8")
    lines = [f"{'model':<48} {'augmentation':<28} {'accuracy [%]':>12}"]
    for r in rows:
        lines.append(f"{Path(r['model']).name:<48} {str(r['augmentation']):<28} "
                     f"{100 * r['accuracy']:>12.2f}")
    (out / "eval_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_sweep(args) -> int:
    cfg = cfgmod.resolve(args.config, {("corpus", "root"): args.corpus})
    values = [float(v) for v in args.values.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_snapshot(cfg, out)
    ds = load_dataset(args.data) if args.data else None
    root = cfg["corpus"]["root"]
    if not root:
        raise ConfigError("sweep needs a corpus (--corpus or corpus.root)")

    shared_table = vcemod.load_table(args.table) if args.table else None
    if args.axis == "beta" and ds is None:
        raise ConfigError("beta sweep needs --data (glyph dataset)")
    if args.axis == "gamma" and shared_table is None:
        raise ConfigError("gamma sweep needs --table (embedding table)")
    charset = ds.charset if args.axis == "beta" else shared_table.charset
    docs, splits, categories, _ = _load_corpus_splits(cfg, root, out)
    samples = _encode_splits(docs, splits, charset, cfg["clcnn"]["window"])

    rows = []
    for value in values:
        if args.axis == "beta":
            vcfg = _vce_config(cfg, beta=value)
            model, _ = vcemod.train_vce(ds, vcfg)
            table = vcemod.export_embeddings(model, ds)
            aug = _augmentation(cfg["clcnn"]["augmentation"], cfg)
        else:
            table = shared_table
            aug = SsaConfig(gamma=value, rate=cfg["augment"]["rate"])
        accs = []
        for i in range(args.seeds):
            seed = cfg["clcnn"]["seed"] + i
            ccfg = ClcnnConfig(window=cfg["clcnn"]["window"], classes=len(categories),
                               lr=cfg["clcnn"]["lr"],
                               weight_decay=cfg["clcnn"]["weight_decay"],
                               batch=cfg["clcnn"]["batch"],
                               max_epochs=cfg["clcnn"]["max_epochs"],
                               patience=cfg["clcnn"]["patience"],
                               augmentation=aug, seed=seed,
                               channels=cfg["clcnn"]["channels"])
            model_c, _ = train_classifier(table, samples["train"], samples["val"], ccfg)
            acc, _ = evaluate_whole(model_c, table, samples["eval"])
            accs.append(acc)
            print(f"{args.axis}={value} seed={seed}: {acc:.4f}")
        for seed_i, acc in enumerate(accs):
            rows.append((value, cfg["clcnn"]["seed"] + seed_i, acc, float(np.mean(accs))))

    csv_path = out / f"sweep_{args.axis}.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(f"{args.axis},seed,accuracy,mean\n")
        for value, seed, acc, mean in rows:
            f.write(f"{value},{seed},{acc:.6f},{mean:.6f}\n")
    print(f"wrote {csv_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_state

    state = load_state(args.weights, args.table, args.clf)
    app = create_app(state, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="gel", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", default=None, help="JSON run config")
        sp.add_argument("--verbose", action="store_true")
        return sp

    sp = add("render", cmd_render, "rasterize the charset with a font into GLY1")
    sp.add_argument("--font", default=None)
    sp.add_argument("--subset", type=int, default=None,
                    help="keep only the first N characters")
    sp.add_argument("--out", required=True)

    for name, fn in [("train-vce", cmd_train_vce), ("train-cae", cmd_train_cae)]:
        sp = add(name, fn, f"train the {name.split('-')[1]} on a GLY1 dataset")
        sp.add_argument("--data", required=True, help="GLY1 glyph dataset")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--beta", type=float, default=None)
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)

    sp = add("export-emb", cmd_export_emb, "export the embedding table (EMB1)")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)

    sp = add("traverse", cmd_traverse, "decode a latent traversal strip to PNG")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--table", required=True)
    sp.add_argument("--char", required=True)
    sp.add_argument("--dim", type=int, default=0)
    sp.add_argument("--lo", type=float, default=-2.0)
    sp.add_argument("--hi", type=float, default=2.0)
    sp.add_argument("--steps", type=int, default=9)
    sp.add_argument("--all-dims", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("train-clf", cmd_train_clf, "train the text classifier")
    sp.add_argument("--table", required=True)
    sp.add_argument("--corpus", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--aug", choices=["none", "ssa", "wt"], default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--seeds", type=int, default=1,
                    help="train this many seeds and report the mean")

    sp = add("eval", cmd_eval, "evaluate trained classifiers on the eval split")
    sp.add_argument("--clf", nargs="+", required=True)
    sp.add_argument("--table", required=True)
    sp.add_argument("--corpus", default=None)
    sp.add_argument("--out", required=True)

    sp = add("sweep", cmd_sweep, "sweep beta or gamma and record accuracies")
    sp.add_argument("--axis", choices=["beta", "gamma"], required=True)
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--data", default=None, help="GLY1 dataset (beta sweep)")
    sp.add_argument("--table", default=None, help="EMB1 table (gamma sweep)")
    sp.add_argument("--corpus", default=None)
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("serve", cmd_serve, "serve the explorer HTTP API")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--table", required=True)
    sp.add_argument("--clf", default=None)
    sp.add_argument("--port", type=int, default=8307)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--static", default=None, help="directory of UI assets")

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, FileNotFoundError,
            vcemod.UnknownCharacterError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
