"""``flakeseg`` command line: one subcommand per pipeline stage plus ``pipeline``.

Stages pass JSON-lines manifests between each other.  Reports go to stdout
as JSON, or to ``--out`` when that names a report file.  Exit status is 0 on
success, 2 on usage, input or config errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import PixelClassifier, weak_learn
from .config import ENV_VAR, ConfigError, PipelineConfig
from .datasetops import augment, dataset_stats
from .enhance import enhance_image, enhancement_report
from .imagecore import (CLASS_NAMES, ImageFormatError, Manifest, Record, load_mask, read_manifest, save_image,
                        save_mask, write_manifest)
from .metrics import confusion, ConfusionCounts, evaluate
from .parallel import pmap
from .pipeline import (cluster_stage, fit_enhancer, resolve_beta, run_ablation, run_pipeline, split_stage,
                       standardize, train_stage)
from .quality import quality_score
from .synth import generate, write_corpus

# overlay colors per class (background transparent)
CLASS_COLORS = np.array([[0, 0, 0], [255, 255, 0], [0, 255, 255], [255, 0, 255],
                         [0, 128, 255], [255, 128, 0], [255, 0, 0]], dtype=np.float64)


class CliError(Exception):
    pass


# -- output helpers ---------------------------------------------------------
def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _guard(path, args):
    if args.no_clobber and Path(path).exists():
        raise CliError(f"{path} exists (--no-clobber)")


def _manifest_dest(args):
    """``--out`` if given (guarded by --no-clobber), else the input manifest in place."""
    if args.out:
        _guard(args.out, args)
        return Path(args.out)
    return Path(args.manifest)


def _write_text(path, text, args):
    path = Path(path)
    _guard(path, args)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(report, args, default_path=None):
    """Report to ``--report``, else ``default_path``, else stdout."""
    path = getattr(args, "report", None) or default_path
    if path:
        _write_text(path, _json(report), args)
    else:
        sys.stdout.write(_json(report))


def _out_dir(args):
    if not args.out:
        raise CliError(f"{args.command} needs --out DIR")
    out = Path(args.out)
    if args.no_clobber and out.exists() and any(out.iterdir()):
        raise CliError(f"{out} is not empty (--no-clobber)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(path):
    m = read_manifest(path)
    m.validate()
    return m


def _images(manifest, jobs):
    return pmap(manifest.image, range(len(manifest)), jobs)


def _masks(manifest, jobs):
    for i, rec in enumerate(manifest):
        if rec.mask is None:
            raise CliError(f"record {i} ({rec.image}) has no mask")
    return pmap(manifest.mask, range(len(manifest)), jobs)


def _rel(manifest, path, out):
    """``path`` of a record in ``manifest`` expressed relative to directory ``out``."""
    return os.path.relpath(manifest.resolve(path), out) if path else None


def _select(manifest, split=None, group=None):
    keep = [i for i, r in enumerate(manifest)
            if (split is None or r.split == split) and (group is None or r.group == group)]
    return Manifest([manifest[i] for i in keep], root=manifest.root), keep


def _training_subset(manifest):
    if any(r.split == "train" for r in manifest):
        return _select(manifest, split="train")[0]
    return manifest


def overlay(img, mask, opacity=0.5):
    """Blend class colors over the image; background pixels stay untouched."""
    out = img.astype(np.float64)
    fg = mask > 0
    out[fg] = (1 - opacity) * out[fg] + opacity * CLASS_COLORS[mask[fg]]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# -- subcommands ------------------------------------------------------------
def cmd_synth(args, cfg):
    out = _out_dir(args)
    corpus = generate(cfg.synth_config(**({"n_images": args.n_images} if args.n_images else {})), cfg.jobs)
    manifest = write_corpus(corpus, out)
    _emit({"n_images": len(manifest), "manifest": str(out / "manifest.jsonl"),
           "groups": list(corpus.groups), "overexposed": list(corpus.overexposed)}, args)


def cmd_stats(args, cfg):
    m = _manifest(args.manifest)
    _emit(dataset_stats(_masks(m, cfg.jobs)), args, args.out)


def cmd_quality(args, cfg):
    m = _manifest(args.manifest)
    qcfg = cfg.quality_config()
    reports = pmap(lambda i: quality_score(m.image(i), qcfg).to_dict(), range(len(m)), cfg.jobs)
    _emit({"images": [dict(r, image=rec.image) for r, rec in zip(reports, m)],
           "mean_score": float(np.mean([r["score"] for r in reports]))}, args, args.out)


def cmd_tune_alpha(args, cfg):
    m = _manifest(args.manifest)
    model, gated = fit_enhancer(_images(m, cfg.jobs), cfg)
    search = model.search_
    _emit({"alpha": model.alpha_, "n_gated": len(gated),
           "best_quality": None if search is None else search.best_value,
           "run_bests": None if search is None else search.run_bests}, args, args.out)


def cmd_enhance(args, cfg):
    m = _manifest(args.manifest)
    out = _out_dir(args)
    images = _images(m, cfg.jobs)
    if args.alpha is not None:
        cfg.set("enhance", "alpha", args.alpha)
        cfg.set("enhance", "tune", False)
    model, gated = fit_enhancer(images, cfg)
    gated_set = set(gated)

    def one(i):
        if i not in gated_set:
            return images[i], enhancement_report(images[i], images[i], model.alpha_, False) | {"enhanced": False}
        img, flag = enhance_image(images[i], model.alpha_, return_flag=True)
        return img, enhancement_report(images[i], img, model.alpha_, flag) | {"enhanced": True}

    results = pmap(one, range(len(m)), cfg.jobs)
    records = []
    for i, ((img, _), rec) in enumerate(zip(results, m)):
        path = f"images/{i:04d}.png"
        save_image(img, out / path)
        records.append(Record(image=path, mask=_rel(m, rec.mask, out), group=rec.group, split=rec.split))
    new = Manifest(records, root=out)
    write_manifest(new, out / "manifest.jsonl")
    _emit({"alpha": model.alpha_, "manifest": str(out / "manifest.jsonl"),
           "images": [r for _, r in results]}, args)


def cmd_cluster(args, cfg):
    m = _manifest(args.manifest)
    if args.k is not None:
        cfg.set("cluster", "k", args.k)
    groups, report = cluster_stage(_images(m, cfg.jobs), cfg)
    new = m.copy()
    for rec, g in zip(new, groups):
        rec.group = int(g)
    dest = _manifest_dest(args)
    write_manifest(new, dest)
    _emit(dict(report, manifest=str(dest)), args)


def cmd_split(args, cfg):
    m = _manifest(args.manifest)
    masks = _masks(m, cfg.jobs)
    groups = [r.group for r in m] if all(r.group is not None for r in m) else None
    train_idx, test_idx, report = split_stage(masks, groups, cfg)
    new = m.copy()
    for i in train_idx:
        new[i].split = "train"
    for i in test_idx:
        new[i].split = "test"
    dest = _manifest_dest(args)
    write_manifest(new, dest)
    _emit(dict(report, manifest=str(dest), sizes={"train": len(train_idx), "test": len(test_idx)}), args)


def cmd_augment(args, cfg):
    m = _training_subset(_manifest(args.manifest))
    out = _out_dir(args)
    copies = args.copies if args.copies is not None else max(cfg["augment"]["copies"], 1)
    acfg = cfg.augment_config()
    size = cfg["general"]["size"]

    def one(ic):
        i, c = ic
        (img,), (mask,) = standardize([m.image(i)], [m.mask(i)], size)
        img, mask = augment(img, mask, acfg, np.random.default_rng([cfg.seed, 2, i, c]))
        ip, mp = f"images/{i:04d}_{c}.png", f"masks/{i:04d}_{c}.png"
        save_image(img, out / ip)
        save_mask(mask, out / mp)
        return Record(image=ip, mask=mp, group=m[i].group, split=m[i].split)

    records = pmap(one, [(i, c) for i in range(len(m)) for c in range(copies)], cfg.jobs)
    write_manifest(Manifest(records, root=out), out / "manifest.jsonl")
    _emit({"n_augmented": len(records), "manifest": str(out / "manifest.jsonl")}, args)


def _model_path(args):
    if not args.out:
        raise CliError(f"{args.command} needs --out MODEL.json")
    _guard(args.out, args)
    return Path(args.out)


def cmd_train(args, cfg):
    m = _training_subset(_manifest(args.manifest))
    dest = _model_path(args)
    images, masks = _images(m, cfg.jobs), _masks(m, cfg.jobs)
    if args.beta is not None:
        cfg.set("train", "beta", args.beta)
        cfg.set("train", "tune_beta", False)
    beta, beta_report = resolve_beta(images, masks, cfg)
    model = train_stage(images, masks, cfg, beta)
    _write_text(dest, json.dumps(dict(model.to_dict(), seed=cfg.seed)), args)
    _emit({"model": str(dest), "beta": beta_report, "n_images": len(m),
           "final_loss": float(np.mean(model.loss_history_[-100:]))}, args)


def cmd_weaklearn(args, cfg):
    base = PixelClassifier.load(args.model)
    m = _training_subset(_manifest(args.manifest))
    if args.group is not None:
        m, _ = _select(m, group=args.group)
        if not len(m):
            raise CliError(f"no training records in group {args.group}")
    dest = _model_path(args)
    t = cfg["train"]
    tuned = weak_learn(base, _images(m, cfg.jobs), _masks(m, cfg.jobs), weak_lr=t["weak_lr"],
                       max_iters=t["weak_iters"], seed=cfg.seed)
    _write_text(dest, json.dumps(dict(tuned.to_dict(), seed=cfg.seed)), args)
    _emit(dict(tuned.weak_report_, model=str(dest), group=args.group), args)


def _load_models(args):
    """Base model plus optional ``GROUP=PATH`` overrides."""
    base = PixelClassifier.load(args.model)
    per_group = {}
    for spec in args.group_model or []:
        g, _, path = spec.partition("=")
        if not path:
            raise CliError(f"--group-model expects GROUP=PATH, got {spec!r}")
        per_group[int(g)] = PixelClassifier.load(path)
    return base, per_group


def cmd_predict(args, cfg):
    m = _manifest(args.manifest)
    if args.split:
        m, _ = _select(m, split=args.split)
    base, per_group = _load_models(args)
    out = _out_dir(args)

    def one(i):
        img = m.image(i)
        pred = per_group.get(m[i].group, base).predict_one(img)
        save_mask(pred, out / f"pred/{i:04d}.png")
        if args.overlays:
            save_image(overlay(img, pred), out / f"overlays/{i:04d}.png")
        return Record(image=_rel(m, m[i].image, out), mask=f"pred/{i:04d}.png", group=m[i].group,
                      split=m[i].split)

    records = pmap(one, range(len(m)), cfg.jobs)
    write_manifest(Manifest(records, root=out), out / "predictions.jsonl")
    _emit({"n_predicted": len(records), "manifest": str(out / "predictions.jsonl")}, args)


def cmd_eval(args, cfg):
    pred_m = _manifest(args.predictions)
    truth_m = _manifest(args.truth)
    if args.split:
        truth_m, _ = _select(truth_m, split=args.split)
    if len(pred_m) != len(truth_m):
        raise CliError(f"{len(pred_m)} predictions for {len(truth_m)} ground-truth records")

    def one(i):
        p_path, t_path = pred_m.resolve(pred_m[i].mask), truth_m.resolve(truth_m[i].mask)
        pred, truth = load_mask(p_path), load_mask(t_path)
        if pred.shape != truth.shape:
            raise CliError(f"{p_path}: prediction dims {pred.shape[1]}x{pred.shape[0]} do not match "
                           f"{t_path} dims {truth.shape[1]}x{truth.shape[0]}")
        return confusion(pred, truth)

    counts = ConfusionCounts()
    for c in pmap(one, range(len(pred_m)), cfg.jobs):
        counts = counts + c
    report = evaluate(counts).to_dict()
    report["class_names"] = list(CLASS_NAMES)
    report["confusion"] = counts.matrix.tolist()
    _emit(report, args, args.out)


def cmd_pipeline(args, cfg):
    m = _manifest(args.manifest)
    images, masks = _images(m, cfg.jobs), _masks(m, cfg.jobs)
    out = _out_dir(args) if args.out else None
    if args.ablation:
        _emit(run_ablation(images, masks, cfg), args, out / "ablation.json" if out else None)
        return
    res = run_pipeline(images, masks, cfg)
    report = res.report
    if out is not None:
        train = set(res.train_idx.tolist())
        records = []
        for i, rec in enumerate(m):
            split = "train" if i in train else "test"
            records.append(Record(image=rec.image, mask=rec.mask, group=int(res.groups[i]), split=split))
        write_manifest(Manifest(records, root=m.root), out / "manifest.jsonl")
        _write_text(out / "model_global.json", json.dumps(dict(res.model.to_dict(), seed=cfg.seed)), args)
        for g, model in res.group_models.items():
            _write_text(out / f"model_group{g}.json", json.dumps(dict(model.to_dict(), seed=cfg.seed)), args)
        for j, i in enumerate(res.test_idx):
            save_mask(res.predictions[j], out / f"pred/{int(i):04d}.png")
            if args.overlays:
                save_image(overlay(res.images[i], res.predictions[j]), out / f"overlays/{int(i):04d}.png")
        report = dict(report, artifacts={"manifest": "manifest.jsonl", "models": sorted(
            ["model_global.json"] + [f"model_group{g}.json" for g in res.group_models])})
    _emit(report, args, out / "report.json" if out else None)


COMMANDS = {
    "synth": (cmd_synth, "generate a seeded synthetic corpus"),
    "stats": (cmd_stats, "per-class weight statistics of a manifest"),
    "enhance": (cmd_enhance, "adaptive gamma correction of overexposed images"),
    "quality": (cmd_quality, "noise-aware quality score per image"),
    "tune-alpha": (cmd_tune_alpha, "swarm search of the enhancement exponent"),
    "cluster": (cmd_cluster, "group images by background chroma"),
    "split": (cmd_split, "stratified train/test split"),
    "augment": (cmd_augment, "write augmented copies of the training images"),
    "train": (cmd_train, "train the per-pixel classifier"),
    "weaklearn": (cmd_weaklearn, "low-rate fine-tune of a model on one group"),
    "predict": (cmd_predict, "predict masks"),
    "eval": (cmd_eval, "segmentation metrics of predictions against truth"),
    "pipeline": (cmd_pipeline, "all stages in order"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="global seed (overrides [general] seed)")
    common.add_argument("--jobs", type=int, help="worker threads for per-image stages")
    common.add_argument("--config", help=f"config file (default: ${ENV_VAR})")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--report", help="write the JSON report here instead of stdout")
    common.add_argument("--no-clobber", action="store_true", help="refuse to overwrite existing outputs")

    parser = argparse.ArgumentParser(prog="flakeseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    p = {name: sub.add_parser(name, parents=[common], help=h) for name, (_, h) in COMMANDS.items()}

    p["synth"].add_argument("--n-images", type=int)
    for name in ("stats", "enhance", "quality", "tune-alpha", "cluster", "split", "augment", "train",
                 "weaklearn", "predict", "pipeline"):
        p[name].add_argument("manifest")
    p["enhance"].add_argument("--alpha", type=float, help="fixed exponent (skips tuning)")
    p["cluster"].add_argument("--k", type=int, help="number of groups (0 picks by silhouette)")
    p["augment"].add_argument("--copies", type=int)
    p["train"].add_argument("--beta", type=float, help="fixed loss adjustment factor (skips tuning)")
    p["weaklearn"].add_argument("--model", required=True)
    p["weaklearn"].add_argument("--group", type=int)
    p["predict"].add_argument("--model", required=True)
    p["predict"].add_argument("--group-model", action="append", metavar="GROUP=PATH")
    p["predict"].add_argument("--split", help="only records with this split tag")
    p["eval"].add_argument("predictions")
    p["eval"].add_argument("truth")
    p["eval"].add_argument("--split", help="only truth records with this split tag")
    for name in ("predict", "pipeline"):
        p[name].add_argument("--overlays", action="store_true", help="also write overlay PNGs")
    p["pipeline"].add_argument("--ablation", action="store_true",
                               help="run the four cumulative configurations instead")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config)
        if args.seed is not None:
            cfg.set("general", "seed", args.seed)
        if args.jobs is not None:
            if args.jobs < 1:
                raise CliError("--jobs must be >= 1")
            cfg.set("general", "jobs", args.jobs)
        COMMANDS[args.command][0](args, cfg)
    except (CliError, ConfigError, ImageFormatError, FileNotFoundError, ValueError) as exc:
        print(f"flakeseg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
