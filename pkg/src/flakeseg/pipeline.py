"""End-to-end pipeline: enhance, standardize and group, split, train, weak-learn, evaluate.

All stages work on in-memory lists of images and masks; the CLI handles
files.  Randomness derives from ``cfg.seed`` only, and per-image work goes
through order-preserving maps, so reports do not depend on ``cfg.jobs``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import PixelClassifier, weak_learn
from .config import PipelineConfig
from .datasetops import augment, dataset_stats, iterative_stratify, label_sets, split_report
from .enhance import AdaptiveGammaCorrection, max_oversaturation, oversaturation_index, CHANNELS
from .grouping import ChromaKMeans
from .imagecore import check_image, check_mask, resize_bilinear, resize_nearest
from .metrics import evaluate_masks
from .parallel import pmap
from .pso import optimize

ABLATION_STEPS = ("baseline", "weighted_loss", "weighted_loss+enhancement",
                  "weighted_loss+enhancement+weak_learning")


def standardize(images, masks, size, n_jobs=1):
    """Resize every pair to ``size`` x ``size`` (bilinear image, nearest mask)."""
    def one(pair):
        img, mask = pair
        img = check_image(img)
        mask = check_mask(mask, shape=img.shape[:2]) if mask is not None else None
        if img.shape[:2] != (size, size):
            img = resize_bilinear(img, size, size)
            mask = resize_nearest(mask, size, size) if mask is not None else None
        return img, mask

    out = pmap(one, list(zip(images, masks)), n_jobs)
    return [o[0] for o in out], [o[1] for o in out]


# -- enhancement ------------------------------------------------------------
def fit_enhancer(images, cfg: PipelineConfig):
    """Gamma-correction transformer with ``alpha`` tuned on a seeded subset of gated images."""
    e = cfg["enhance"]
    gate = e["gate"] if e["gate"] > 0 else None
    model = AdaptiveGammaCorrection(alpha=e["alpha"], tune=e["tune"], alpha_bounds=(e["alpha_min"], e["alpha_max"]),
                                    quality_config=cfg.quality_config(), maximize=e["maximize"], gate=gate,
                                    swarm_config=cfg.swarm_config([(e["alpha_min"], e["alpha_max"])],
                                                                  maximize=e["maximize"]))
    gated = [i for i, img in enumerate(images) if gate is None or max_oversaturation(img) >= gate]
    if e["tune"] and not gated:
        model.set_params(tune=False)
    order = np.random.default_rng([cfg.seed, 1]).permutation(len(gated))
    subset = [images[gated[i]] for i in sorted(order[:e["tune_images"]])]
    model.fit(subset)
    return model, gated


def enhance_stage(images, cfg: PipelineConfig):
    model, gated = fit_enhancer(images, cfg)
    out = pmap(lambda x: model.transform([x])[0], images, cfg.jobs)
    before = {ch: float(np.mean([oversaturation_index(images[i], ch) for i in gated])) if gated else 0.0
              for ch in CHANNELS}
    after = {ch: float(np.mean([oversaturation_index(out[i], ch) for i in gated])) if gated else 0.0
             for ch in CHANNELS}
    search = model.search_
    report = {
        "alpha": model.alpha_,
        "tuned": search is not None,
        "best_quality": None if search is None else search.best_value,
        "n_enhanced": len(gated),
        "mean_oversaturation_before": before,
        "mean_oversaturation_after": after,
    }
    return out, report


# -- grouping and splitting -------------------------------------------------
def cluster_stage(images, cfg: PipelineConfig):
    c = cfg["cluster"]
    model = ChromaKMeans(n_clusters=c["k"] or None, k_range=(c["k_min"], c["k_max"]),
                         random_state=cfg.seed).fit(images)
    report = {"k": int(model.n_clusters_), "silhouette": model.silhouette_,
              "centroids": model.cluster_centers_.tolist(),
              "sizes": np.bincount(model.labels_, minlength=model.n_clusters_).tolist()}
    return model.labels_.astype(int), report


def split_stage(masks, groups, cfg: PipelineConfig):
    s = cfg["split"]
    subsets = iterative_stratify(label_sets(masks), (s["train"], s["test"]), seed=cfg.seed)
    return subsets[0], subsets[1], split_report(masks, subsets, groups)


def augment_stage(images, masks, cfg: PipelineConfig):
    """Originals followed by ``copies`` augmented versions of each pair."""
    copies = cfg["augment"]["copies"]
    if copies <= 0:
        return list(images), list(masks)
    acfg = cfg.augment_config()
    jobs = [(i, c) for i in range(len(images)) for c in range(copies)]
    out = pmap(lambda ic: augment(images[ic[0]], masks[ic[0]], acfg,
                                  np.random.default_rng([cfg.seed, 2, ic[0], ic[1]])), jobs, cfg.jobs)
    return list(images) + [o[0] for o in out], list(masks) + [o[1] for o in out]


# -- training ---------------------------------------------------------------
def tune_beta(images, masks, cfg: PipelineConfig):
    """Loss adjustment factor maximizing validation mIoU on an inner stratified split."""
    t = cfg["train"]
    fit_idx, val_idx = iterative_stratify(label_sets(masks), (1 - t["val_fraction"], t["val_fraction"]),
                                          seed=cfg.seed + 1)
    fit_x = [images[i] for i in fit_idx]
    fit_y = [masks[i] for i in fit_idx]
    val_x = [images[i] for i in val_idx]
    val_y = [masks[i] for i in val_idx]
    params = cfg.classifier_params()
    params.update(max_iters=t["beta_iters"], n_jobs=1)

    def objective(pos):
        model = PixelClassifier(random_state=cfg.seed, **{**params, "beta": float(pos[0])}).fit(fit_x, fit_y)
        return evaluate_masks(model.predict(val_x), val_y).miou or 0.0

    scfg = cfg.swarm_config([(t["beta_min"], t["beta_max"])], maximize=True,
                            n_agents=t["beta_agents"], n_iters=t["beta_steps"], n_runs=1)
    result = optimize(objective, scfg)
    return float(result.best_position[0]), float(result.best_value)


def resolve_beta(images, masks, cfg: PipelineConfig, weighted=None):
    t = cfg["train"]
    weighted = t["weighted"] if weighted is None else weighted
    if not weighted:
        return 0.0, {"beta": 0.0, "tuned": False}
    if t["tune_beta"]:
        beta, val = tune_beta(images, masks, cfg)
        return beta, {"beta": beta, "tuned": True, "validation_miou": val}
    return t["beta"], {"beta": t["beta"], "tuned": False}


def train_stage(images, masks, cfg: PipelineConfig, beta):
    return PixelClassifier(random_state=cfg.seed, **cfg.classifier_params(beta=beta)).fit(images, masks)


def weak_stage(model, images, masks, groups, cfg: PipelineConfig):
    """One weakly fine-tuned copy of ``model`` per group present in ``groups``."""
    t = cfg["train"]
    models, reports = {}, {}
    groups = np.asarray(groups)
    for g in np.unique(groups):
        idx = np.flatnonzero(groups == g)
        tuned = weak_learn(model, [images[i] for i in idx], [masks[i] for i in idx],
                           weak_lr=t["weak_lr"], max_iters=t["weak_iters"], seed=cfg.seed + 1 + int(g))
        models[int(g)] = tuned
        reports[int(g)] = dict(tuned.weak_report_, n_images=int(len(idx)))
    return models, reports


def predict_grouped(model, group_models, images, groups, n_jobs=1):
    """Predict each image with its group's model, falling back to ``model``."""
    def one(ig):
        img, g = ig
        return (group_models or {}).get(int(g), model).predict_one(img)
    return pmap(one, list(zip(images, groups)), n_jobs)


def evaluation_report(preds, masks, groups):
    groups = np.asarray(groups)
    report = {"overall": evaluate_masks(preds, masks).to_dict(), "per_group": {}}
    for g in np.unique(groups):
        idx = np.flatnonzero(groups == g)
        report["per_group"][str(int(g))] = evaluate_masks([preds[i] for i in idx], [masks[i] for i in idx]).to_dict()
    return report


# -- orchestration ----------------------------------------------------------
@dataclass
class PipelineResult:
    report: dict
    images: list
    masks: list
    groups: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    model: PixelClassifier
    group_models: dict = field(default_factory=dict)
    predictions: list = field(default_factory=list)


def run_pipeline(images, masks, cfg: PipelineConfig | None = None, *, enhance=None, weighted=None,
                 weak=None) -> PipelineResult:
    """All stages in order; ``enhance``/``weighted``/``weak`` override the config switches."""
    cfg = cfg or PipelineConfig()
    enhance = cfg["enhance"]["enabled"] if enhance is None else enhance
    weak = cfg["train"]["weak"] if weak is None else weak
    settings = cfg.to_dict()
    del settings["general"]["jobs"]  # results do not depend on it
    report = {"config": settings, "stats": dataset_stats(masks)}

    if enhance:
        images, report["enhancement"] = enhance_stage(images, cfg)
    images, masks = standardize(images, masks, cfg["general"]["size"], cfg.jobs)
    groups, report["grouping"] = cluster_stage(images, cfg)
    train_idx, test_idx, report["split"] = split_stage(masks, groups, cfg)

    tr_x = [images[i] for i in train_idx]
    tr_y = [masks[i] for i in train_idx]
    beta, report["beta"] = resolve_beta(tr_x, tr_y, cfg, weighted)
    aug_x, aug_y = augment_stage(tr_x, tr_y, cfg)
    model = train_stage(aug_x, aug_y, cfg, beta)
    report["training"] = {"n_train_images": len(aug_x), "iterations": len(model.loss_history_),
                          "final_loss": float(np.mean(model.loss_history_[-100:]))}

    group_models = {}
    if weak:
        group_models, report["weak_learning"] = weak_stage(model, tr_x, tr_y, groups[train_idx], cfg)
    te_x = [images[i] for i in test_idx]
    te_y = [masks[i] for i in test_idx]
    preds = predict_grouped(model, group_models, te_x, groups[test_idx], cfg.jobs)
    report["evaluation"] = evaluation_report(preds, te_y, groups[test_idx])
    return PipelineResult(report, images, masks, groups, train_idx, test_idx, model, group_models, preds)


def run_ablation(images, masks, cfg: PipelineConfig | None = None):
    """mIoU and pixel accuracy of the four cumulative configurations on one shared split.

    Grouping, split and the tuned loss factor are computed once on the raw
    images and reused, so only the switched component differs between steps.
    """
    cfg = cfg or PipelineConfig()
    raw, masks = standardize(images, masks, cfg["general"]["size"], cfg.jobs)
    groups, grouping = cluster_stage(raw, cfg)
    train_idx, test_idx, _ = split_stage(masks, groups, cfg)
    enhanced, enh_report = enhance_stage(raw, cfg)
    tr_y = [masks[i] for i in train_idx]
    te_y = [masks[i] for i in test_idx]
    beta, beta_report = resolve_beta([raw[i] for i in train_idx], tr_y, cfg, weighted=True)

    def run(imgs, b, weak):
        tr_x, tr_m = augment_stage([imgs[i] for i in train_idx], tr_y, cfg)
        model = train_stage(tr_x, tr_m, cfg, b)
        gm = weak_stage(model, [imgs[i] for i in train_idx], tr_y, groups[train_idx], cfg)[0] if weak else {}
        preds = predict_grouped(model, gm, [imgs[i] for i in test_idx], groups[test_idx], cfg.jobs)
        r = evaluate_masks(preds, te_y)
        return {"miou": r.miou, "pixel_accuracy": r.pixel_accuracy, "mean_accuracy": r.mean_accuracy,
                "f1": r.f1, "per_class_iou": r.per_class_iou}

    steps = {
        ABLATION_STEPS[0]: run(raw, 0.0, False),
        ABLATION_STEPS[1]: run(raw, beta, False),
        ABLATION_STEPS[2]: run(enhanced, beta, False),
        ABLATION_STEPS[3]: run(enhanced, beta, True),
    }
    return {"beta": beta_report, "enhancement": enh_report, "grouping": grouping, "steps": steps}


def weak_learning_retention(images, masks, groups, target_group, cfg: PipelineConfig | None = None, beta=None):
    """Per-group test pixel accuracy before and after weak learning on ``target_group``.

    The base model is trained on the stratified train split of all groups;
    the fine-tune uses only the target group's training images.
    """
    cfg = cfg or PipelineConfig()
    groups = np.asarray(groups)
    train_idx, test_idx, _ = split_stage(masks, groups, cfg)
    tr_x = [images[i] for i in train_idx]
    tr_y = [masks[i] for i in train_idx]
    b = cfg["train"]["beta"] if beta is None else beta
    model = train_stage(tr_x, tr_y, cfg, b)
    tgt = [i for i in train_idx if groups[i] == target_group]
    t = cfg["train"]
    tuned = weak_learn(model, [images[i] for i in tgt], [masks[i] for i in tgt],
                       weak_lr=t["weak_lr"], max_iters=t["weak_iters"], seed=cfg.seed + 1)
    out = {"weak_report": tuned.weak_report_, "groups": {}}
    for g in np.unique(groups):
        idx = [i for i in test_idx if groups[i] == g]
        x = [images[i] for i in idx]
        y = [masks[i] for i in idx]
        if not idx:
            out["groups"][int(g)] = {"before": None, "after": None, "n_test": 0}
            continue
        out["groups"][int(g)] = {"before": model.score(x, y), "after": tuned.score(x, y), "n_test": len(idx)}
    return out
