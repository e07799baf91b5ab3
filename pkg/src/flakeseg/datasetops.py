"""Class-weight statistics, multi-label iterative stratification, augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .imagecore import (N_CLASSES, CLASS_NAMES, check_image, check_mask,
                        resize_bilinear, resize_nearest, to_uint8)


def class_weights(mask):
    """Fraction of pixels in each of the 7 classes."""
    mask = check_mask(mask)
    counts = np.bincount(mask.ravel(), minlength=N_CLASSES)
    return counts / counts.sum()


def dataset_stats(masks):
    """Per-class mean, median, max weight and share of images where the class is absent."""
    if len(masks) == 0:
        raise ValueError("no masks to summarize")
    w = np.array([class_weights(m) for m in masks])
    return {
        "n_images": len(masks),
        "classes": [
            {"class": k, "name": CLASS_NAMES[k],
             "mean": float(w[:, k].mean()), "median": float(np.median(w[:, k])),
             "max": float(w[:, k].max()), "zero_fraction": float(np.mean(w[:, k] == 0))}
            for k in range(N_CLASSES)
        ],
    }


def label_sets(masks):
    """Binary presence matrix ``(n_images, 7)``: class has at least one pixel."""
    return np.array([class_weights(m) > 0 for m in masks], dtype=bool)


def iterative_stratify(labels, proportions, seed=0):
    """Greedy rarest-label-first split of a multi-label set.

    ``labels`` is an ``(n, L)`` boolean presence matrix.  Returns one index
    array per entry of ``proportions``; subsets with proportion 0 stay empty.
    """
    labels = np.asarray(labels, dtype=bool)
    props = np.asarray(proportions, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise ValueError("empty manifest")
    if props.ndim != 1 or props.min() < 0 or not np.isclose(props.sum(), 1.0):
        raise ValueError("proportions must be non-negative and sum to 1")
    rng = np.random.default_rng(seed)
    n, n_labels = labels.shape
    active = props > 0
    want_total = n * props
    want = labels.sum(axis=0)[None, :] * props[:, None]  # (subsets, labels)
    subset_of = np.full(n, -1)

    def pick(scores):
        cand = np.flatnonzero(active & (scores == scores[active].max()))
        if len(cand) > 1:
            tot = want_total[cand]
            cand = cand[tot == tot.max()]
        return int(cand[0] if len(cand) == 1 else rng.choice(cand))

    while True:
        unassigned = subset_of < 0
        remaining = labels[unassigned].sum(axis=0)
        if remaining.max(initial=0) == 0:
            break
        lab = int(np.argmin(np.where(remaining > 0, remaining, np.iinfo(np.int64).max)))
        examples = np.flatnonzero(unassigned & labels[:, lab])
        for e in rng.permutation(examples):
            j = pick(want[:, lab])
            subset_of[e] = j
            want[j, labels[e]] -= 1
            want_total[j] -= 1

    for e in rng.permutation(np.flatnonzero(subset_of < 0)):
        j = pick(want_total)
        subset_of[e] = j
        want_total[j] -= 1
    return [np.flatnonzero(subset_of == j) for j in range(len(props))]


def label_deviation(labels, subsets, proportions):
    """Largest |per-class subset count - proportional target| over classes and subsets."""
    labels = np.asarray(labels, dtype=bool)
    totals = labels.sum(axis=0)
    dev = 0.0
    for idx, p in zip(subsets, proportions):
        counts = labels[idx].sum(axis=0)
        dev = max(dev, float(np.abs(counts - p * totals).max()))
    return dev


def split_report(masks, subsets, groups=None):
    """Per-subset class presence counts, pixel-weight means and their spread."""
    w = np.array([class_weights(m) for m in masks])
    pres = w > 0
    per = []
    for idx in subsets:
        entry = {"size": int(len(idx)),
                 "class_images": pres[idx].sum(axis=0).astype(int).tolist(),
                 "mean_class_weight": w[idx].mean(axis=0).tolist() if len(idx) else None}
        if groups is not None:
            g = np.asarray(groups)[idx]
            entry["groups"] = {int(k): int((g == k).sum()) for k in np.unique(g)}
        per.append(entry)
    means = np.array([e["mean_class_weight"] for e in per if e["mean_class_weight"] is not None])
    divergence = (means.max(axis=0) - means.min(axis=0)).tolist() if len(means) else []
    return {"subsets": per, "class_weight_divergence": divergence}


@dataclass
class AugmentConfig:
    input_size: tuple = (256, 256)
    resize_to: tuple = (320, 256)  # (width, height)
    crop_to: tuple = (256, 256)
    flip_prob: float = 0.5
    photometric_prob: float = 0.5
    brightness: float = 32.0
    contrast: tuple = (0.5, 1.5)
    saturation: tuple = (0.5, 1.5)
    hue: float = 18.0
    crop_origin: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.crop_to[0] > self.resize_to[0] or self.crop_to[1] > self.resize_to[1]:
            raise ValueError("crop does not fit inside the resized image")
        for p in (self.flip_prob, self.photometric_prob):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")


def _hsv_jitter(img, sat_scale, hue_shift):
    hsv = np.array(PILImage.fromarray(img, "RGB").convert("HSV"), dtype=np.float64)
    if hue_shift is not None:
        hsv[..., 0] = np.mod(hsv[..., 0] + hue_shift, 256)
    if sat_scale is not None:
        hsv[..., 1] *= sat_scale
    return np.array(PILImage.fromarray(to_uint8(hsv), "HSV").convert("RGB"))


def photometric(img, cfg: AugmentConfig, rng):
    """Brightness, contrast, saturation and hue jitter, each applied with ``photometric_prob``."""
    out = img.astype(np.float64)
    p = cfg.photometric_prob
    if rng.random() < p:
        out = out + rng.uniform(-cfg.brightness, cfg.brightness)
    if rng.random() < p:
        out = out * rng.uniform(*cfg.contrast)
    out = to_uint8(out)
    sat = rng.uniform(*cfg.saturation) if rng.random() < p else None
    hue = rng.uniform(-cfg.hue, cfg.hue) if rng.random() < p else None
    if sat is not None or hue is not None:
        out = _hsv_jitter(out, sat, hue)
    return out


def augment(img, mask, cfg: AugmentConfig | None = None, rng=None):
    """Resize, random crop, random flips (shared with the mask), then image-only jitter."""
    cfg = cfg or AugmentConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    img = check_image(img)
    mask = check_mask(mask, shape=img.shape[:2])
    if (img.shape[1], img.shape[0]) != tuple(cfg.input_size):
        raise ValueError(f"expected standardized {cfg.input_size[0]}x{cfg.input_size[1]} input, "
                         f"got {img.shape[1]}x{img.shape[0]}")
    rw, rh = cfg.resize_to
    img = resize_bilinear(img, rw, rh)
    mask = resize_nearest(mask, rw, rh)
    cw, ch = cfg.crop_to
    if cfg.crop_origin is not None:
        x0, y0 = cfg.crop_origin
    else:
        x0 = int(rng.integers(0, rw - cw + 1))
        y0 = int(rng.integers(0, rh - ch + 1))
    img = img[y0:y0 + ch, x0:x0 + cw]
    mask = mask[y0:y0 + ch, x0:x0 + cw]
    if rng.random() < cfg.flip_prob:
        img, mask = img[:, ::-1], mask[:, ::-1]
    if rng.random() < cfg.flip_prob:
        img, mask = img[::-1], mask[::-1]
    img = np.ascontiguousarray(img)
    mask = np.ascontiguousarray(mask)
    if cfg.photometric_prob > 0:
        img = photometric(img, cfg, rng)
    return img, mask
