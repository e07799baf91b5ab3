"""Seeded synthetic micrographs with exact masks.

Each image is a tinted substrate with random convex flakes.  A class-k flake
multiplies the substrate tint by a per-class RGB factor, darker for thicker
classes.  Optional radial vignetting, overexposure (gain then clip at 255)
and Gaussian sensor noise follow.  Flakes are painted in increasing class
order, so thicker classes occlude thinner ones where they overlap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import (N_CLASSES, Manifest, Record, save_image, save_mask,
                        write_manifest, to_uint8)

# mean class weights of the reference dataset (background, 1L, 2L, 3L, 4-6L, 7-10L, bulk)
REFERENCE_CLASS_MEANS = (0.9199, 0.0059, 0.0177, 0.0070, 0.0068, 0.0047, 0.0381)
# share of images where each class is absent
REFERENCE_ZERO_FRACTION = (0.0, 0.7563, 0.5551, 0.5515, 0.6176, 0.7904, 0.5184)

DEFAULT_PALETTE = ((200, 172, 208), (150, 178, 214))
DEFAULT_FACTORS = (
    (0.93, 0.90, 0.94),
    (0.86, 0.80, 0.88),
    (0.79, 0.70, 0.82),
    (0.69, 0.58, 0.74),
    (0.58, 0.47, 0.66),
    (0.42, 0.45, 0.32),
)


def _luma(rgb):
    r, g, b = np.asarray(rgb, dtype=np.float64)
    return 0.299 * r + 0.587 * g + 0.114 * b


@dataclass
class SynthConfig:
    n_images: int = 20
    width: int = 256
    height: int = 256
    palette: tuple = DEFAULT_PALETTE
    class_factors: tuple = DEFAULT_FACTORS
    contrast_margin: float = 0.03
    class_profile: tuple = REFERENCE_CLASS_MEANS
    zero_fraction: tuple = REFERENCE_ZERO_FRACTION
    flakes_per_class: tuple = (1, 3)
    n_vertices: tuple = (5, 9)
    overexposure_fraction: float = 0.0
    overexposure_gain: tuple = (1.2, 1.4)
    vignetting: float = 0.0
    noise_sigma: float = 3.0
    seed: int = 0
    flakes: bool = True
    group_of: str = "random"  # or "cycle"

    def __post_init__(self):
        prof = np.asarray(self.class_profile, dtype=np.float64)
        if prof.shape != (N_CLASSES,) or prof.min() < 0:
            raise ValueError("class_profile needs 7 non-negative fractions")
        self.class_profile = tuple(prof / prof.sum())
        if len(self.class_factors) != N_CLASSES - 1:
            raise ValueError("class_factors needs one RGB factor per flake class")
        lum = [1.0] + [_luma(f) for f in self.class_factors]
        gaps = -np.diff(lum)
        if gaps.min() < self.contrast_margin:
            k = int(np.argmin(gaps)) + 1
            raise ValueError(f"class {k} luma factor within contrast margin "
                             f"{self.contrast_margin} of class {k - 1}")
        if not 0 <= self.overexposure_fraction <= 1:
            raise ValueError("overexposure_fraction must lie in [0, 1]")
        if self.width < 3 or self.height < 3:
            raise ValueError("image size below 3x3")


@dataclass
class SynthCorpus:
    images: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    groups: list = field(default_factory=list)
    overexposed: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)


def convex_polygon(rng, cx, cy, rx, ry, n_vertices):
    """Vertices of a convex polygon inscribed in a rotated ellipse (CCW order)."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, n_vertices))
    rot = rng.uniform(0, np.pi)
    x = rx * np.cos(angles)
    y = ry * np.sin(angles)
    xr = cx + x * np.cos(rot) - y * np.sin(rot)
    yr = cy + x * np.sin(rot) + y * np.cos(rot)
    return np.stack([xr, yr], axis=1)


def polygon_mask(vertices, height, width):
    """Pixels whose centers lie inside a convex CCW polygon."""
    yy, xx = np.mgrid[0:height, 0:width]
    px, py = xx + 0.5, yy + 0.5
    inside = np.ones((height, width), dtype=bool)
    v = np.asarray(vertices)
    for (x0, y0), (x1, y1) in zip(v, np.roll(v, -1, axis=0)):
        inside &= (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) >= 0
    return inside


def _render_mask(rng, cfg: SynthConfig):
    h, w = cfg.height, cfg.width
    mask = np.zeros((h, w), dtype=np.uint8)
    if not cfg.flakes:
        return mask
    area = h * w
    for k in range(1, N_CLASSES):
        present = 1.0 - cfg.zero_fraction[k]
        if present <= 0 or rng.random() >= present:
            continue
        target = cfg.class_profile[k] / present * area * rng.uniform(0.5, 1.5)
        n = int(rng.integers(cfg.flakes_per_class[0], cfg.flakes_per_class[1] + 1))
        for _ in range(n):
            a = target / n
            aspect = rng.uniform(0.5, 2.0)
            # inscribed polygons cover roughly 0.75 of their ellipse
            ry = np.sqrt(a / (0.75 * np.pi * aspect))
            rx = ry * aspect
            cx = rng.uniform(0, w)
            cy = rng.uniform(0, h)
            nv = int(rng.integers(cfg.n_vertices[0], cfg.n_vertices[1] + 1))
            mask[polygon_mask(convex_polygon(rng, cx, cy, rx, ry, nv), h, w)] = k
    return mask


def render(mask, tint, cfg: SynthConfig, rng, overexposed=False):
    """Noiseless-then-noisy render of a mask on a substrate tint."""
    h, w = mask.shape
    factors = np.vstack([np.ones(3), np.asarray(cfg.class_factors, dtype=np.float64)])
    img = np.asarray(tint, dtype=np.float64)[None, None, :] * factors[mask]
    if cfg.vignetting > 0:
        yy, xx = np.mgrid[0:h, 0:w]
        r2 = ((xx + 0.5) / w - 0.5) ** 2 + ((yy + 0.5) / h - 0.5) ** 2
        img *= (1.0 - cfg.vignetting * r2 / 0.5)[..., None]
    if overexposed:
        img *= rng.uniform(*cfg.overexposure_gain)
    if cfg.noise_sigma > 0:
        img += rng.normal(0.0, cfg.noise_sigma, img.shape)
    return to_uint8(img)


def generate_one(cfg: SynthConfig, index):
    rng = np.random.default_rng([cfg.seed, index])
    if cfg.group_of == "cycle":
        group = index % len(cfg.palette)
    else:
        group = int(rng.integers(len(cfg.palette)))
    overexposed = bool(rng.random() < cfg.overexposure_fraction)
    mask = _render_mask(rng, cfg)
    img = render(mask, cfg.palette[group], cfg, rng, overexposed)
    return img, mask, group, overexposed


def generate(cfg: SynthConfig, n_jobs=1) -> SynthCorpus:
    """Generate ``cfg.n_images`` image/mask pairs; image ``i`` uses stream ``(seed, i)``."""
    from .parallel import pmap
    corpus = SynthCorpus()
    for img, mask, group, over in pmap(lambda i: generate_one(cfg, i), range(cfg.n_images), n_jobs):
        corpus.images.append(img)
        corpus.masks.append(mask)
        corpus.groups.append(group)
        corpus.overexposed.append(over)
    return corpus


def write_corpus(corpus: SynthCorpus, out_dir):
    """Write PNGs plus ``manifest.jsonl``; returns the manifest."""
    out = Path(out_dir)
    records = []
    for i, (img, mask) in enumerate(zip(corpus.images, corpus.masks)):
        ip, mp = f"images/{i:04d}.png", f"masks/{i:04d}.png"
        save_image(img, out / ip)
        save_mask(mask, out / mp)
        records.append(Record(image=ip, mask=mp))
    manifest = Manifest(records, root=out)
    write_manifest(manifest, out / "manifest.jsonl")
    return manifest


def corpus_stats_match(masks, target_profile=None, tol=0.05):
    """True when mean per-class pixel weights are within ``tol`` of the target."""
    from .datasetops import class_weights
    target = np.asarray(REFERENCE_CLASS_MEANS if target_profile is None else target_profile)
    if len(masks) == 0:
        return False
    mean = np.mean([class_weights(m) for m in masks], axis=0)
    return bool(np.all(np.abs(mean - target) <= tol))
