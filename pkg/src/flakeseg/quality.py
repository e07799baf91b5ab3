"""Noise-aware image quality: gradient richness, entropy, and sensor noise.

Score is ``A*M_gradient + B*M_entropy - C*M_noise``.  Gradients are Sobel
magnitudes of the luma plane divided by their attainable maximum
``255*sqrt(20)`` so they lie in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage

from .imagecore import check_image, rgb_to_ycbcr

SOBEL_MAX = 255.0 * math.sqrt(20.0)
NOISE_KERNEL = np.array([[1, -2, 1],
                         [-2, 4, -2],
                         [1, -2, 1]], dtype=np.float64)


@dataclass
class QualityConfig:
    lam: float = 1000.0
    gamma_act: float = 0.06
    grid: tuple = (10, 10)
    k_g: float = 1.0
    k_e: float = 1.0 / 8.0
    tau_l: float = 5.0
    tau_u: float = 250.0
    delta_hom: float | None = None  # None: mean gradient of the image
    A: float = 0.4
    B: float = 0.6
    C: float = 0.6
    noise_penalty: float = 255.0 * 3

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 0 < self.gamma_act < 1:
            raise ValueError("gamma_act must lie in (0, 1)")
        if min(self.A, self.B, self.C) < 0:
            raise ValueError("A, B, C must be non-negative")
        if not self.tau_l < self.tau_u:
            raise ValueError("tau_l must be below tau_u")
        if min(self.grid) < 1:
            raise ValueError("grid must have at least one cell per axis")


@dataclass
class QualityReport:
    m_gradient: float
    m_entropy: float
    m_noise: float
    score: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _gray(img):
    return rgb_to_ycbcr(img)[..., 0].astype(np.float64)


def gradient_magnitude(gray):
    """Sobel magnitude scaled to [0, 1]."""
    gray = np.asarray(gray, dtype=np.float64)
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    return np.hypot(gx, gy) / SOBEL_MAX


def gradient_information(g, lam, gamma_act):
    g = np.asarray(g, dtype=np.float64)
    n_g = math.log(lam * (1.0 - gamma_act) + 1.0)
    active = g > gamma_act
    out = np.zeros_like(g)
    out[active] = np.log(lam * (g[active] - gamma_act) + 1.0) / n_g
    return out


def grid_sums(values, grid):
    rows = np.array_split(np.arange(values.shape[0]), grid[0])
    cols = np.array_split(np.arange(values.shape[1]), grid[1])
    return np.array([values[np.ix_(r, c)].sum() for r in rows for c in cols])


def _gradient_from_g(g, cfg):
    cells = grid_sums(gradient_information(g, cfg.lam, cfg.gamma_act), cfg.grid)
    s = cells.std()
    if s == 0:
        return 0.0
    return float(cfg.k_g * cells.mean() / s)


def gradient_metric(img, cfg=None):
    cfg = cfg or QualityConfig()
    return _gradient_from_g(gradient_magnitude(_gray(check_image(img))), cfg)


def _entropy_from_gray(gray, k_e):
    counts = np.bincount(gray.astype(np.uint8).ravel(), minlength=256)
    p = counts[counts > 0] / counts.sum()
    return float(-k_e * np.sum(p * np.log2(p))) + 0.0


def entropy_metric(img, cfg=None):
    cfg = cfg or QualityConfig()
    return _entropy_from_gray(_gray(check_image(img)), cfg.k_e)


def noise_levels(img, cfg=None, g=None):
    """Per-channel noise sigma estimates and the valid-pixel count ``N_p``.

    Only interior pixels (full 3x3 support) that are homogeneous
    (gradient <= threshold) and well exposed (``tau_l <= luma <= tau_u``)
    contribute.
    """
    cfg = cfg or QualityConfig()
    img = check_image(img)
    gray = _gray(img)
    if g is None:
        g = gradient_magnitude(gray)
    delta = float(g.mean()) if cfg.delta_hom is None else cfg.delta_hom
    valid = (g <= delta) & (gray >= cfg.tau_l) & (gray <= cfg.tau_u)
    valid = valid[1:-1, 1:-1]
    n_p = int(valid.sum())
    if n_p == 0:
        return None, 0
    sig = []
    for j in range(3):
        resp = ndimage.correlate(img[..., j].astype(np.float64), NOISE_KERNEL, mode="reflect")
        sig.append(math.sqrt(math.pi / 2) / (6.0 * n_p) * float(np.abs(resp[1:-1, 1:-1])[valid].sum()))
    return np.array(sig), n_p


def noise_metric(img, cfg=None):
    cfg = cfg or QualityConfig()
    sig, n_p = noise_levels(img, cfg)
    return cfg.noise_penalty if n_p == 0 else float(sig.sum())


def quality_score(img, cfg=None):
    cfg = cfg or QualityConfig()
    img = check_image(img)
    gray = _gray(img)
    g = gradient_magnitude(gray)
    flags = []
    m_grad = _gradient_from_g(g, cfg)
    if m_grad == 0.0:
        flags.append("gradient_degenerate")
    m_ent = _entropy_from_gray(gray, cfg.k_e)
    sig, n_p = noise_levels(img, cfg, g=g)
    if n_p == 0:
        flags.append("noise_no_valid_pixels")
        m_noise = cfg.noise_penalty
    else:
        m_noise = float(sig.sum())
    score = cfg.A * m_grad + cfg.B * m_ent - cfg.C * m_noise
    return QualityReport(m_grad, m_ent, m_noise, float(score), flags)
