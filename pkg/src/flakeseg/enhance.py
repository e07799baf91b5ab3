"""Histogram-weighted adaptive gamma correction on the negative luma plane.

The luma plane is inverted, its occupied-level histogram reweighted by a
power law, and each pixel raised to ``1 - CDF(level)``.  Chroma is never
touched; only luma changes before conversion back to RGB.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .imagecore import check_image, rgb_to_ycbcr, ycbcr_to_rgb, to_uint8

DEFAULT_ALPHA = 0.561
CHANNELS = {"R": 0, "G": 1, "B": 2}


class DegenerateHistogram(ValueError):
    """All occupied histogram bins are equally likely; nothing to redistribute."""


def negative_luma(y):
    return (255 - np.asarray(y, dtype=np.int16)).astype(np.uint8)


def intensity_pdf(plane):
    counts = np.bincount(np.asarray(plane, dtype=np.uint8).ravel(), minlength=256)
    return counts / counts.sum()


def weighting_distribution(pdf, alpha):
    """Power-law reweighting of the occupied histogram bins.

    ``PDF_max``/``PDF_min`` are taken over occupied bins; empty bins get weight 0.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    pdf = np.asarray(pdf, dtype=np.float64)
    occupied = pdf > 0
    if not occupied.any():
        raise DegenerateHistogram("empty histogram")
    pmax, pmin = pdf[occupied].max(), pdf[occupied].min()
    if pmax == pmin:
        raise DegenerateHistogram("PDF_max equals PDF_min")
    w = np.zeros_like(pdf)
    w[occupied] = pmax * ((pdf[occupied] - pmin) / (pmax - pmin)) ** alpha
    return w


def cumulative_distribution(w):
    csum = np.cumsum(np.asarray(w, dtype=np.float64))
    total = csum[-1]
    if not total > 0:
        raise DegenerateHistogram("weighting distribution sums to zero")
    # dividing by the last cumulative value keeps CDF(l_max) exactly 1
    return csum / total


def transfer_curve(cdf, l_max):
    """Output level for every input level 0..l_max."""
    levels = np.arange(l_max + 1, dtype=np.float64)
    return l_max * (levels / l_max) ** (1.0 - np.asarray(cdf)[: l_max + 1])


def gamma_transform(y_neg, cdf):
    y_neg = np.asarray(y_neg, dtype=np.uint8)
    l_max = int(y_neg.max())
    if l_max < 1:
        return y_neg.copy()
    lut = to_uint8(transfer_curve(cdf, l_max))
    return lut[y_neg]


def enhance_ycbcr(ycc, alpha=DEFAULT_ALPHA):
    """Enhance a YCbCr image; returns ``(ycc_out, degenerate)``.

    Cb/Cr planes of the output are the input planes, bit for bit.
    """
    ycc = np.asarray(ycc, dtype=np.uint8)
    y_neg = negative_luma(ycc[..., 0])
    try:
        cdf = cumulative_distribution(weighting_distribution(intensity_pdf(y_neg), alpha))
    except DegenerateHistogram:
        return ycc.copy(), True
    out = ycc.copy()
    out[..., 0] = negative_luma(gamma_transform(y_neg, cdf))
    return out, False


def enhance_image(img, alpha=DEFAULT_ALPHA, return_flag=False):
    """Adaptive gamma correction of an RGB image.

    A degenerate (e.g. constant-luma) histogram returns the input unchanged;
    pass ``return_flag=True`` to also get that flag.
    """
    img = check_image(img)
    ycc, degenerate = enhance_ycbcr(rgb_to_ycbcr(img), alpha)
    out = img.copy() if degenerate else ycbcr_to_rgb(ycc)
    return (out, degenerate) if return_flag else out


def oversaturation_index(img, channel="R"):
    """Fraction of pixels whose ``channel`` intensity exceeds 253."""
    img = check_image(img)
    c = CHANNELS[channel] if isinstance(channel, str) else int(channel)
    return float(np.mean(img[..., c] > 253))


def max_oversaturation(img):
    """Largest per-channel oversaturation index."""
    img = check_image(img)
    return float((img > 253).mean(axis=(0, 1)).max())


def enhancement_report(before, after, alpha, degenerate):
    return {
        "alpha": float(alpha),
        "degenerate": bool(degenerate),
        "oversaturation": {
            ch: {"before": oversaturation_index(before, ch),
                 "after": oversaturation_index(after, ch)}
            for ch in CHANNELS
        },
    }


class AdaptiveGammaCorrection(BaseEstimator, TransformerMixin):
    """Transformer over lists of RGB images.

    With ``tune=True``, :meth:`fit` searches ``alpha`` in ``alpha_bounds`` by
    particle swarm optimization of the mean quality score of the enhanced
    images; otherwise ``alpha`` is used as given.

    Parameters
    ----------
    alpha : float
        Exponent of the weighting distribution.
    tune : bool
        Optimize ``alpha`` during ``fit``.
    alpha_bounds : tuple of float
        Search interval for ``alpha``.
    quality_config : QualityConfig or None
        Scoring configuration; defaults when None.
    swarm_config : SwarmConfig or None
        Search settings; ``bounds`` is overwritten by ``alpha_bounds``.
    maximize : bool
        Direction of the quality objective.
    gate : float or None
        When set, only images whose largest per-channel oversaturation index
        reaches ``gate`` are tuned on and enhanced; others pass through.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, tune=False, alpha_bounds=(0.05, 10.0),
                 quality_config=None, swarm_config=None, maximize=True, gate=None):
        self.alpha = alpha
        self.tune = tune
        self.alpha_bounds = alpha_bounds
        self.quality_config = quality_config
        self.swarm_config = swarm_config
        self.maximize = maximize
        self.gate = gate

    def fit(self, X, y=None):
        if not self.tune:
            self.alpha_ = float(self.alpha)
            self.search_ = None
            return self
        from dataclasses import replace
        from .pso import SwarmConfig, optimize
        from .quality import QualityConfig, quality_score

        qcfg = self.quality_config or QualityConfig()
        images = [check_image(x) for x in X if self._selected(x)]
        if not images:
            raise ValueError("no image passes the oversaturation gate")
        yccs = [rgb_to_ycbcr(x) for x in images]

        def objective(pos):
            scores = []
            for img, ycc in zip(images, yccs):
                out, degenerate = enhance_ycbcr(ycc, float(pos[0]))
                rgb = img if degenerate else ycbcr_to_rgb(out)
                scores.append(quality_score(rgb, qcfg).score)
            return float(np.mean(scores))

        scfg = replace(self.swarm_config, bounds=[self.alpha_bounds], maximize=self.maximize) \
            if self.swarm_config is not None else \
            SwarmConfig(bounds=[self.alpha_bounds], maximize=self.maximize)
        result = optimize(objective, scfg)
        self.alpha_ = float(result.best_position[0])
        self.search_ = result
        return self

    def _selected(self, img):
        return self.gate is None or max_oversaturation(img) >= self.gate

    def transform(self, X):
        alpha = getattr(self, "alpha_", None)
        if alpha is None:
            alpha = float(self.alpha)
        return [enhance_image(x, alpha) if self._selected(x) else check_image(x).copy() for x in X]
