"""Object-contextual representation head.

Shapes: features ``X`` are ``(H, W, D)``, coarse maps ``M`` are
``(H, W, K)``, region representations ``F`` are ``(K, D)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class Transform:
    """1x1 convolution, batch normalization with stored statistics, ReLU.

    ``norm`` and ``relu`` can be switched off to obtain a plain linear map.
    """

    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    bn_weight: np.ndarray | None = None
    bn_bias: np.ndarray | None = None
    eps: float = 1e-5
    norm: bool = True
    relu: bool = True

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        d = self.weight.shape[0]
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.running_mean = np.zeros(d) if self.running_mean is None else np.asarray(self.running_mean, float)
        self.running_var = np.ones(d) if self.running_var is None else np.asarray(self.running_var, float)
        self.bn_weight = np.ones(d) if self.bn_weight is None else np.asarray(self.bn_weight, float)
        self.bn_bias = np.zeros(d) if self.bn_bias is None else np.asarray(self.bn_bias, float)

    @property
    def d_in(self):
        return self.weight.shape[1]

    @property
    def d_out(self):
        return self.weight.shape[0]

    def __call__(self, x):
        out = np.asarray(x, dtype=np.float64) @ self.weight.T + self.bias
        if self.norm:
            out = (out - self.running_mean) / np.sqrt(self.running_var + self.eps)
            out = out * self.bn_weight + self.bn_bias
        if self.relu:
            out = np.maximum(out, 0.0)
        return out

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.zeros(d), norm=False, relu=False)

    @classmethod
    def linear(cls, weight, bias):
        return cls(weight, bias, norm=False, relu=False)

    @classmethod
    def random(cls, rng, d_in, d_out, norm=True, relu=True):
        return cls(rng.normal(0, 1 / np.sqrt(d_in), (d_out, d_in)), rng.normal(0, 0.1, d_out),
                   running_mean=rng.normal(0, 0.1, d_out), running_var=rng.uniform(0.5, 1.5, d_out),
                   bn_weight=rng.uniform(0.5, 1.5, d_out), bn_bias=rng.normal(0, 0.1, d_out),
                   norm=norm, relu=relu)


def object_region_repr(X, M):
    """Class region vectors: features pooled with a spatial softmax of each coarse map."""
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if X.shape[:2] != M.shape[:2]:
        raise ValueError("feature map and coarse maps differ in H x W")
    d, k = X.shape[2], M.shape[2]
    weights = softmax(M.reshape(-1, k), axis=0)  # softmax over pixels, per class
    return weights.T @ X.reshape(-1, d)


def pixel_region_relation(X, F, psi_pixel, psi_region):
    """Softmax over classes of ``<psi_pixel(x_i), psi_region(f_k)>``; shape ``(H, W, K)``."""
    X = np.asarray(X, dtype=np.float64)
    q = psi_pixel(X.reshape(-1, X.shape[2]))
    kf = psi_region(np.asarray(F, dtype=np.float64))
    if q.shape[1] != kf.shape[1]:
        raise ValueError("pixel and region transforms disagree on output size")
    return softmax(q @ kf.T, axis=1).reshape(X.shape[0], X.shape[1], -1)


def ocr_aggregate(omega, F, psi_out, psi_value=None):
    """Context per pixel: ``psi_out(sum_k omega_k * psi_value(f_k))``."""
    omega = np.asarray(omega, dtype=np.float64)
    h, w, k = omega.shape
    v = np.asarray(F, dtype=np.float64)
    if psi_value is not None:
        v = psi_value(v)
    ctx = omega.reshape(-1, k) @ v
    return psi_out(ctx).reshape(h, w, -1)


def augmented_repr(X, Y, psi_z):
    """Final per-pixel scores from concatenated backbone features and context."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[:2] != Y.shape[:2]:
        raise ValueError("features and context differ in H x W")
    cat = np.concatenate([X, Y], axis=2)
    return psi_z(cat.reshape(-1, cat.shape[2])).reshape(X.shape[0], X.shape[1], -1)


@dataclass
class OCRHead:
    psi_pixel: Transform
    psi_region: Transform
    psi_value: Transform
    psi_out: Transform
    psi_z: Transform

    def forward(self, X, M, return_all=False):
        F = object_region_repr(X, M)
        omega = pixel_region_relation(X, F, self.psi_pixel, self.psi_region)
        Y = ocr_aggregate(omega, F, self.psi_out, self.psi_value)
        Z = augmented_repr(X, Y, self.psi_z)
        if return_all:
            return {"F": F, "omega": omega, "Y": Y, "Z": Z}
        return Z

    def predict(self, X, M):
        return np.argmax(self.forward(X, M), axis=2).astype(np.uint8)

    @classmethod
    def random(cls, rng, d, k, d_key=8, d_ctx=None):
        d_ctx = d_ctx or d
        return cls(
            psi_pixel=Transform.random(rng, d, d_key),
            psi_region=Transform.random(rng, d, d_key),
            psi_value=Transform.random(rng, d, d_ctx),
            psi_out=Transform.random(rng, d_ctx, d_ctx),
            psi_z=Transform.random(rng, d + d_ctx, k, norm=True, relu=False),
        )
