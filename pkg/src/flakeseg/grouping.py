"""Background-color grouping: k-means++ on per-image mean chroma."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.metrics import silhouette_score

from .imagecore import rgb_to_ycbcr, Record


def chroma_features(img):
    """Mean (Cb, Cr) of an RGB image."""
    ycc = rgb_to_ycbcr(img).astype(np.float64)
    return np.array([ycc[..., 1].mean(), ycc[..., 2].mean()])


def _sqdist(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeanspp_seed(points, k, seed=0):
    """k-means++ seeding: first center uniform, then proportional to squared distance."""
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = len(np.unique(points, axis=0))
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the {n_distinct} distinct points")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = [points[rng.integers(len(points))]]
    d2 = _sqdist(points, np.array(centers))[:, 0]
    for _ in range(1, k):
        idx = int(rng.choice(len(points), p=d2 / d2.sum()))
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


@dataclass
class Grouping:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    inertia_history: list
    n_iter: int

    def to_dict(self):
        return {"k": self.k, "centroids": self.centroids.tolist(),
                "assignment": self.assignment.tolist(), "inertia": self.inertia}


def kmeans_cluster(points, k, seed=0, max_iters=300, tol=1e-6):
    """Lloyd iterations from k-means++ seeds.

    An emptied cluster is re-seeded at the point farthest from its current centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = kmeanspp_seed(points, k, seed)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        d2 = _sqdist(points, centers)
        assign = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(points)), assign].sum()))
        new = centers.copy()
        for j in range(k):
            members = points[assign == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(len(points)), assign]))
                new[j] = points[far]
                assign[far] = j
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol:
            break
    d2 = _sqdist(points, centers)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(points)), assign].sum())
    history.append(inertia)
    return Grouping(k, centers, assign, inertia, history, n_iter)


def select_k(points, k_range=range(2, 9), seed=0):
    """k with the highest mean silhouette; returns ``(k, grouping, silhouette)``."""
    points = np.asarray(points, dtype=np.float64)
    n_distinct = len(np.unique(points, axis=0))
    best = None
    for k in k_range:
        if k > n_distinct or k >= len(points):
            break
        g = kmeans_cluster(points, k, seed)
        if len(np.unique(g.assignment)) < 2:
            continue
        s = float(silhouette_score(points, g.assignment))
        if best is None or s > best[2]:
            best = (k, g, s)
    if best is None:
        g = kmeans_cluster(points, 1, seed)
        return 1, g, None
    return best


class ChromaKMeans(BaseEstimator, ClusterMixin):
    """Cluster RGB images by mean chroma.  ``n_clusters=None`` picks k by silhouette."""

    def __init__(self, n_clusters=None, k_range=(2, 8), max_iters=300, tol=1e-6, random_state=0):
        self.n_clusters = n_clusters
        self.k_range = k_range
        self.max_iters = max_iters
        self.tol = tol
        self.random_state = random_state

    def _points(self, X):
        X = list(X)
        if len(X) and np.asarray(X[0]).ndim == 3:
            return np.array([chroma_features(x) for x in X])
        return np.asarray(X, dtype=np.float64).reshape(len(X), -1)

    def fit(self, X, y=None):
        pts = self._points(X)
        if self.n_clusters is None:
            lo, hi = self.k_range
            k, grouping, sil = select_k(pts, range(lo, hi + 1), self.random_state)
        else:
            grouping = kmeans_cluster(pts, self.n_clusters, self.random_state, self.max_iters, self.tol)
            k = self.n_clusters
            sil = (float(silhouette_score(pts, grouping.assignment))
                   if 1 < len(np.unique(grouping.assignment)) < len(pts) else None)
        self.grouping_ = grouping
        self.n_clusters_ = k
        self.cluster_centers_ = grouping.centroids
        self.labels_ = grouping.assignment
        self.inertia_ = grouping.inertia
        self.silhouette_ = sil
        return self

    def predict(self, X):
        return np.argmin(_sqdist(self._points(X), self.cluster_centers_), axis=1)


def assign_groups(manifest, assignment):
    """Copy of the manifest with ``group`` set from ``assignment`` (one id per record)."""
    assignment = np.asarray(assignment)
    if len(assignment) != len(manifest):
        raise ValueError(f"grouping covers {len(assignment)} images, manifest has {len(manifest)}")
    out = manifest.copy()
    for rec, g in zip(out, assignment):
        rec.group = int(g)
    return out
