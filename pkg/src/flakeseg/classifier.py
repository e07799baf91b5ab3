"""Per-pixel softmax classifier over hand-crafted color features.

Features (12 per pixel): RGB, YCbCr, and the 3x3 local mean and standard
deviation of each YCbCr plane, all scaled by 1/255.  Training is minibatch
SGD with momentum and weight decay on the class-weighted cross-entropy;
each minibatch draws ``batch_size`` images and uses a fixed random subset of
``pixels_per_image`` pixels from each.  The learning rate follows the
polynomial decay ``lr * (1 - t/T) ** lr_power`` unless ``lr_power=0``.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .imagecore import N_CLASSES, check_image, check_mask, rgb_to_ycbcr
from .loss import sample_weights, weighted_ce
from .ocr import softmax
from .parallel import pmap

FEATURE_SPEC = "rgb-ycbcr-local3x3-v1"
N_FEATURES = 12
MODEL_VERSION = 1


def pixel_features(img):
    """``(H, W, 12)`` float64 feature map."""
    img = check_image(img)
    ycc = rgb_to_ycbcr(img).astype(np.float64) / 255.0
    rgb = img.astype(np.float64) / 255.0
    mean = ndimage.uniform_filter(ycc, size=(3, 3, 1), mode="reflect")
    sq = ndimage.uniform_filter(ycc * ycc, size=(3, 3, 1), mode="reflect")
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    return np.concatenate([rgb, ycc, mean, std], axis=2)


def pooled_class_weights(masks):
    counts = np.zeros(N_CLASSES)
    for m in masks:
        counts += np.bincount(np.asarray(m).ravel(), minlength=N_CLASSES)
    return counts / counts.sum()


class PixelClassifier(BaseEstimator, ClassifierMixin):
    """Linear softmax model over per-pixel features, trained on image/mask lists.

    ``beta`` sets the class weighting ``(1/mu)**beta`` from the training
    masks' pooled class fractions; ``beta=0`` gives the plain cross-entropy.
    """

    def __init__(self, learning_rate=0.1, momentum=0.9, weight_decay=5e-4, batch_size=8,
                 max_iters=10000, beta=1.0, pixels_per_image=1024, lr_power=0.9, random_state=0, n_jobs=1):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_iters = max_iters
        self.beta = beta
        self.pixels_per_image = pixels_per_image
        self.lr_power = lr_power
        self.random_state = random_state
        self.n_jobs = n_jobs

    # -- data ---------------------------------------------------------------
    def _sample(self, images, masks, rng):
        if len(images) == 0:
            raise ValueError("empty training set")
        if len(images) != len(masks):
            raise ValueError("images and masks differ in count")
        seeds = rng.integers(0, 2**63 - 1, size=len(images))

        def one(args):
            img, mask, s = args
            mask = check_mask(mask, shape=np.asarray(img).shape[:2])
            feats = pixel_features(img).reshape(-1, N_FEATURES)
            idx = np.random.default_rng(s).choice(feats.shape[0], size=min(self.pixels_per_image, feats.shape[0]),
                                                  replace=False)
            return feats[idx], mask.ravel()[idx]

        out = pmap(one, list(zip(images, masks, seeds)), self.n_jobs)
        return np.stack([o[0] for o in out]), np.stack([o[1] for o in out]).astype(np.intp)

    # -- optimization -------------------------------------------------------
    def _sgd(self, X, y, lr, n_iters, rng, lr_power=0.0):
        """Momentum SGD on standardized samples; updates ``coef_``/``intercept_`` in place."""
        Xs = (X - self.feature_mean_) / self.feature_scale_
        W, b = self.coef_, self.intercept_
        vW = np.zeros_like(W)
        vb = np.zeros_like(b)
        n = Xs.shape[0]
        bs = min(self.batch_size, n)
        order = rng.permutation(n)
        pos = 0
        history, gmax = [], 0.0
        for t in range(n_iters):
            lr_t = lr * (1.0 - t / n_iters) ** lr_power
            if pos + bs > n:
                order, pos = rng.permutation(n), 0
            batch = order[pos:pos + bs]
            pos += bs
            xb = Xs[batch].reshape(-1, Xs.shape[2])
            yb = y[batch].ravel()
            probs = softmax(xb @ W + b, axis=1)
            loss, g = weighted_ce(probs, yb, self.sample_weights_)
            gW = xb.T @ g + self.weight_decay * W
            gb = g.sum(axis=0)
            gmax = max(gmax, float(np.sqrt(np.sum(gW * gW) + np.sum(gb * gb))))
            vW = self.momentum * vW + gW
            vb = self.momentum * vb + gb
            W -= lr_t * vW
            b -= lr_t * vb
            history.append(loss)
        return history, gmax

    def fit(self, X, y):
        """Train on ``X`` (list of RGB images) and ``y`` (list of masks)."""
        rng = np.random.default_rng(self.random_state)
        feats, labels = self._sample(X, y, rng)
        flat = feats.reshape(-1, N_FEATURES)
        self.feature_mean_ = flat.mean(axis=0)
        self.feature_scale_ = np.where(flat.std(axis=0) > 1e-8, flat.std(axis=0), 1.0)
        self.class_fractions_ = pooled_class_weights(y)
        self.sample_weights_ = sample_weights(self.class_fractions_, self.beta)
        self.classes_ = np.arange(N_CLASSES)
        self.coef_ = np.zeros((N_FEATURES, N_CLASSES))
        self.intercept_ = np.zeros(N_CLASSES)
        self.loss_history_, _ = self._sgd(feats, labels, self.learning_rate, self.max_iters, rng, self.lr_power)
        return self

    # -- inference ----------------------------------------------------------
    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError("PixelClassifier is not fitted")

    def decision_function(self, img):
        """Class logits ``(H, W, 7)`` for one image."""
        self._check_fitted()
        f = pixel_features(img)
        z = ((f - self.feature_mean_) / self.feature_scale_) @ self.coef_ + self.intercept_
        return z

    def predict_one(self, img):
        # argmax keeps the first maximum, so ties go to the lower class index
        return np.argmax(self.decision_function(img), axis=2).astype(np.uint8)

    def predict(self, X):
        return pmap(self.predict_one, list(X), self.n_jobs)

    def score(self, X, y):
        """Pixel accuracy over all images."""
        correct = total = 0
        for p, t in zip(self.predict(X), y):
            correct += int(np.sum(p == np.asarray(t)))
            total += p.size
        if total == 0:
            raise ValueError("no pixels to score")
        return correct / total

    # -- persistence --------------------------------------------------------
    def parameters(self):
        return np.concatenate([self.coef_.ravel(), self.intercept_])

    def to_dict(self):
        self._check_fitted()
        return {
            "version": MODEL_VERSION,
            "feature_spec": FEATURE_SPEC,
            "params": self.get_params(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_.tolist(),
            "feature_mean": self.feature_mean_.tolist(),
            "feature_scale": self.feature_scale_.tolist(),
            "class_fractions": self.class_fractions_.tolist(),
            "sample_weights": self.sample_weights_.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("feature_spec") != FEATURE_SPEC or d.get("version") != MODEL_VERSION:
            raise ValueError("unsupported model file")
        model = cls(**d["params"])
        model.coef_ = np.array(d["coef"], dtype=np.float64)
        model.intercept_ = np.array(d["intercept"], dtype=np.float64)
        model.feature_mean_ = np.array(d["feature_mean"])
        model.feature_scale_ = np.array(d["feature_scale"])
        model.class_fractions_ = np.array(d["class_fractions"])
        model.sample_weights_ = np.array(d["sample_weights"])
        model.classes_ = np.arange(N_CLASSES)
        model.loss_history_ = []
        return model

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def train(images, masks, seed=0, **params):
    return PixelClassifier(random_state=seed, **params).fit(images, masks)


def weak_learn(model: PixelClassifier, images, masks, weak_lr=1e-4, max_iters=None, seed=0):
    """Fine-tune a copy of ``model`` on one group at a near-zero learning rate.

    The rate stays constant.  Feature scaling and class weights stay those of
    the base model.  The returned copy carries ``weak_report_`` with the
    parameter displacement and its bound ``weak_lr * iters * G_max / (1 - momentum)``.
    """
    model._check_fitted()
    if len(images) == 0:
        raise ValueError("empty group")
    tuned = copy.deepcopy(model)
    iters = model.max_iters if max_iters is None else max_iters
    rng = np.random.default_rng(seed)
    theta0 = model.parameters()
    history, gmax = [], 0.0
    if weak_lr > 0 and iters > 0:
        feats, labels = tuned._sample(images, masks, rng)
        history, gmax = tuned._sgd(feats, labels, weak_lr, iters, rng)
    delta = float(np.linalg.norm(tuned.parameters() - theta0))
    tuned.loss_history_ = history
    tuned.weak_report_ = {
        "weak_lr": weak_lr,
        "iters": iters,
        "displacement": delta,
        "relative_displacement": delta / max(float(np.linalg.norm(theta0)), 1e-300),
        "g_max": gmax,
        "bound": weak_lr * iters * gmax / (1.0 - model.momentum),
    }
    return tuned
