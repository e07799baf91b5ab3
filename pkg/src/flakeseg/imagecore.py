"""Image/mask arrays, YCbCr conversion, PNG and manifest I/O.

Images are ``uint8`` arrays of shape ``(H, W, 3)`` in RGB order, masks are
``uint8`` arrays of shape ``(H, W)`` holding class indices 0..6.  YCbCr
images use the same ``(H, W, 3)`` layout with planes ``Y, Cb, Cr``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image as PILImage

N_CLASSES = 7
CLASS_NAMES = ("background", "1L", "2L", "3L", "4-6L", "7-10L", "bulk")
MIN_SIZE = 3


class ImageFormatError(ValueError):
    """Raised when an image or mask violates the array/file contract."""


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(x):
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def check_image(img, name="image"):
    """Validate an RGB image array and return it as a ``uint8`` array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"{name}: expected shape (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    if h < MIN_SIZE or w < MIN_SIZE:
        raise ImageFormatError(f"{name}: {w}x{h} is below the {MIN_SIZE}x{MIN_SIZE} minimum")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) and not np.all(np.isfinite(arr)):
            raise ImageFormatError(f"{name}: non-finite values")
        if arr.min() < 0 or arr.max() > 255:
            raise ImageFormatError(f"{name}: intensities outside 0..255")
        arr = arr.astype(np.uint8)
    return arr


def check_mask(mask, name="mask", shape=None):
    """Validate a label mask; reports the first offending pixel as (x, y)."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ImageFormatError(f"{name}: expected shape (H, W), got {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ImageFormatError(f"{name}: dims {arr.shape} do not match image dims {tuple(shape)}")
    bad = (arr < 0) | (arr >= N_CLASSES)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise ImageFormatError(
            f"{name}: class value {arr[y, x]} at (x={x}, y={y}) outside 0..{N_CLASSES - 1}")
    return arr.astype(np.uint8, copy=False)


# full-range BT.601 (JPEG) coefficients
_FWD = np.array([[0.299, 0.587, 0.114],
                 [-0.168736, -0.331264, 0.5],
                 [0.5, -0.418688, -0.081312]])
_INV = np.array([[1.0, 0.0, 1.402],
                 [1.0, -0.344136, -0.714136],
                 [1.0, 1.772, 0.0]])


def rgb_to_ycbcr(img):
    rgb = check_image(img).astype(np.float64)
    ycc = rgb @ _FWD.T
    ycc[..., 1:] += 128.0
    return to_uint8(ycc)


def ycbcr_to_rgb(ycc):
    arr = np.asarray(ycc, dtype=np.float64).copy()
    arr[..., 1:] -= 128.0
    return to_uint8(arr @ _INV.T)


def luma(img):
    return rgb_to_ycbcr(img)[..., 0]


def resize_bilinear(img, width, height):
    """Bilinear resize using pixel-center alignment and edge clamping.

    Works on ``(H, W)`` and ``(H, W, C)`` arrays; output is rounded half away
    from zero and returned with the input dtype.
    """
    if width < MIN_SIZE or height < MIN_SIZE:
        raise ValueError(f"target size {width}x{height} below {MIN_SIZE}x{MIN_SIZE}")
    src = np.asarray(img)
    h, w = src.shape[:2]
    if (h, w) == (height, width):
        return src.copy()

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0, n_in - 1)
        lo = np.floor(c).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, c - lo

    y0, y1, fy = coords(height, h)
    x0, x1, fx = coords(width, w)
    f = src.astype(np.float64)
    if f.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = f[y0][:, x0] * (1 - fx) + f[y0][:, x1] * fx
    bot = f[y1][:, x0] * (1 - fx) + f[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(round_half_away(out), 0, 255).astype(src.dtype)


def resize_nearest(mask, width, height):
    src = np.asarray(mask)
    h, w = src.shape[:2]
    ys = np.minimum(((np.arange(height) + 0.5) * h / height).astype(int), h - 1)
    xs = np.minimum(((np.arange(width) + 0.5) * w / width).astype(int), w - 1)
    return src[ys][:, xs]


def load_image(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with PILImage.open(path) as im:
        if im.mode != "RGB":
            raise ImageFormatError(f"{path}: expected 8-bit RGB, got mode {im.mode!r}")
        arr = np.array(im)
    return check_image(arr, name=str(path))


def save_image(img, path):
    arr = check_image(img)
    _atomic_save(PILImage.fromarray(arr, mode="RGB"), path)


def load_mask(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mask not found: {path}")
    with PILImage.open(path) as im:
        if im.mode not in ("L", "P"):
            raise ImageFormatError(f"{path}: expected 8-bit single-channel mask, got mode {im.mode!r}")
        arr = np.array(im)
    if arr.shape[0] < MIN_SIZE or arr.shape[1] < MIN_SIZE:
        raise ImageFormatError(f"{path}: mask below {MIN_SIZE}x{MIN_SIZE} minimum")
    return check_mask(arr, name=str(path))


def save_mask(mask, path):
    arr = check_mask(mask)
    _atomic_save(PILImage.fromarray(arr, mode="L"), path)


def _atomic_save(pil_img, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    pil_img.save(tmp, format="PNG")
    os.replace(tmp, path)


@dataclass
class Record:
    image: str
    mask: str | None = None
    group: int | None = None
    split: str | None = None

    def to_json(self):
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          sort_keys=True)


class Manifest(list):
    """List of :class:`Record` read from / written to JSON lines.

    ``root`` is the directory relative paths are resolved against.
    """

    def __init__(self, records: Iterable[Record] = (), root="."):
        super().__init__(records)
        self.root = Path(root)
        self.validate()

    def validate(self):
        seen = set()
        for rec in self:
            if rec.image in seen:
                raise ValueError(f"duplicate image path in manifest: {rec.image}")
            seen.add(rec.image)
        return self

    def resolve(self, rel):
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def image(self, i):
        return load_image(self.resolve(self[i].image))

    def mask(self, i):
        rec = self[i]
        if rec.mask is None:
            raise ValueError(f"record {rec.image} has no mask")
        return load_mask(self.resolve(rec.mask))

    def copy(self):
        return Manifest((Record(**asdict(r)) for r in self), root=self.root)


def read_manifest(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            unknown = set(obj) - {"image", "mask", "group", "split"}
            if "image" not in obj or unknown:
                raise ValueError(f"{path}:{lineno}: bad manifest record {obj}")
            records.append(Record(**obj))
    return Manifest(records, root=path.parent)


def write_manifest(manifest, path):
    """Write records as JSON lines; relative paths are re-based onto the new location."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    root = getattr(manifest, "root", path.parent)

    def rebase(p):
        if p is None or Path(p).is_absolute():
            return p
        return os.path.relpath(Path(root) / p, path.parent)

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for rec in manifest:
            out = Record(rebase(rec.image), rebase(rec.mask), rec.group, rec.split)
            fh.write(out.to_json() + "\n")
    os.replace(tmp, path)
