"""Desk-scale 10-class 16x16 grayscale digit dataset.

Digits are drawn as seven-segment glyphs with random affine jitter, stroke
width, intensity and pixel noise, fully determined by the seed.

On-disk format (``<stem>`` is any path prefix):

* ``<stem>.images.u8`` raw uint8, count x 16 x 16, row-major
* ``<stem>.labels.u8`` raw uint8, count entries in 0..9
* ``<stem>.manifest.txt`` ``key=value`` lines: format, count, height, width,
  seed, and sha256 of the two binaries
"""

import hashlib
import os

import numpy as np

FORMAT = "ftdla-digits-1"
SIZE = 16

# segment endpoints in a unit box (x right, y down): a b c d e f g
_P = {"tl": (0, 0), "tr": (1, 0), "ml": (0, 1), "mr": (1, 1), "bl": (0, 2), "br": (1, 2)}
_SEG = {
    "a": ("tl", "tr"), "b": ("tr", "mr"), "c": ("mr", "br"), "d": ("bl", "br"),
    "e": ("ml", "bl"), "f": ("tl", "ml"), "g": ("ml", "mr"),
}
_DIGITS = ["abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg"]


def _segments(digit):
    out = []
    for s in _DIGITS[digit]:
        p, r = _SEG[s]
        out.append((_P[p], _P[r]))
    return np.array(out, dtype=np.float64)  # (n, 2 endpoints, xy)


def _render(digit, rng):
    seg = _segments(digit)
    # glyph box: width 1, height 2 -> pixels, centred, then jittered
    scale = rng.uniform(4.2, 5.4)
    aspect = rng.uniform(0.75, 1.15)
    rot = rng.uniform(-0.35, 0.35)
    shear = rng.uniform(-0.4, 0.4)
    tx, ty = rng.uniform(-2.2, 2.2, size=2)
    if rng.random() < 0.5:
        # one distractor stroke between two random glyph corners
        keys = list(_P)
        p, r = rng.choice(len(keys), size=2, replace=False)
        seg = np.concatenate([seg, np.array([[_P[keys[p]], _P[keys[r]]]], dtype=np.float64) * rng.uniform(0.3, 1.0)])
    pts = seg.reshape(-1, 2) - np.array([0.5, 1.0])
    pts = pts * np.array([scale * aspect, scale])
    A = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]]) @ np.array([[1, shear], [0, 1]])
    pts = pts @ A.T + np.array([SIZE / 2 - 0.5 + tx, SIZE / 2 - 0.5 + ty])
    pts = pts.reshape(-1, 2, 2)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    grid = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    a, b = pts[:, 0], pts[:, 1]
    ab = b - a
    t = ((grid[:, None, :] - a[None]) * ab[None]).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-9)[None]
    t = np.clip(t, 0.0, 1.0)
    near = a[None] + t[..., None] * ab[None]
    dist = np.sqrt(((grid[:, None, :] - near) ** 2).sum(-1)).min(axis=1)
    width = rng.uniform(0.55, 1.1)
    ink = np.clip(1.0 - (dist - width) / 0.8, 0.0, 1.0)
    img = ink * rng.uniform(150, 255) + rng.normal(0.0, 45.0, size=ink.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8).reshape(SIZE, SIZE)


def generate(count, seed=0):
    """Deterministic ``(images uint8 (n,16,16), labels uint8 (n,))``."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=count).astype(np.uint8)
    images = np.empty((count, SIZE, SIZE), dtype=np.uint8)
    for i, d in enumerate(labels):
        images[i] = _render(int(d), rng)
    return images, labels


def _sha(b):
    return hashlib.sha256(b).hexdigest()


def write_dataset(stem, images, labels, seed=None):
    images = np.ascontiguousarray(images, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    ib, lb = images.tobytes(), labels.tobytes()
    with open(stem + ".images.u8", "wb") as f:
        f.write(ib)
    with open(stem + ".labels.u8", "wb") as f:
        f.write(lb)
    meta = {
        "format": FORMAT, "count": len(labels), "height": images.shape[1], "width": images.shape[2],
        "seed": "" if seed is None else seed, "images_sha256": _sha(ib), "labels_sha256": _sha(lb),
    }
    with open(stem + ".manifest.txt", "w") as f:
        for k, v in meta.items():
            f.write(f"{k}={v}\n")
    return meta


def read_manifest(stem):
    meta = {}
    with open(stem + ".manifest.txt") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                meta[k.strip()] = v.strip()
    return meta


def read_dataset(stem, verify=True):
    meta = read_manifest(stem)
    if meta.get("format") != FORMAT:
        raise ValueError(f"{stem}: unknown dataset format {meta.get('format')!r}")
    n, h, w = int(meta["count"]), int(meta["height"]), int(meta["width"])
    with open(stem + ".images.u8", "rb") as f:
        ib = f.read()
    with open(stem + ".labels.u8", "rb") as f:
        lb = f.read()
    if verify and (_sha(ib) != meta["images_sha256"] or _sha(lb) != meta["labels_sha256"]):
        raise ValueError(f"{stem}: checksum mismatch")
    images = np.frombuffer(ib, dtype=np.uint8).reshape(n, h, w).copy()
    labels = np.frombuffer(lb, dtype=np.uint8).copy()
    return images, labels


def dataset_exists(stem):
    return all(os.path.exists(stem + ext) for ext in (".images.u8", ".labels.u8", ".manifest.txt"))
