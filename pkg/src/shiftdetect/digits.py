"""Procedural handwritten-digit-style corpus for demos and desk-scale runs.

Digits are rendered from seven-segment stroke templates with per-sample
jitter (rotation, translation, zoom, stroke width, brightness, pixel
noise), giving a deterministic labeled image dataset with MNIST-like
geometry (28x28x1, 10 classes) without bundling or downloading anything.
"""

from __future__ import annotations

import numpy as np

from .data import DataSplit, TensorDataset
from .shifts import affine_transform_image

# Segment endpoints in a unit box (x0, y0, x1, y1), y growing downward.
_SEGMENTS = {
    "A": (0.15, 0.05, 0.85, 0.05),
    "B": (0.85, 0.05, 0.85, 0.50),
    "C": (0.85, 0.50, 0.85, 0.95),
    "D": (0.15, 0.95, 0.85, 0.95),
    "E": (0.15, 0.50, 0.15, 0.95),
    "F": (0.15, 0.05, 0.15, 0.50),
    "G": (0.15, 0.50, 0.85, 0.50),
}

_DIGIT_SEGMENTS = {
    0: "ABCDEF", 1: "BC", 2: "ABGED", 3: "ABCDG", 4: "FGBC",
    5: "AFGCD", 6: "AFGEDC", 7: "ABC", 8: "ABCDEFG", 9: "ABCDFG",
}

IMAGE_SIZE = 28


def _render_strokes(digit: int, size: int, radius: float, brightness: float) -> np.ndarray:
    """Anti-aliased strokes: pixel value falls off linearly at the edge."""
    margin_x, span_x = size * 0.25, size * 0.5
    margin_y, span_y = size * 0.15, size * 0.7
    ys, xs = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    canvas = np.zeros((size, size))
    for name in _DIGIT_SEGMENTS[digit]:
        x0, y0, x1, y1 = _SEGMENTS[name]
        ax, ay = margin_x + x0 * span_x, margin_y + y0 * span_y
        bx, by = margin_x + x1 * span_x, margin_y + y1 * span_y
        vx, vy = bx - ax, by - ay
        length_sq = vx * vx + vy * vy
        t = np.clip(((xs - ax) * vx + (ys - ay) * vy) / length_sq, 0.0, 1.0)
        dist = np.hypot(xs - (ax + t * vx), ys - (ay + t * vy))
        canvas = np.maximum(canvas, np.clip(radius + 0.5 - dist, 0.0, 1.0))
    return np.clip(canvas * brightness, 0.0, 1.0)


def make_digits(n: int, seed: int = 0, size: int = IMAGE_SIZE,
                rotation_offsets: dict[int, float] | None = None,
                noise_sigma: float = 0.03) -> TensorDataset:
    """Generate n labeled digit images with randomized style and pose.

    rotation_offsets adds a systematic per-class rotation bias on top of
    the random jitter, which is how a deliberately non-iid subpopulation
    can be produced (all other style draws stay identically distributed).
    """
    rotation_offsets = rotation_offsets or {}
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, size, size, 1))
    for i in range(n):
        digit = int(labels[i])
        radius = rng.uniform(0.9, 1.6)
        brightness = rng.uniform(0.75, 1.0)
        base = _render_strokes(digit, size, radius, brightness)[..., None]
        angle = rng.uniform(-12.0, 12.0) + rotation_offsets.get(digit, 0.0)
        trans = (rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06))
        zoom = rng.uniform(0.95, 1.15)
        jittered = affine_transform_image(base, angle, trans, zoom)
        noisy = jittered + rng.normal(0.0, noise_sigma, size=jittered.shape)
        images[i] = np.clip(noisy, 0.0, 1.0)
    return TensorDataset(images, labels, 10)


def make_benchmark_split(n_train: int, n_val: int, n_test: int, seed: int = 0,
                         skewed_class: int | None = None,
                         skew_rotation_deg: float = 8.0) -> DataSplit:
    """Train/val/test corpus, optionally with a non-iid canonical split.

    With skewed_class set, the training part draws that class with a
    systematic rotation bias while val/test do not, mimicking a dataset
    whose shipped split is not a random partition of one pool. With
    skewed_class=None all three parts are iid draws from the same process.
    """
    offsets = {skewed_class: skew_rotation_deg} if skewed_class is not None else None
    train = make_digits(n_train, seed=seed, rotation_offsets=offsets)
    val = make_digits(n_val, seed=seed + 1)
    test = make_digits(n_test, seed=seed + 2)
    return DataSplit(train=train, val=val, test=test, seed=seed)
