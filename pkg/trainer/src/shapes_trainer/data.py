"""Synthetic 2D segmentation task: flat shapes on a noisy background.

Every sample contains one filled disk, one ring, and one axis-aligned
rectangle at random positions and sizes, each painted with its own
intensity band so the classes are learnable from appearance alone.
Generation is a pure function of the seed; the validation images are
drawn after the training images from the same stream, so the two splits
can never share a sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.utils.data import Dataset

NUM_CLASSES = 4
CLASS_NAMES = ("background", "disk", "ring", "rectangle")

# Mean pixel intensity per class; shapes get a small per-instance jitter.
_INTENSITY = {1: 0.45, 2: 0.70, 3: 0.95}


@dataclass(frozen=True)
class DataConfig:
    seed: int = 0
    image_size: int = 64
    train_size: int = 200
    val_size: int = 60
    noise: float = 0.05

    def __post_init__(self):
        if self.image_size < 16 or self.image_size % 4:
            raise ValueError(f"image_size must be a multiple of 4 and >= 16, got {self.image_size}")
        if self.train_size < 1 or self.val_size < 1:
            raise ValueError("train_size and val_size must be positive")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _paint_sample(geo: np.random.Generator, grain: np.random.Generator,
                  size: int, noise: float):
    image = np.zeros((size, size), dtype=np.float32)
    labels = np.zeros((size, size), dtype=np.int64)
    yy, xx = np.ogrid[:size, :size]

    def place(cls: int, mask: np.ndarray):
        jitter = float(geo.uniform(-0.05, 0.05))
        labels[mask] = cls
        image[mask] = _INTENSITY[cls] + jitter

    # Rectangle first, then ring, then disk: later shapes overwrite.
    rh, rw = geo.integers(size // 6, size // 3, size=2)
    ry = int(geo.integers(0, size - rh))
    rx = int(geo.integers(0, size - rw))
    rect = np.zeros_like(labels, dtype=bool)
    rect[ry:ry + rh, rx:rx + rw] = True
    place(3, rect)

    r_out = int(geo.integers(size // 8, size // 4))
    r_in = max(2, int(r_out * geo.uniform(0.45, 0.7)))
    cy, cx = geo.integers(r_out, size - r_out, size=2)
    dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
    place(2, (dist2 <= r_out**2) & (dist2 >= r_in**2))

    radius = int(geo.integers(size // 10, size // 5))
    cy, cx = geo.integers(radius, size - radius, size=2)
    place(1, (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2)

    if noise:
        image = image + grain.normal(0.0, noise, size=image.shape).astype(np.float32)
    return image.astype(np.float32), labels


def make_arrays(config: DataConfig):
    """(train_images, train_labels, val_images, val_labels) as arrays;
    images are (n, 1, H, W) float32, labels (n, H, W) int64."""
    # Geometry and pixel noise use separate streams so the noise level
    # never changes which shapes get drawn.
    geo_seed, grain_seed = np.random.SeedSequence(config.seed).spawn(2)
    geo = np.random.default_rng(geo_seed)
    grain = np.random.default_rng(grain_seed)

    def draw(n: int):
        images = np.empty((n, 1, config.image_size, config.image_size), dtype=np.float32)
        labels = np.empty((n, config.image_size, config.image_size), dtype=np.int64)
        for i in range(n):
            img, lab = _paint_sample(geo, grain, config.image_size, config.noise)
            images[i, 0] = img
            labels[i] = lab
        return images, labels

    train_images, train_labels = draw(config.train_size)
    val_images, val_labels = draw(config.val_size)
    return train_images, train_labels, val_images, val_labels


class ShapesDataset(Dataset):
    def __init__(self, images: np.ndarray, labels: np.ndarray):
        self.images = torch.from_numpy(images)
        self.labels = torch.from_numpy(labels)

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, index: int):
        return self.images[index], self.labels[index]
