"""Training loop: Adam on cross-entropy, scored by validation Dice.

The score reported for a run is the mean validation Dice over the last
few epochs rather than the final epoch alone, which damps epoch-to-epoch
jitter on small validation sets. Settings and the per-epoch series are
echoed to a log stream so a run can be audited from its transcript.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import NUM_CLASSES, ShapesDataset


@dataclass(frozen=True)
class TrainSettings:
    train_epochs: int = 50
    batch_size: int = 4
    lr: float = 1e-3
    last_k: int = 5

    def __post_init__(self):
        if self.train_epochs < 1:
            raise ValueError(f"train_epochs must be >= 1, got {self.train_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.last_k < 1:
            raise ValueError(f"last_k must be >= 1, got {self.last_k}")


def last_k_mean(values: Sequence[float], k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(values) < k:
        raise ValueError(f"need at least {k} values, got {len(values)}")
    return sum(values[-k:]) / k


def mean_foreground_dice(pred: np.ndarray, true: np.ndarray) -> float:
    """Mean Dice over classes 1..NUM_CLASSES-1, pooled over all pixels of
    all images. A class absent from both prediction and reference scores 1."""
    scores = []
    for cls in range(1, NUM_CLASSES):
        p = pred == cls
        t = true == cls
        denom = int(p.sum()) + int(t.sum())
        if denom == 0:
            scores.append(1.0)
        else:
            scores.append(2.0 * int((p & t).sum()) / denom)
    return sum(scores) / len(scores)


def train_and_score(
    net: nn.Module,
    arrays,
    settings: TrainSettings,
    seed: int,
    log: TextIO = sys.stderr,
) -> float:
    """Train `net` on the given arrays and return the run's score."""
    train_images, train_labels, val_images, val_labels = arrays
    torch.manual_seed(seed)

    loader = DataLoader(
        ShapesDataset(train_images, train_labels),
        batch_size=settings.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(seed),
    )
    val_inputs = torch.from_numpy(val_images)
    optimizer = torch.optim.Adam(net.parameters(), lr=settings.lr)
    loss_fn = nn.CrossEntropyLoss()

    print(
        f"settings batch_size={settings.batch_size} lr={settings.lr!r} "
        f"init=torch-default seed={seed}",
        file=log,
        flush=True,
    )

    series: list[float] = []
    for epoch in range(1, settings.train_epochs + 1):
        net.train()
        for images, labels in loader:
            optimizer.zero_grad()
            loss = loss_fn(net.forward_logits(images), labels)
            loss.backward()
            optimizer.step()

        net.eval()
        with torch.no_grad():
            chunks = []
            for start in range(0, val_inputs.shape[0], settings.batch_size):
                logits = net.forward_logits(val_inputs[start:start + settings.batch_size])
                chunks.append(logits.argmax(dim=1).numpy())
            pred = np.concatenate(chunks, axis=0)
        score = mean_foreground_dice(pred, val_labels)
        series.append(score)
        print(f"epoch {epoch}/{settings.train_epochs} val_dice {score!r}", file=log, flush=True)

    return last_k_mean(series, min(settings.last_k, len(series)))
