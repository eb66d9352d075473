"""Segmentation evaluation: Dice index, Hausdorff distance, reward helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .errors import GridPGError, ShapeError, UndefinedDistanceError


@dataclass
class LabelMask:
    """A 2D integer label image with optional physical pixel spacing.

    ``labels`` is row-major with shape (height, width); spacing is
    (row_mm, col_mm) and defaults to pixel units.
    """

    width: int
    height: int
    labels: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim == 1:
            if arr.size != self.height * self.width:
                raise ShapeError(
                    f"{arr.size} labels do not fill a {self.height}x{self.width} mask"
                )
            arr = arr.reshape(self.height, self.width)
        if arr.shape != (self.height, self.width):
            raise ShapeError(
                f"labels shape {arr.shape} does not match {self.height}x{self.width}"
            )
        if arr.size and arr.min() < 0:
            raise ShapeError("class ids must be non-negative")
        self.labels = arr.astype(np.int64, copy=False)

    @classmethod
    def from_array(cls, labels, spacing=(1.0, 1.0)) -> "LabelMask":
        arr = np.asarray(labels)
        return cls(width=arr.shape[1], height=arr.shape[0], labels=arr, spacing=spacing)

    def class_points(self, class_id: int) -> np.ndarray:
        """(row, col) pixel centers of one class, scaled by spacing."""
        pts = np.argwhere(self.labels == class_id).astype(np.float64)
        pts[:, 0] *= self.spacing[0]
        pts[:, 1] *= self.spacing[1]
        return pts


def _check_pair(a: LabelMask, b: LabelMask, need_spacing: bool = False) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(
            f"mask dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    if need_spacing and a.spacing != b.spacing:
        raise ShapeError(f"mask spacings differ: {a.spacing} vs {b.spacing}")


def dice(a: LabelMask, b: LabelMask, class_id: int) -> float:
    """2|A∩B| / (|A|+|B|) over the pixels of one class.

    Both sets empty counts as perfect agreement (1.0); empty against
    nonempty is 0.0.
    """
    _check_pair(a, b)
    mask_a = a.labels == class_id
    mask_b = b.labels == class_id
    size_a = int(mask_a.sum())
    size_b = int(mask_b.sum())
    if size_a + size_b == 0:
        return 1.0
    inter = int((mask_a & mask_b).sum())
    return 2.0 * inter / (size_a + size_b)


def hausdorff(a: LabelMask, b: LabelMask, class_id: int) -> float:
    """Exact symmetric Hausdorff distance between the two class point sets.

    Euclidean distance over pixel centers scaled by spacing, so the result
    is in mm when spacing is set and in pixels otherwise. Undefined (raises)
    when either set is empty.
    """
    _check_pair(a, b, need_spacing=True)
    pts_a = a.class_points(class_id)
    pts_b = b.class_points(class_id)
    if len(pts_a) == 0 or len(pts_b) == 0:
        raise UndefinedDistanceError(
            f"class {class_id}: empty in {'first' if len(pts_a) == 0 else 'second'} mask"
        )
    forward = directed_hausdorff(pts_a, pts_b)[0]
    backward = directed_hausdorff(pts_b, pts_a)[0]
    return max(forward, backward)


def mean_class_dice(a: LabelMask, b: LabelMask, class_ids: Sequence[int]) -> float:
    """Unweighted mean of per-class Dice."""
    if not class_ids:
        raise GridPGError("class list must be nonempty")
    return sum(dice(a, b, c) for c in class_ids) / len(class_ids)


def last_k_mean(series: Sequence[float], k: int) -> float:
    """Mean of the final k entries (the reward aggregation rule)."""
    if k < 1:
        raise GridPGError(f"k must be >= 1, got {k}")
    if len(series) < k:
        raise GridPGError(f"series has {len(series)} entries, need at least {k}")
    tail = series[-k:]
    return sum(tail) / k


# Mask files: either binary PGM (P5, class ids as gray values) or the raw
# LMASK format: b"LMASK 1\n", b"<width> <height> <classes>\n", then
# width*height row-major label bytes.
LMASK_MAGIC = b"LMASK 1"


def read_mask(path, spacing=(1.0, 1.0)) -> LabelMask:
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(b"P5"):
        return _parse_pgm(data, spacing, path)
    if data.startswith(LMASK_MAGIC):
        return _parse_lmask(data, spacing, path)
    raise ShapeError(f"{path}: not a P5 PGM or LMASK file")


def write_mask(path, mask: LabelMask, fmt: str = "lmask") -> None:
    body = mask.labels.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        if fmt == "lmask":
            n_classes = int(mask.labels.max()) + 1 if mask.labels.size else 1
            fh.write(LMASK_MAGIC + b"\n")
            fh.write(f"{mask.width} {mask.height} {n_classes}\n".encode())
        elif fmt == "pgm":
            fh.write(b"P5\n")
            fh.write(f"{mask.width} {mask.height}\n255\n".encode())
        else:
            raise GridPGError(f"unknown mask format {fmt!r}")
        fh.write(body)


def _parse_lmask(data: bytes, spacing, path) -> LabelMask:
    try:
        header_end = data.index(b"\n", len(LMASK_MAGIC) + 1)
        dims = data[len(LMASK_MAGIC) + 1 : header_end].split()
        w, h, c = (int(t) for t in dims)
        body = data[header_end + 1 :]
    except (ValueError, IndexError) as exc:
        raise ShapeError(f"{path}: malformed LMASK header") from exc
    if len(body) < w * h:
        raise ShapeError(f"{path}: expected {w * h} label bytes, found {len(body)}")
    labels = np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w)
    if labels.size and labels.max() >= c:
        raise ShapeError(f"{path}: label {int(labels.max())} >= declared class count {c}")
    return LabelMask(width=w, height=h, labels=labels, spacing=spacing)


def _parse_pgm(data: bytes, spacing, path) -> LabelMask:
    # Token-based P5 parse; '#' comments allowed anywhere in the header.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ShapeError(f"{path}: truncated PGM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError as exc:
            raise ShapeError(f"{path}: bad PGM header token {data[start:pos]!r}") from exc
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval > 255:
        raise ShapeError(f"{path}: 16-bit PGM not supported (maxval {maxval})")
    body = data[pos :]
    if len(body) < w * h:
        raise ShapeError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    labels = np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w)
    return LabelMask(width=w, height=h, labels=labels, spacing=spacing)
