"""Discrete hyperparameter search space over affine integer grids.

Each searchable dimension maps an integer grid coordinate x to a concrete
hyperparameter value through y = slope*x + intercept. One grid step in x
is the unit perturbation; its effect on the decoded value equals the slope.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ConfigError, ShapeError, SpaceError


class DimensionKind(str, Enum):
    NUM_FILTERS = "num_filters"
    FILTER_HEIGHT = "filter_height"
    FILTER_WIDTH = "filter_width"
    POOLING = "pooling"
    CUSTOM = "custom"


class Pooling(str, Enum):
    MAX = "max"
    AVERAGE = "average"


@dataclass(frozen=True)
class DimensionSpec:
    """One searchable hyperparameter on an affine integer grid.

    The grid step ``epsilon`` is always one unit in x-space; the decoded
    effect of a single step is ``slope``.
    """

    name: str
    kind: DimensionKind
    slope: int
    intercept: int
    x_min: int
    x_max: int
    epsilon: int = 1

    def __post_init__(self):
        if self.x_min > self.x_max:
            raise SpaceError(f"dimension {self.name!r}: x_min {self.x_min} > x_max {self.x_max}")
        if self.slope == 0 and self.kind is not DimensionKind.POOLING:
            raise SpaceError(f"dimension {self.name!r}: slope must be nonzero")
        if self.epsilon != 1:
            raise SpaceError(f"dimension {self.name!r}: epsilon is fixed to one x-step")

    @property
    def x_range(self) -> int:
        return self.x_max - self.x_min

    def decode(self, x: int):
        """Map a grid coordinate to its hyperparameter value.

        Numeric kinds return slope*x + intercept; pooling returns the
        Pooling enum for the 0/1 encoding.
        """
        if not self.x_min <= x <= self.x_max:
            raise SpaceError(
                f"dimension {self.name!r}: coordinate {x} outside [{self.x_min}, {self.x_max}]"
            )
        if self.kind is DimensionKind.POOLING:
            return Pooling.MAX if self.slope * x + self.intercept == 0 else Pooling.AVERAGE
        return self.slope * x + self.intercept

    def encode(self, y: int) -> int:
        """Inverse of decode for numeric values; errors unless y is on the grid."""
        if self.kind is DimensionKind.POOLING:
            x = 0 if y in (0, Pooling.MAX) else 1 if y in (1, Pooling.AVERAGE) else None
            if x is None:
                raise SpaceError(f"dimension {self.name!r}: {y!r} is not a pooling value")
        else:
            x, rem = divmod(y - self.intercept, self.slope)
            if rem:
                raise SpaceError(f"dimension {self.name!r}: value {y} is off the grid")
        if not self.x_min <= x <= self.x_max:
            raise SpaceError(
                f"dimension {self.name!r}: value {y} decodes outside [{self.x_min}, {self.x_max}]"
            )
        return x


@dataclass(frozen=True)
class PolicyVector:
    """Grid coordinates of one policy, ordered as the space's dimensions."""

    coords: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of dimensions; immutable and safe to share."""

    dimensions: tuple[DimensionSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SpaceError(f"duplicate dimension names: {dupes}")

    @property
    def n(self) -> int:
        return len(self.dimensions)

    def validate(self, policy: PolicyVector) -> None:
        """Raise unless every coordinate is within its dimension's bounds."""
        if len(policy) != self.n:
            raise ShapeError(f"policy has {len(policy)} coordinates, space has {self.n}")
        for dim, x in zip(self.dimensions, policy.coords):
            if not dim.x_min <= x <= dim.x_max:
                raise SpaceError(
                    f"dimension {dim.name!r}: coordinate {x} outside [{dim.x_min}, {dim.x_max}]"
                )

    def decode(self, policy: PolicyVector) -> tuple:
        """Decode every coordinate; mostly useful for reports and debugging."""
        self.validate(policy)
        return tuple(d.decode(x) for d, x in zip(self.dimensions, policy.coords))


def decode_dimension(spec: DimensionSpec, x: int):
    return spec.decode(x)


def clamp_policy(space: SearchSpace, raw: Sequence[int]) -> PolicyVector:
    """Clip each coordinate into its dimension's bounds. Idempotent."""
    if len(raw) != space.n:
        raise ShapeError(f"raw vector has {len(raw)} coordinates, space has {space.n}")
    coords = tuple(
        min(max(int(x), d.x_min), d.x_max) for d, x in zip(space.dimensions, raw)
    )
    return PolicyVector(coords)


# Grid functions for the default 76-dimension CNN space: 6 dense blocks of
# 4 conv layers (filters, filter height, filter width per layer), a final
# conv with searchable height/width only, and 2 pooling-type switches.
NUM_BLOCKS = 6
LAYERS_PER_BLOCK = 4

_NF = dict(kind=DimensionKind.NUM_FILTERS, slope=16, intercept=16, x_min=1, x_max=12)
_FH = dict(kind=DimensionKind.FILTER_HEIGHT, slope=2, intercept=1, x_min=0, x_max=5)
_FW = dict(kind=DimensionKind.FILTER_WIDTH, slope=2, intercept=1, x_min=0, x_max=5)
_POOL = dict(kind=DimensionKind.POOLING, slope=1, intercept=0, x_min=0, x_max=1)


def default_paper_space() -> SearchSpace:
    """The 76-dimension search space for the dense encoder-decoder CNN.

    Order is block-major, layer-minor with (NF, FH, FW) per conv layer,
    then the final layer's (FH, FW), then the two pooling switches. The
    final layer's filter count is fixed to the class count and is not a
    dimension here.
    """
    dims: list[DimensionSpec] = []
    for b in range(1, NUM_BLOCKS + 1):
        for l in range(1, LAYERS_PER_BLOCK + 1):
            dims.append(DimensionSpec(name=f"b{b}l{l}_nf", **_NF))
            dims.append(DimensionSpec(name=f"b{b}l{l}_fh", **_FH))
            dims.append(DimensionSpec(name=f"b{b}l{l}_fw", **_FW))
    dims.append(DimensionSpec(name="head_fh", **_FH))
    dims.append(DimensionSpec(name="head_fw", **_FW))
    dims.append(DimensionSpec(name="pool1", **_POOL))
    dims.append(DimensionSpec(name="pool2", **_POOL))
    return SearchSpace(tuple(dims))


PRESETS = {"acdc76": default_paper_space}


def space_from_config(block: dict) -> SearchSpace:
    """Build a space from the config file's search-space block.

    Accepts either {"preset": "acdc76"} or {"dimensions": [{...}, ...]}
    with per-dimension name/kind/slope/intercept/x_min/x_max keys.
    """
    if "preset" in block:
        name = block["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown space preset {name!r}; known: {sorted(PRESETS)}")
        return PRESETS[name]()
    if "dimensions" not in block:
        raise ConfigError("space block needs either 'preset' or 'dimensions'")
    dims = []
    required = {"name", "kind", "slope", "intercept", "x_min", "x_max"}
    for i, d in enumerate(block["dimensions"]):
        missing = required - d.keys()
        if missing:
            raise ConfigError(f"space.dimensions[{i}]: missing keys {sorted(missing)}")
        unknown = d.keys() - required
        if unknown:
            raise ConfigError(f"space.dimensions[{i}]: unknown keys {sorted(unknown)}")
        try:
            kind = DimensionKind(d["kind"])
        except ValueError:
            raise ConfigError(
                f"space.dimensions[{i}]: unknown kind {d['kind']!r}"
            ) from None
        dims.append(
            DimensionSpec(
                name=d["name"],
                kind=kind,
                slope=int(d["slope"]),
                intercept=int(d["intercept"]),
                x_min=int(d["x_min"]),
                x_max=int(d["x_max"]),
            )
        )
    return SearchSpace(tuple(dims))


def space_to_config(space: SearchSpace) -> dict:
    """Inverse of space_from_config's inline form (used by checkpoints)."""
    return {
        "dimensions": [
            {
                "name": d.name,
                "kind": d.kind.value,
                "slope": d.slope,
                "intercept": d.intercept,
                "x_min": d.x_min,
                "x_max": d.x_max,
            }
            for d in space.dimensions
        ]
    }
