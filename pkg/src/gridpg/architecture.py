"""Decoding policies into dense encoder-decoder architectures.

The network is six dense blocks of four conv layers each: a down path of
three blocks with two stride-2 pooling transitions between them, then an
up path of three blocks with two scale-2 bilinear upsampling transitions,
closed by a plain convolution + softmax head. Inside a block, layer l
consumes the channel concatenation of the block input and the outputs of
layers 1..l-1; the block's output is the output of its fourth layer only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import LayoutError, ShapeError, SpaceError
from .search_space import (
    LAYERS_PER_BLOCK,
    NUM_BLOCKS,
    DimensionKind,
    PolicyVector,
    Pooling,
    SearchSpace,
)

RENDER_FORMAT = "dense-encdec"
RENDER_VERSION = 1

SWISH_BETA_INIT = 1.0


@dataclass(frozen=True)
class LayerSpec:
    """One conv layer inside a dense block: conv + batch norm + Swish.

    Swish is x*sigmoid(beta*x) with one learnable beta per layer,
    initialized to 1.0.
    """

    num_filters: int
    filter_h: int
    filter_w: int
    activation: str = "swish"
    has_batch_norm: bool = True

    def __post_init__(self):
        if self.num_filters < 1:
            raise SpaceError(f"num_filters must be >= 1, got {self.num_filters}")
        for name, v in (("filter_h", self.filter_h), ("filter_w", self.filter_w)):
            if v < 1 or v % 2 == 0:
                raise SpaceError(f"{name} must be odd and >= 1, got {v}")


@dataclass(frozen=True)
class DenseBlockSpec:
    layers: tuple[LayerSpec, LayerSpec, LayerSpec, LayerSpec]

    def __post_init__(self):
        if len(self.layers) != LAYERS_PER_BLOCK:
            raise ShapeError(f"dense block needs {LAYERS_PER_BLOCK} layers, got {len(self.layers)}")
        object.__setattr__(self, "layers", tuple(self.layers))


@dataclass(frozen=True)
class HeadSpec:
    """Final convolution + softmax; filter count fixed to the class count."""

    num_classes: int
    filter_h: int
    filter_w: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise SpaceError(f"num_classes must be >= 1, got {self.num_classes}")
        for name, v in (("filter_h", self.filter_h), ("filter_w", self.filter_w)):
            if v < 1 or v % 2 == 0:
                raise SpaceError(f"{name} must be odd and >= 1, got {v}")


@dataclass(frozen=True)
class ArchDescriptor:
    down_blocks: tuple[DenseBlockSpec, DenseBlockSpec, DenseBlockSpec]
    poolings: tuple[Pooling, Pooling]
    up_blocks: tuple[DenseBlockSpec, DenseBlockSpec, DenseBlockSpec]
    head: HeadSpec

    def __post_init__(self):
        for name, blocks in (("down_blocks", self.down_blocks), ("up_blocks", self.up_blocks)):
            if len(blocks) != 3:
                raise ShapeError(f"{name} needs 3 blocks, got {len(blocks)}")
        if len(self.poolings) != 2:
            raise ShapeError(f"poolings needs 2 entries, got {len(self.poolings)}")
        object.__setattr__(self, "down_blocks", tuple(self.down_blocks))
        object.__setattr__(self, "poolings", tuple(self.poolings))
        object.__setattr__(self, "up_blocks", tuple(self.up_blocks))

    @property
    def blocks(self) -> tuple[DenseBlockSpec, ...]:
        return self.down_blocks + self.up_blocks


# Expected dimension-kind layout, in policy order: (NF, FH, FW) per conv
# layer of the six blocks, then the head's FH/FW, then the two poolings.
def _expected_kinds() -> list[DimensionKind]:
    kinds = []
    for _ in range(NUM_BLOCKS * LAYERS_PER_BLOCK):
        kinds += [DimensionKind.NUM_FILTERS, DimensionKind.FILTER_HEIGHT, DimensionKind.FILTER_WIDTH]
    kinds += [DimensionKind.FILTER_HEIGHT, DimensionKind.FILTER_WIDTH]
    kinds += [DimensionKind.POOLING, DimensionKind.POOLING]
    return kinds


def check_layout(space: SearchSpace) -> None:
    """Raise LayoutError unless the space matches the decoder's layout."""
    expected = _expected_kinds()
    if space.n != len(expected):
        raise LayoutError(
            f"space has {space.n} dimensions; architecture layout needs {len(expected)}"
        )
    for dim, kind in zip(space.dimensions, expected):
        if dim.kind is not kind:
            raise LayoutError(
                f"dimension {dim.name!r} has kind {dim.kind.value!r}; expected {kind.value!r}"
            )


def is_layout_compatible(space: SearchSpace) -> bool:
    try:
        check_layout(space)
    except LayoutError:
        return False
    return True


def decode_architecture(
    space: SearchSpace, policy: PolicyVector, num_classes: int = 4
) -> ArchDescriptor:
    """Decode a policy into a full architecture descriptor.

    The space must follow the standard layout (the acdc76 preset or any
    space with the same kind pattern).
    """
    check_layout(space)
    space.validate(policy)
    values = [d.decode(x) for d, x in zip(space.dimensions, policy.coords)]

    blocks = []
    i = 0
    for _ in range(NUM_BLOCKS):
        layers = []
        for _ in range(LAYERS_PER_BLOCK):
            nf, fh, fw = values[i], values[i + 1], values[i + 2]
            layers.append(LayerSpec(num_filters=nf, filter_h=fh, filter_w=fw))
            i += 3
        blocks.append(DenseBlockSpec(tuple(layers)))
    head = HeadSpec(num_classes=num_classes, filter_h=values[i], filter_w=values[i + 1])
    poolings = (values[i + 2], values[i + 3])
    return ArchDescriptor(
        down_blocks=tuple(blocks[:3]),
        poolings=poolings,
        up_blocks=tuple(blocks[3:]),
        head=head,
    )


def encode_architecture(space: SearchSpace, arch: ArchDescriptor) -> PolicyVector:
    """Inverse of decode_architecture; errors if a value is off the grid."""
    check_layout(space)
    values: list = []
    for block in arch.blocks:
        for layer in block.layers:
            values += [layer.num_filters, layer.filter_h, layer.filter_w]
    values += [arch.head.filter_h, arch.head.filter_w]
    values += list(arch.poolings)
    coords = tuple(d.encode(v) for d, v in zip(space.dimensions, values))
    return PolicyVector(coords)


@dataclass(frozen=True)
class ShapeRow:
    """One entry of the shape table: a conv layer or a transition."""

    name: str
    kind: str  # "conv", "pool", "upsample", "head"
    in_shape: tuple[int, int, int]  # (h, w, channels)
    out_shape: tuple[int, int, int]


def propagate_shapes(
    arch: ArchDescriptor, input_h: int, input_w: int, input_c: int = 1
) -> tuple[ShapeRow, ...]:
    """Walk the network and record every layer's input/output shape.

    Spatial dims halve at each pooling and double at each upsampling, so
    the input must be divisible by 4; the final output is
    input_h x input_w x num_classes.
    """
    if input_h % 4 or input_w % 4:
        raise ShapeError(
            f"input {input_h}x{input_w} must be divisible by 4 (two spatial halvings)"
        )
    if input_h < 4 or input_w < 4:
        raise ShapeError(f"input {input_h}x{input_w} too small")

    rows: list[ShapeRow] = []
    h, w, c = input_h, input_w, input_c

    def add_block(idx: int, block: DenseBlockSpec):
        nonlocal c
        block_in = c
        grown = 0
        for li, layer in enumerate(block.layers, start=1):
            c_in = block_in + grown
            rows.append(
                ShapeRow(
                    name=f"block{idx}.layer{li}",
                    kind="conv",
                    in_shape=(h, w, c_in),
                    out_shape=(h, w, layer.num_filters),
                )
            )
            grown += layer.num_filters
        c = block.layers[-1].num_filters

    for bi, block in enumerate(arch.down_blocks, start=1):
        add_block(bi, block)
        if bi < 3:
            rows.append(
                ShapeRow(
                    name=f"pool{bi}",
                    kind="pool",
                    in_shape=(h, w, c),
                    out_shape=(h // 2, w // 2, c),
                )
            )
            h, w = h // 2, w // 2
    for ui, block in enumerate(arch.up_blocks, start=1):
        add_block(3 + ui, block)
        if ui < 3:
            rows.append(
                ShapeRow(
                    name=f"upsample{ui}",
                    kind="upsample",
                    in_shape=(h, w, c),
                    out_shape=(h * 2, w * 2, c),
                )
            )
            h, w = h * 2, w * 2
    rows.append(
        ShapeRow(
            name="head",
            kind="head",
            in_shape=(h, w, c),
            out_shape=(h, w, arch.head.num_classes),
        )
    )
    return tuple(rows)


def layer_parameters(layer: LayerSpec, c_in: int) -> int:
    """Weights + bias + batch-norm affine pair per filter + the Swish beta."""
    weights = layer.num_filters * layer.filter_h * layer.filter_w * c_in
    return weights + layer.num_filters + 2 * layer.num_filters + 1


def count_parameters(arch: ArchDescriptor, input_c: int = 1) -> int:
    """Total learnable parameters; transitions contribute nothing.

    The head is a plain convolution (weights + bias, no batch norm or
    Swish) feeding the softmax.
    """
    total = 0
    c = input_c
    for block in arch.blocks:
        block_in = c
        grown = 0
        for layer in block.layers:
            total += layer_parameters(layer, block_in + grown)
            grown += layer.num_filters
        c = block.layers[-1].num_filters
    head = arch.head
    total += head.num_classes * head.filter_h * head.filter_w * c + head.num_classes
    return total


def render_architecture(arch: ArchDescriptor) -> dict:
    """Deterministic, versioned dict rendering (the trainer-protocol payload)."""
    def block_dict(block: DenseBlockSpec) -> dict:
        return {
            "layers": [
                {
                    "num_filters": l.num_filters,
                    "filter_h": l.filter_h,
                    "filter_w": l.filter_w,
                }
                for l in block.layers
            ]
        }

    return {
        "format": RENDER_FORMAT,
        "version": RENDER_VERSION,
        "down_blocks": [block_dict(b) for b in arch.down_blocks],
        "poolings": [p.value for p in arch.poolings],
        "up_blocks": [block_dict(b) for b in arch.up_blocks],
        "head": {
            "num_classes": arch.head.num_classes,
            "filter_h": arch.head.filter_h,
            "filter_w": arch.head.filter_w,
        },
        "activation": {"name": "swish", "beta_init": SWISH_BETA_INIT, "beta_learnable": True},
    }


def render_architecture_text(arch: ArchDescriptor) -> str:
    """Canonical single-line JSON rendering; byte-identical for equal archs."""
    import json

    return json.dumps(render_architecture(arch), sort_keys=True, separators=(",", ":"))


def parse_architecture(data: dict) -> ArchDescriptor:
    """Inverse of render_architecture; unknown fields are ignored."""
    if data.get("format") != RENDER_FORMAT:
        raise ShapeError(f"unknown architecture format {data.get('format')!r}")
    if data.get("version") != RENDER_VERSION:
        raise ShapeError(f"unsupported architecture version {data.get('version')!r}")

    def block_from(d: dict) -> DenseBlockSpec:
        return DenseBlockSpec(
            tuple(
                LayerSpec(
                    num_filters=l["num_filters"],
                    filter_h=l["filter_h"],
                    filter_w=l["filter_w"],
                )
                for l in d["layers"]
            )
        )

    return ArchDescriptor(
        down_blocks=tuple(block_from(b) for b in data["down_blocks"]),
        poolings=tuple(Pooling(p) for p in data["poolings"]),
        up_blocks=tuple(block_from(b) for b in data["up_blocks"]),
        head=HeadSpec(
            num_classes=data["head"]["num_classes"],
            filter_h=data["head"]["filter_h"],
            filter_w=data["head"]["filter_w"],
        ),
    )


# Hand-tuned reference network: 3x3 filters everywhere, one shared filter
# count per block (32, 64, 128, 128, 64, 32), average pooling twice.
EXPERT_GROWTH_RATES = (32, 64, 128, 128, 64, 32)


def expert_densecnn_descriptor(num_classes: int = 4) -> ArchDescriptor:
    blocks = tuple(
        DenseBlockSpec(
            tuple(LayerSpec(num_filters=nf, filter_h=3, filter_w=3) for _ in range(LAYERS_PER_BLOCK))
        )
        for nf in EXPERT_GROWTH_RATES
    )
    return ArchDescriptor(
        down_blocks=blocks[:3],
        poolings=(Pooling.AVERAGE, Pooling.AVERAGE),
        up_blocks=blocks[3:],
        head=HeadSpec(num_classes=num_classes, filter_h=3, filter_w=3),
    )


def expert_densecnn_policy(space: SearchSpace, num_classes: int = 4) -> PolicyVector:
    return encode_architecture(space, expert_densecnn_descriptor(num_classes))
