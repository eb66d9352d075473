"""Build a torch network from a dense encoder-decoder description.

The description is a plain dict (the "architecture" field of an
evaluation request): three down blocks, two pooling choices, three up
blocks, and a softmax conv head. Every block layer computes
conv(bn(swish(x))) where x is the block input concatenated with all
previous layer outputs in the block; the block emits only its last
layer's output. Transitions are pure resampling: stride-2 pooling on the
way down, scale-2 bilinear upsampling on the way up.
"""

from __future__ import annotations

import torch
from torch import nn

FORMAT = "dense-encdec"
VERSION = 1

DEFAULT_ACTIVATION = {"name": "swish", "beta_init": 1.0, "beta_learnable": True}


class DescriptorError(ValueError):
    """The architecture description is malformed or unsupported."""


class Swish(nn.Module):
    """x * sigmoid(beta * x) with a per-layer scalar beta."""

    def __init__(self, beta_init: float = 1.0, learnable: bool = True):
        super().__init__()
        beta = torch.tensor(float(beta_init))
        if learnable:
            self.beta = nn.Parameter(beta)
        else:
            self.register_buffer("beta", beta)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.sigmoid(self.beta * x)


class DenseLayer(nn.Module):
    """conv(bn(swish(x))); odd filter sizes keep the spatial dims."""

    def __init__(self, in_channels: int, num_filters: int, filter_h: int, filter_w: int,
                 activation: dict):
        super().__init__()
        if num_filters < 1:
            raise DescriptorError(f"num_filters must be >= 1, got {num_filters}")
        if filter_h % 2 == 0 or filter_w % 2 == 0:
            raise DescriptorError(f"filter sizes must be odd, got {filter_h}x{filter_w}")
        self.swish = Swish(
            float(activation.get("beta_init", 1.0)),
            bool(activation.get("beta_learnable", True)),
        )
        self.bn = nn.BatchNorm2d(in_channels)
        self.conv = nn.Conv2d(
            in_channels, num_filters, (filter_h, filter_w),
            padding=(filter_h // 2, filter_w // 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(self.bn(self.swish(x)))


class DenseBlock(nn.Module):
    """Four layers; layer l sees the block input plus every earlier
    layer's output; the block's output is the last layer's alone."""

    def __init__(self, in_channels: int, layer_specs: list[dict], activation: dict):
        super().__init__()
        if len(layer_specs) != 4:
            raise DescriptorError(f"a block needs 4 layers, got {len(layer_specs)}")
        layers = []
        c = in_channels
        for spec in layer_specs:
            layers.append(
                DenseLayer(
                    c, int(spec["num_filters"]),
                    int(spec["filter_h"]), int(spec["filter_w"]),
                    activation,
                )
            )
            c += int(spec["num_filters"])
        self.layers = nn.ModuleList(layers)
        self.out_channels = int(layer_specs[-1]["num_filters"])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        out = x
        for layer in self.layers:
            out = layer(torch.cat(feats, dim=1) if len(feats) > 1 else feats[0])
            feats.append(out)
        return out


def _pool(kind: str) -> nn.Module:
    if kind == "max":
        return nn.MaxPool2d(2)
    if kind == "average":
        return nn.AvgPool2d(2)
    raise DescriptorError(f"unknown pooling {kind!r}")


class DenseEncDec(nn.Module):
    """Encoder (block, pool, block, pool, block), decoder (block, up,
    block, up, block), then a plain conv head; forward returns per-pixel
    class probabilities, forward_logits the pre-softmax scores."""

    def __init__(self, description: dict, in_channels: int = 1):
        super().__init__()
        if description.get("format") != FORMAT:
            raise DescriptorError(
                f"unsupported description format {description.get('format')!r}"
            )
        if description.get("version") != VERSION:
            raise DescriptorError(
                f"unsupported description version {description.get('version')!r}"
            )
        for key in ("down_blocks", "up_blocks", "poolings", "head"):
            if key not in description:
                raise DescriptorError(f"description is missing {key!r}")
        down = description["down_blocks"]
        up = description["up_blocks"]
        poolings = description["poolings"]
        if len(down) != 3 or len(up) != 3:
            raise DescriptorError("expected 3 down blocks and 3 up blocks")
        if len(poolings) != 2:
            raise DescriptorError("expected 2 pooling choices")
        activation = description.get("activation", DEFAULT_ACTIVATION)

        blocks = []
        c = in_channels
        for spec in list(down) + list(up):
            block = DenseBlock(c, spec["layers"], activation)
            blocks.append(block)
            c = block.out_channels
        self.blocks = nn.ModuleList(blocks)
        self.pools = nn.ModuleList([_pool(p) for p in poolings])
        self.ups = nn.ModuleList(
            [nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
             for _ in range(2)]
        )
        head = description["head"]
        fh, fw = int(head["filter_h"]), int(head["filter_w"])
        if fh % 2 == 0 or fw % 2 == 0:
            raise DescriptorError(f"head filter sizes must be odd, got {fh}x{fw}")
        self.head = nn.Conv2d(
            c, int(head["num_classes"]), (fh, fw), padding=(fh // 2, fw // 2)
        )
        self.num_classes = int(head["num_classes"])
        self.in_channels = in_channels

    def forward_logits(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        if h % 4 or w % 4 or h < 4 or w < 4:
            raise DescriptorError(f"input size {h}x{w} must be a multiple of 4")
        out = self.blocks[0](x)
        out = self.pools[0](out)
        out = self.blocks[1](out)
        out = self.pools[1](out)
        out = self.blocks[2](out)
        out = self.blocks[3](out)
        out = self.ups[0](out)
        out = self.blocks[4](out)
        out = self.ups[1](out)
        out = self.blocks[5](out)
        return self.head(out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.forward_logits(x), dim=1)


def build_network(description: dict, in_channels: int = 1) -> DenseEncDec:
    """Dict in, module out; unknown top-level keys are ignored."""
    try:
        return DenseEncDec(description, in_channels=in_channels)
    except (KeyError, TypeError) as exc:
        raise DescriptorError(f"malformed architecture description: {exc!r}") from exc


def conv_channel_walk(description: dict, in_channels: int = 1) -> list[tuple[str, int, int]]:
    """(name, in_channels, out_channels) per conv, straight from the dict.

    Independent of the module tree; used to cross-check what the built
    network actually does.
    """
    rows = []
    c = in_channels
    blocks = list(description["down_blocks"]) + list(description["up_blocks"])
    for b, spec in enumerate(blocks, start=1):
        block_in = c
        grown = 0
        for l, layer in enumerate(spec["layers"], start=1):
            nf = int(layer["num_filters"])
            rows.append((f"block{b}.layer{l}", block_in + grown, nf))
            grown += nf
        c = int(spec["layers"][-1]["num_filters"])
    rows.append(("head", c, int(description["head"]["num_classes"])))
    return rows
