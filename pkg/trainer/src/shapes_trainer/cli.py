"""Command line entry point.

Default mode speaks the one-request evaluation protocol on
stdin/stdout. `--selftest` instead builds a batch of randomly drawn
architecture descriptions, pushes tensors through them, and checks the
module tree against an independent channel walk; no training happens.
"""

from __future__ import annotations

import argparse
import sys

import torch
from torch import nn

from .data import DataConfig
from .net import build_network, conv_channel_walk
from .server import serve
from .train import TrainSettings


def _random_description(rng) -> dict:
    def layer():
        return {
            "num_filters": int(rng.integers(1, 13)) * 16,
            "filter_h": int(rng.integers(0, 6)) * 2 + 1,
            "filter_w": int(rng.integers(0, 6)) * 2 + 1,
        }

    def block():
        return {"layers": [layer() for _ in range(4)]}

    return {
        "format": "dense-encdec",
        "version": 1,
        "down_blocks": [block() for _ in range(3)],
        "poolings": [str(rng.choice(["max", "average"])) for _ in range(2)],
        "up_blocks": [block() for _ in range(3)],
        "head": {
            "num_classes": int(rng.integers(2, 6)),
            "filter_h": int(rng.integers(0, 6)) * 2 + 1,
            "filter_w": int(rng.integers(0, 6)) * 2 + 1,
        },
        "activation": {"name": "swish", "beta_init": 1.0, "beta_learnable": True},
    }


def _module_conv_rows(net: nn.Module) -> list[tuple[str, int, int]]:
    rows = []
    for name, module in net.named_modules():
        if not isinstance(module, nn.Conv2d):
            continue
        if name == "head":
            walk_name = "head"
        else:
            # blocks.{b}.layers.{l}.conv
            parts = name.split(".")
            walk_name = f"block{int(parts[1]) + 1}.layer{int(parts[3]) + 1}"
        rows.append((walk_name, module.in_channels, module.out_channels))
    head = [r for r in rows if r[0] == "head"]
    body = [r for r in rows if r[0] != "head"]
    return body + head


def run_selftest(rounds: int = 5, log=sys.stderr) -> int:
    import numpy as np

    rng = np.random.default_rng(20240817)
    for i in range(rounds):
        description = _random_description(rng)
        net = build_network(description)
        walk = conv_channel_walk(description)
        built = _module_conv_rows(net)
        if built != walk:
            print(f"selftest round {i}: module tree disagrees with walk", file=log)
            print(f"  walk : {walk}", file=log)
            print(f"  built: {built}", file=log)
            return 1
        size = int(rng.choice([16, 32, 64]))
        with torch.no_grad():
            out = net(torch.randn(2, 1, size, size))
        want = (2, description["head"]["num_classes"], size, size)
        if tuple(out.shape) != want:
            print(f"selftest round {i}: output shape {tuple(out.shape)} != {want}", file=log)
            return 1
        sums = out.sum(dim=1)
        if not torch.allclose(sums, torch.ones_like(sums), atol=1e-5):
            print(f"selftest round {i}: class probabilities do not sum to 1", file=log)
            return 1
        print(f"selftest round {i}: ok ({len(walk)} convs, {size}x{size} input)", file=log)
    print("selftest ok", file=log)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shapes-trainer",
        description="Evaluate one architecture on a synthetic shape segmentation task.",
    )
    parser.add_argument("--image-size", type=int, default=64)
    parser.add_argument("--train-size", type=int, default=200)
    parser.add_argument("--val-size", type=int, default=60)
    parser.add_argument("--data-seed", type=int, default=0,
                        help="dataset seed; keep it fixed so every candidate sees the same task")
    parser.add_argument("--noise", type=float, default=0.05)
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--selftest", action="store_true",
                        help="check network building against random descriptions and exit")
    args = parser.parse_args(argv)

    if args.selftest:
        return run_selftest()

    try:
        data_config = DataConfig(
            seed=args.data_seed,
            image_size=args.image_size,
            train_size=args.train_size,
            val_size=args.val_size,
            noise=args.noise,
        )
        settings = TrainSettings(batch_size=args.batch_size, lr=args.lr)
    except ValueError as exc:
        parser.error(str(exc))
    return serve(sys.stdin, sys.stdout, data_config, settings)


if __name__ == "__main__":
    sys.exit(main())
