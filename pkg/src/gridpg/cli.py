"""Command-line front end: search, resume, score, describe.

Exit codes: 0 success, 2 configuration or usage errors, 3 fatal
evaluation errors mid-search, 4 bad input data (masks, policies).
Diagnostics go to stderr; data goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import architecture as arch_mod
from .architecture import (
    decode_architecture,
    count_parameters,
    expert_densecnn_policy,
    is_layout_compatible,
    propagate_shapes,
    render_architecture,
)
from .errors import (
    CheckpointError,
    ConfigError,
    EpochError,
    GridPGError,
    ShapeError,
    SpaceError,
    UndefinedDistanceError,
)
from .evaluation import (
    DEFAULT_RETRIES,
    DEFAULT_TIMEOUT,
    DEFAULT_TRAIN_EPOCHS,
    BatchEvaluator,
    evaluator_from_uri,
)
from .metrics import dice, hausdorff, read_mask
from .optimizer import (
    SearchConfig,
    SearchState,
    history_to_csv,
    load_checkpoint,
    run_search,
    save_checkpoint,
)
from .search_space import PolicyVector, SearchSpace, space_from_config

log = logging.getLogger(__name__)

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3
EXIT_DATA = 4


@dataclass
class RunConfig:
    space: SearchSpace
    search: SearchConfig
    evaluator_uri: str
    workers: int = 1
    timeout: float = DEFAULT_TIMEOUT
    retries: int = DEFAULT_RETRIES
    train_epochs: int = DEFAULT_TRAIN_EPOCHS
    num_classes: int = 4
    output_dir: str | None = None

    def cli_echo(self) -> dict:
        return {
            "evaluator": self.evaluator_uri,
            "workers": self.workers,
            "timeout": self.timeout,
            "retries": self.retries,
            "train_epochs": self.train_epochs,
            "num_classes": self.num_classes,
            "output_dir": self.output_dir,
        }


def _setup_logging():
    level_name = os.environ.get("GRIDPG_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _reject_unknown(block: dict, allowed: set[str], where: str):
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key(s) at {where}: {', '.join(unknown)}")


def _coerce(block: dict, key: str, kind, where: str, default=None):
    if key not in block:
        return default
    value = block[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}.{key} must be true or false, got {value!r}")
        return value
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}.{key} must be a string, got {value!r}")
        return value
    raise AssertionError(kind)


def parse_run_config(data: dict, source: str = "config") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source} must be an object, got {type(data).__name__}")
    _reject_unknown(
        data, {"version", "space", "search", "evaluation", "num_classes", "output_dir"}, source
    )
    version = data.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"{source}.version must be {CONFIG_VERSION}, got {version!r}")
    if "space" not in data:
        raise ConfigError(f"{source}.space is required")
    space_block = data["space"]
    if isinstance(space_block, str):
        space_block = {"preset": space_block}
    space = space_from_config(space_block)

    search_block = data.get("search", {})
    if not isinstance(search_block, dict):
        raise ConfigError(f"{source}.search must be an object")
    where = f"{source}.search"
    _reject_unknown(
        search_block,
        {"p", "max_epochs", "stop_tolerance", "stop_patience", "seed",
         "reevaluate_center", "cache_rewards"},
        where,
    )
    defaults = SearchConfig()
    search = SearchConfig(
        p=_coerce(search_block, "p", int, where, defaults.p),
        max_epochs=_coerce(search_block, "max_epochs", int, where, defaults.max_epochs),
        stop_tolerance=_coerce(search_block, "stop_tolerance", float, where, defaults.stop_tolerance),
        stop_patience=_coerce(search_block, "stop_patience", int, where, defaults.stop_patience),
        seed=_coerce(search_block, "seed", int, where, defaults.seed),
        reevaluate_center=_coerce(search_block, "reevaluate_center", bool, where, defaults.reevaluate_center),
        cache_rewards=_coerce(search_block, "cache_rewards", bool, where, defaults.cache_rewards),
    )

    eval_block = data.get("evaluation", {})
    if not isinstance(eval_block, dict):
        raise ConfigError(f"{source}.evaluation must be an object")
    where = f"{source}.evaluation"
    _reject_unknown(
        eval_block, {"evaluator", "workers", "timeout", "retries", "train_epochs"}, where
    )
    evaluator_uri = _coerce(eval_block, "evaluator", str, where)
    workers = _coerce(eval_block, "workers", int, where, 1)
    timeout = _coerce(eval_block, "timeout", float, where, DEFAULT_TIMEOUT)
    retries = _coerce(eval_block, "retries", int, where, DEFAULT_RETRIES)
    train_epochs = _coerce(eval_block, "train_epochs", int, where, DEFAULT_TRAIN_EPOCHS)
    if workers < 1:
        raise ConfigError(f"{where}.workers must be >= 1, got {workers}")
    if train_epochs < 1:
        raise ConfigError(f"{where}.train_epochs must be >= 1, got {train_epochs}")

    num_classes = _coerce(data, "num_classes", int, source, 4)
    if num_classes < 2:
        raise ConfigError(f"{source}.num_classes must be >= 2, got {num_classes}")
    output_dir = _coerce(data, "output_dir", str, source)
    return RunConfig(
        space=space,
        search=search,
        evaluator_uri=evaluator_uri,
        workers=workers,
        timeout=timeout,
        retries=retries,
        train_epochs=train_epochs,
        num_classes=num_classes,
        output_dir=output_dir,
    )


def load_run_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path}: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    return parse_run_config(data, source=path)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    search_overrides = {}
    for attr, key in (
        ("seed", "seed"), ("p", "p"), ("max_epochs", "max_epochs"),
        ("stop_tolerance", "stop_tolerance"), ("stop_patience", "stop_patience"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            search_overrides[key] = value
    for attr in ("reevaluate_center", "cache_rewards"):
        value = getattr(args, attr, None)
        if value is not None:
            search_overrides[attr] = value == "true"
    if search_overrides:
        cfg.search = replace(cfg.search, **search_overrides)
    for attr in ("workers", "timeout", "retries", "train_epochs", "num_classes"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "evaluator", None) is not None:
        cfg.evaluator_uri = args.evaluator
    if getattr(args, "output_dir", None) is not None:
        cfg.output_dir = args.output_dir
    return cfg


def _build_evaluator(cfg: RunConfig):
    if cfg.evaluator_uri is None:
        raise ConfigError("no evaluator configured (set evaluation.evaluator or --evaluator)")
    render_fn = None
    if cfg.evaluator_uri.startswith("cmd:"):
        if not is_layout_compatible(cfg.space):
            raise ConfigError(
                "cmd evaluators need a space with the block/layer layout "
                "(external trainers receive a rendered architecture)"
            )
        space, classes = cfg.space, cfg.num_classes

        def render_fn(coords):
            return render_architecture(
                decode_architecture(space, PolicyVector(tuple(coords)), classes)
            )

    single = evaluator_from_uri(
        cfg.evaluator_uri,
        cfg.space,
        timeout=cfg.timeout,
        retries=cfg.retries,
        train_epochs=cfg.train_epochs,
        render_fn=render_fn,
    )
    return BatchEvaluator(single, workers=cfg.workers)


def _write_outputs(out: Path, state: SearchState, cfg: RunConfig):
    save_checkpoint(state, out / "checkpoint.json", extra={"cli": cfg.cli_echo()})
    (out / "history.csv").write_text(history_to_csv(state.evals), encoding="utf-8")
    if state.best_policy is not None:
        best = {
            "policy_id": state.best_policy_id,
            "reward": state.best_reward,
            "coords": list(state.best_policy.coords),
            "decoded": {
                d.name: _json_value(v)
                for d, v in zip(cfg.space.dimensions, cfg.space.decode(state.best_policy))
            },
        }
        (out / "best_policy.json").write_text(
            json.dumps(best, indent=2) + "\n", encoding="utf-8"
        )
        if is_layout_compatible(cfg.space):
            rendering = render_architecture(
                decode_architecture(cfg.space, state.best_policy, cfg.num_classes)
            )
            (out / "best_architecture.json").write_text(
                json.dumps(rendering, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )


def _json_value(value):
    return value.value if hasattr(value, "value") else value


def cmd_search(args) -> int:
    try:
        if args.resume:
            state, extra = load_checkpoint(args.resume, with_extra=True)
            echo = (extra or {}).get("cli", {})
            cfg = RunConfig(
                space=state.space,
                search=state.config,
                evaluator_uri=echo.get("evaluator"),
                workers=echo.get("workers", 1),
                timeout=echo.get("timeout", DEFAULT_TIMEOUT),
                retries=echo.get("retries", DEFAULT_RETRIES),
                train_epochs=echo.get("train_epochs", DEFAULT_TRAIN_EPOCHS),
                num_classes=echo.get("num_classes", 4),
                output_dir=echo.get("output_dir"),
            )
            cfg = _apply_overrides(cfg, args)
        else:
            cfg = _apply_overrides(load_run_config(args.config), args)
            state = None
        if cfg.output_dir is None:
            raise ConfigError("no output directory (set output_dir or --output-dir)")
        evaluator = _build_evaluator(cfg)
    except (ConfigError, SpaceError, CheckpointError, GridPGError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def on_epoch(s: SearchState):
        _write_outputs(out, s, cfg)
        log.info(
            "epoch %d: best %s (%s), stall %d/%d",
            s.epoch, s.best_reward, s.best_policy_id, s.stall_count, cfg.search.stop_patience,
        )

    try:
        state = run_search(
            cfg.space, cfg.search, evaluator, initial_state=state, on_epoch=on_epoch
        )
    except EpochError as exc:
        if exc.state is not None:
            _write_outputs(out, exc.state, cfg)
        print(f"error: search aborted: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    _write_outputs(out, state, cfg)
    summary = {
        "epochs": state.epoch,
        "best_policy_id": state.best_policy_id,
        "best_reward": state.best_reward,
        "stopped_early": state.stall_count >= cfg.search.stop_patience,
        "output_dir": str(out),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _parse_class_list(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        classes = [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad class list {text!r}: {exc}") from exc
    if not classes:
        raise ConfigError("class list is empty")
    return classes


def cmd_score(args) -> int:
    try:
        spacing = None
        if args.spacing:
            parts = [float(tok) for tok in args.spacing.replace(",", " ").split()]
            if len(parts) != 2:
                raise ConfigError(f"spacing needs two numbers, got {args.spacing!r}")
            spacing = (parts[0], parts[1])
        classes = _parse_class_list(args.classes)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        kwargs = {} if spacing is None else {"spacing": spacing}
        pred = read_mask(args.pred, **kwargs)
        gt = read_mask(args.gt, **kwargs)
        if (pred.width, pred.height) != (gt.width, gt.height):
            raise ShapeError(
                f"mask dimensions differ: {pred.width}x{pred.height} vs {gt.width}x{gt.height}"
            )
        if classes is None:
            present = sorted(set(pred.labels.ravel().tolist()) | set(gt.labels.ravel().tolist()))
            classes = [c for c in present if c != 0] or present
        per_class = {}
        dices = []
        for c in classes:
            d = dice(pred, gt, c)
            dices.append(d)
            try:
                hd = hausdorff(pred, gt, c)
            except UndefinedDistanceError:
                hd = "undefined"
            per_class[str(c)] = {"dice": d, "hausdorff": hd}
        report = {
            "classes": per_class,
            "mean_dice": sum(dices) / len(dices),
            "spacing": list(pred.spacing),
        }
    except (ShapeError, SpaceError, GridPGError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _parse_input_size(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", " ").split()
    try:
        if len(parts) == 1:
            h = w = int(parts[0])
        elif len(parts) == 2:
            h, w = int(parts[0]), int(parts[1])
        else:
            raise ValueError("expected HxW")
    except ValueError as exc:
        raise ConfigError(f"bad input size {text!r}: {exc}") from exc
    return h, w


def _load_policy_arg(args, space: SearchSpace) -> PolicyVector:
    given = [
        name for name, val in (
            ("--policy", args.policy), ("--coords", args.coords),
            ("--preset-policy", args.preset_policy),
        ) if val
    ]
    if len(given) != 1:
        raise ConfigError("give exactly one of --policy, --coords, --preset-policy")
    if args.preset_policy:
        if args.preset_policy == "expert":
            return expert_densecnn_policy(space)
        if args.preset_policy == "min":
            return PolicyVector(tuple(d.x_min for d in space.dimensions))
        if args.preset_policy == "max":
            return PolicyVector(tuple(d.x_max for d in space.dimensions))
        raise ConfigError(f"unknown preset policy {args.preset_policy!r}")
    if args.coords:
        try:
            coords = tuple(int(tok) for tok in args.coords.replace(",", " ").split())
        except ValueError as exc:
            raise ConfigError(f"bad coords: {exc}") from exc
        return PolicyVector(coords)
    try:
        data = json.loads(Path(args.policy).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read policy {args.policy}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"policy {args.policy}: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    coords = data.get("coords") if isinstance(data, dict) else data
    if not isinstance(coords, list):
        raise ConfigError(f"policy {args.policy} has no coords list")
    return PolicyVector(tuple(int(c) for c in coords))


def cmd_describe(args) -> int:
    try:
        space = space_from_config({"preset": args.space})
        h, w = _parse_input_size(args.input)
    except (ConfigError, SpaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        policy = _load_policy_arg(args, space)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        space.validate(policy)
        arch = decode_architecture(space, policy, num_classes=args.classes)
        rows = propagate_shapes(arch, h, w, input_c=args.channels)
        params = count_parameters(arch, input_c=args.channels)
    except (SpaceError, ShapeError, GridPGError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.json:
        doc = {
            "architecture": render_architecture(arch),
            "input": {"height": h, "width": w, "channels": args.channels},
            "shapes": [
                {
                    "name": r.name, "kind": r.kind,
                    "in": list(r.in_shape), "out": list(r.out_shape),
                }
                for r in rows
            ],
            "parameters": params,
        }
        print(json.dumps(doc, indent=2, sort_keys=True))
        return EXIT_OK
    print(f"input: {h}x{w}x{args.channels}, classes: {args.classes}")
    print()
    print("blocks:")
    for b, block in enumerate(arch.blocks, start=1):
        kind = "down" if b <= 3 else "up"
        layers = ", ".join(
            f"{l.num_filters}@{l.filter_h}x{l.filter_w}" for l in block.layers
        )
        print(f"  block {b} ({kind}): {layers}")
    print(f"  pooling: {arch.poolings[0].value}, {arch.poolings[1].value}")
    print(f"  head: {arch.head.num_classes} classes @ {arch.head.filter_h}x{arch.head.filter_w}")
    print()
    print("shapes:")
    name_w = max(len(r.name) for r in rows)
    for r in rows:
        i = "x".join(str(v) for v in r.in_shape)
        o = "x".join(str(v) for v in r.out_shape)
        print(f"  {r.name:<{name_w}}  {r.kind:<8}  {i:>12} -> {o}")
    print()
    print(f"parameters: {params}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridpg",
        description="Grid-based policy-gradient architecture search tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_search_flags(sp, with_config: bool):
        if with_config:
            group = sp.add_mutually_exclusive_group(required=True)
            group.add_argument("--config", help="run configuration file (JSON)")
            group.add_argument("--resume", help="checkpoint to resume from")
        sp.add_argument("--evaluator", help="evaluator URI (oracle:... or cmd:...)")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--timeout", type=float)
        sp.add_argument("--retries", type=int)
        sp.add_argument("--train-epochs", dest="train_epochs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--p", type=int)
        sp.add_argument("--max-epochs", dest="max_epochs", type=int)
        sp.add_argument("--stop-tolerance", dest="stop_tolerance", type=float)
        sp.add_argument("--stop-patience", dest="stop_patience", type=int)
        sp.add_argument("--reevaluate-center", dest="reevaluate_center", choices=["true", "false"])
        sp.add_argument("--cache-rewards", dest="cache_rewards", choices=["true", "false"])
        sp.add_argument("--num-classes", dest="num_classes", type=int)
        sp.add_argument("--output-dir", dest="output_dir")

    sp = sub.add_parser("search", help="run the architecture search")
    add_search_flags(sp, with_config=True)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("resume", help="resume a checkpointed search")
    sp.add_argument("resume", metavar="checkpoint", help="checkpoint to resume from")
    add_search_flags(sp, with_config=False)
    sp.set_defaults(func=cmd_search, config=None)

    sp = sub.add_parser("score", help="score a predicted mask against ground truth")
    sp.add_argument("pred", help="predicted mask (PGM or LMASK)")
    sp.add_argument("gt", help="ground-truth mask")
    sp.add_argument("--classes", help="class ids to score, e.g. '1,2,3'")
    sp.add_argument("--spacing", help="pixel spacing 'sy,sx' (mm)")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("describe", help="decode a policy into an architecture report")
    sp.add_argument("--space", default="acdc76", help="search-space preset name")
    sp.add_argument("--policy", help="policy JSON file (coords list)")
    sp.add_argument("--coords", help="inline coords, e.g. '1 2 3 ...'")
    sp.add_argument(
        "--preset-policy", dest="preset_policy", choices=["expert", "min", "max"]
    )
    sp.add_argument("--input", default="200x200", help="input size HxW")
    sp.add_argument("--channels", type=int, default=1, help="input channels")
    sp.add_argument("--classes", type=int, default=4, help="output classes")
    sp.add_argument("--json", action="store_true", help="machine-readable output")
    sp.set_defaults(func=cmd_describe)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridPGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
