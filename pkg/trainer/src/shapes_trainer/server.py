"""One-shot evaluation service speaking JSON lines over stdin/stdout.

The process reads exactly one request line, answers with exactly one
response line, and exits. A request that cannot be parsed at all earns
an error response and a nonzero exit; a request that parses but fails
validation or training earns an error response carrying the policy id,
which the caller treats as a final verdict for that candidate.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import traceback
from typing import TextIO

import torch

from .data import DataConfig, make_arrays
from .net import build_network
from .train import TrainSettings, train_and_score

PROTOCOL_VERSION = 1


def _error(policy_id, message: str) -> dict:
    response: dict = {"type": "error", "message": message}
    if policy_id is not None:
        response["policy_id"] = policy_id
    return response


def _validate(request: dict):
    """Returns (policy_id, train_epochs, trainer_seed, architecture) or
    raises ValueError. Unknown fields are ignored."""
    if request.get("type") != "evaluate":
        raise ValueError(f"unsupported request type {request.get('type')!r}")
    version = request.get("protocol_version")
    if version != PROTOCOL_VERSION:
        raise ValueError(f"unsupported protocol_version {version!r}")
    policy_id = request.get("policy_id")
    if not isinstance(policy_id, str) or not policy_id:
        raise ValueError("policy_id must be a non-empty string")
    train_epochs = request.get("train_epochs")
    if not isinstance(train_epochs, int) or isinstance(train_epochs, bool) or train_epochs < 1:
        raise ValueError(f"train_epochs must be a positive integer, got {train_epochs!r}")
    trainer_seed = request.get("trainer_seed")
    if not isinstance(trainer_seed, int) or isinstance(trainer_seed, bool) or trainer_seed < 0:
        raise ValueError(f"trainer_seed must be a non-negative integer, got {trainer_seed!r}")
    architecture = request.get("architecture")
    if not isinstance(architecture, dict):
        raise ValueError("request carries no architecture object")
    return policy_id, train_epochs, trainer_seed, architecture


def handle_request(
    line: str,
    data_config: DataConfig,
    settings: TrainSettings,
    log: TextIO = sys.stderr,
):
    """Process one request line. Returns (response dict, exit code)."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return _error(None, f"unparseable request: {exc}"), 1
    if not isinstance(request, dict):
        return _error(None, "request must be a JSON object"), 1

    policy_id = request.get("policy_id")
    policy_id = policy_id if isinstance(policy_id, str) else None
    try:
        policy_id, train_epochs, trainer_seed, architecture = _validate(request)
    except ValueError as exc:
        return _error(policy_id, str(exc)), 0

    try:
        # Seed before construction: parameter init must depend only on
        # the request, not on interpreter history.
        torch.manual_seed(trainer_seed)
        net = build_network(architecture)
    except Exception as exc:
        # DescriptorError for layout problems, library errors for the rest
        # (e.g. a zero filter count rejected by the conv constructor).
        summary = traceback.format_exception_only(type(exc), exc)[-1].strip()
        return _error(policy_id, f"bad architecture: {summary}"), 0

    try:
        arrays = make_arrays(data_config)
        run_settings = dataclasses.replace(settings, train_epochs=train_epochs)
        reward = train_and_score(net, arrays, run_settings, seed=trainer_seed, log=log)
    except Exception as exc:
        summary = traceback.format_exception_only(type(exc), exc)[-1].strip()
        return _error(policy_id, f"training failed: {summary}"), 0

    return {"type": "result", "policy_id": policy_id, "reward": reward}, 0


def serve(
    stdin: TextIO,
    stdout: TextIO,
    data_config: DataConfig,
    settings: TrainSettings,
    log: TextIO = sys.stderr,
) -> int:
    line = stdin.readline()
    if not line.strip():
        response, code = _error(None, "empty request"), 1
    else:
        response, code = handle_request(line, data_config, settings, log=log)
    print(json.dumps(response), file=stdout, flush=True)
    return code
