"""Candidate evaluation: synthetic reward oracles and external trainers.

External trainers speak a one-shot wire protocol: the broker spawns one
process per evaluation, writes a single JSON request line to its stdin,
and reads a single JSON response line from its stdout. A bounded worker
pool caps how many trainer processes are alive at once.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import shlex
import subprocess
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence
from urllib.parse import parse_qsl, urlparse

import numpy as np

from .errors import ConfigError, GridPGError, ShapeError, SpaceError
from .search_space import PolicyVector, SearchSpace

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TRAIN_EPOCHS = 50
DEFAULT_TIMEOUT = 3600.0
DEFAULT_RETRIES = 1

_STDERR_SNIPPET = 2000


class Status(str, Enum):
    OK = "ok"
    FAILED = "failed"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EvaluationRequest:
    policy_id: str
    raw_policy: tuple[int, ...]
    trainer_seed: int
    train_epochs: int = DEFAULT_TRAIN_EPOCHS
    architecture: dict | None = None


@dataclass(frozen=True)
class EvaluationResult:
    policy_id: str
    status: Status
    reward: float | None = None
    diagnostics: str = ""

    def __post_init__(self):
        if self.status is Status.OK:
            if self.reward is None or not math.isfinite(self.reward) or not 0.0 <= self.reward <= 1.0:
                raise GridPGError(f"ok result needs a reward in [0,1], got {self.reward!r}")
        elif self.reward is not None:
            raise GridPGError(f"{self.status.value} result must not carry a reward")


def derive_trainer_seed(run_seed: int, epoch: int, index: int) -> int:
    """Stable 63-bit per-candidate seed; independent across candidates."""
    digest = hashlib.blake2b(
        f"{run_seed}:{epoch}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") >> 1


class OracleKind(str, Enum):
    SEPARABLE_CONCAVE = "separable_concave"
    PLATEAU = "plateau"
    NOISY = "noisy"


# Reward landscape: 1 minus the weighted L1 deviation from the target,
# normalized by the worst possible deviation, so the reward lives in [0,1]
# with its unique maximum at the target. "plateau" quantizes the base
# reward into flat steps; "noisy" is the separable landscape with a
# default noise level when none is given.
PLATEAU_STEP_DEFAULT = 0.1
NOISY_SIGMA_DEFAULT = 0.05


@dataclass(frozen=True)
class OracleSpec:
    kind: OracleKind
    target: PolicyVector
    weights: tuple[float, ...]
    noise_sigma: float = 0.0
    plateau_step: float = PLATEAU_STEP_DEFAULT

    def __post_init__(self):
        if any(w <= 0 for w in self.weights):
            raise ConfigError("oracle weights must be positive")
        if len(self.weights) != len(self.target):
            raise ConfigError(
                f"{len(self.weights)} weights for {len(self.target)} target coordinates"
            )
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")

    @property
    def effective_sigma(self) -> float:
        if self.kind is OracleKind.NOISY and self.noise_sigma == 0.0:
            return NOISY_SIGMA_DEFAULT
        return self.noise_sigma


def make_oracle_spec(
    space: SearchSpace,
    kind: OracleKind = OracleKind.SEPARABLE_CONCAVE,
    seed: int = 0,
    noise_sigma: float = 0.0,
    plateau_step: float = PLATEAU_STEP_DEFAULT,
) -> OracleSpec:
    """Draw a uniformly random in-bounds target; unit weights."""
    rng = np.random.default_rng(seed)
    lows = np.array([d.x_min for d in space.dimensions])
    highs = np.array([d.x_max for d in space.dimensions])
    target = PolicyVector(tuple(int(v) for v in rng.integers(lows, highs, endpoint=True)))
    return OracleSpec(
        kind=kind,
        target=target,
        weights=(1.0,) * space.n,
        noise_sigma=noise_sigma,
        plateau_step=plateau_step,
    )


def oracle_reward(
    spec: OracleSpec,
    space: SearchSpace,
    policy: PolicyVector,
    rng: np.random.Generator | None = None,
) -> float:
    """Evaluate the synthetic landscape; pure when the noise level is zero."""
    space.validate(policy)
    deviation = 0.0
    worst = 0.0
    for w, x, t, dim in zip(spec.weights, policy.coords, spec.target.coords, space.dimensions):
        deviation += w * abs(x - t)
        worst += w * dim.x_range
    reward = 1.0 if worst == 0.0 else 1.0 - deviation / worst
    reward = min(max(reward, 0.0), 1.0)
    if spec.kind is OracleKind.PLATEAU:
        reward = math.floor(reward / spec.plateau_step) * spec.plateau_step
    sigma = spec.effective_sigma
    if sigma > 0.0:
        if rng is None:
            raise ConfigError("noisy oracle needs an rng")
        reward = min(max(reward + sigma * rng.normal(), 0.0), 1.0)
    return reward


class OracleEvaluator:
    """In-process evaluator; noise is seeded per request, so results do not
    depend on worker count or completion order."""

    def __init__(self, spec: OracleSpec, space: SearchSpace):
        self.spec = spec
        self.space = space

    def evaluate(self, request: EvaluationRequest) -> EvaluationResult:
        try:
            rng = np.random.default_rng(request.trainer_seed)
            reward = oracle_reward(self.spec, self.space, PolicyVector(request.raw_policy), rng)
        except (SpaceError, ShapeError, ConfigError) as exc:
            return EvaluationResult(request.policy_id, Status.FAILED, diagnostics=str(exc))
        return EvaluationResult(request.policy_id, Status.OK, reward=reward)


def trainer_evaluate(
    request: EvaluationRequest,
    command: Sequence[str],
    timeout: float = DEFAULT_TIMEOUT,
    retries: int = DEFAULT_RETRIES,
) -> EvaluationResult:
    """Run one external training evaluation over the wire protocol.

    Malformed responses, crashes and timeouts get up to `retries` fresh
    processes; a well-formed error response or an out-of-range reward is
    final. The returned status is the last attempt's outcome.
    """
    if timeout <= 0:
        raise ConfigError(f"timeout must be positive, got {timeout}")
    if retries < 0:
        raise ConfigError(f"retries must be >= 0, got {retries}")
    payload = {
        "type": "evaluate",
        "protocol_version": PROTOCOL_VERSION,
        "policy_id": request.policy_id,
        "train_epochs": request.train_epochs,
        "trainer_seed": request.trainer_seed,
        "raw_policy": list(request.raw_policy),
    }
    if request.architecture is not None:
        payload["architecture"] = request.architecture
    line = json.dumps(payload, sort_keys=True)

    last: EvaluationResult | None = None
    for attempt in range(retries + 1):
        result = _one_attempt(request.policy_id, line, command, timeout)
        if result.status is Status.OK or not _retryable(result):
            return result
        last = result
        if attempt < retries:
            log.warning(
                "evaluation %s attempt %d failed (%s); retrying",
                request.policy_id, attempt + 1, result.diagnostics,
            )
    return last


def _retryable(result: EvaluationResult) -> bool:
    # Definitive protocol answers (trainer-reported errors, out-of-range
    # rewards) and spawn failures are final; crashes/timeouts/garbage retry.
    return result.diagnostics.startswith(("timeout", "crash", "malformed", "no response"))


def _one_attempt(
    policy_id: str, line: str, command: Sequence[str], timeout: float
) -> EvaluationResult:
    try:
        proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )
    except OSError as exc:
        return EvaluationResult(policy_id, Status.FAILED, diagnostics=f"spawn failure: {exc}")
    try:
        stdout, stderr = proc.communicate(input=line + "\n", timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        return EvaluationResult(
            policy_id, Status.TIMEOUT, diagnostics=f"timeout after {timeout}s"
        )

    message = _first_protocol_message(stdout)
    if message is None:
        tail = stderr[-_STDERR_SNIPPET:]
        kind = "crash" if proc.returncode not in (0, None) else "no response"
        return EvaluationResult(
            policy_id,
            Status.FAILED,
            diagnostics=f"{kind}: exit {proc.returncode}, no protocol message; stderr: {tail!r}",
        )
    if message.get("policy_id") != policy_id:
        return EvaluationResult(
            policy_id,
            Status.FAILED,
            diagnostics=f"malformed: policy_id {message.get('policy_id')!r} != {policy_id!r}",
        )
    if message.get("type") == "error":
        return EvaluationResult(
            policy_id, Status.FAILED, diagnostics=f"trainer error: {message.get('message', '')}"
        )
    reward = message.get("reward")
    if not isinstance(reward, (int, float)) or isinstance(reward, bool) or not math.isfinite(reward):
        return EvaluationResult(
            policy_id, Status.FAILED, diagnostics=f"malformed: reward {reward!r}"
        )
    if not 0.0 <= reward <= 1.0:
        return EvaluationResult(
            policy_id, Status.FAILED, diagnostics=f"reward {reward!r} outside [0,1]"
        )
    return EvaluationResult(policy_id, Status.OK, reward=float(reward))


def _first_protocol_message(stdout: str) -> dict | None:
    # Tolerate stray stdout lines: the first parseable result/error wins.
    for raw in stdout.splitlines():
        raw = raw.strip()
        if not raw:
            continue
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            continue
        if isinstance(msg, dict) and msg.get("type") in ("result", "error"):
            return msg
    return None


class CommandEvaluator:
    """Evaluator backed by an external trainer command.

    Fills in the per-run defaults (train epochs, rendered architecture)
    that the optimizer leaves blank on its requests.
    """

    def __init__(
        self,
        command: Sequence[str],
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        train_epochs: int = DEFAULT_TRAIN_EPOCHS,
        render_fn: Callable[[tuple[int, ...]], dict] | None = None,
    ):
        if not command:
            raise ConfigError("empty trainer command")
        self.command = list(command)
        self.timeout = timeout
        self.retries = retries
        self.train_epochs = train_epochs
        self.render_fn = render_fn

    def evaluate(self, request: EvaluationRequest) -> EvaluationResult:
        arch = request.architecture
        if arch is None and self.render_fn is not None:
            arch = self.render_fn(request.raw_policy)
        filled = EvaluationRequest(
            policy_id=request.policy_id,
            raw_policy=request.raw_policy,
            trainer_seed=request.trainer_seed,
            train_epochs=self.train_epochs,
            architecture=arch,
        )
        return trainer_evaluate(filled, self.command, self.timeout, self.retries)


def evaluate_batch(
    requests: Sequence[EvaluationRequest], evaluator, workers: int = 1
) -> list[EvaluationResult]:
    """Evaluate a whole batch; results come back in request order.

    At most `workers` evaluations run at once; an evaluator that raises
    yields a failed result rather than poisoning the batch.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    def safe(request: EvaluationRequest) -> EvaluationResult:
        try:
            return evaluator.evaluate(request)
        except Exception:
            return EvaluationResult(
                request.policy_id,
                Status.FAILED,
                diagnostics=f"evaluator raised: {traceback.format_exc(limit=5)}",
            )

    if not requests:
        return []
    if workers == 1:
        return [safe(r) for r in requests]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(safe, requests))


@dataclass
class BatchEvaluator:
    """An evaluator bound to its worker budget; what the optimizer consumes."""

    evaluator: object
    workers: int = 1

    def __call__(self, requests: Sequence[EvaluationRequest]) -> list[EvaluationResult]:
        return evaluate_batch(requests, self.evaluator, self.workers)


def evaluator_from_uri(
    uri: str,
    space: SearchSpace,
    timeout: float = DEFAULT_TIMEOUT,
    retries: int = DEFAULT_RETRIES,
    train_epochs: int = DEFAULT_TRAIN_EPOCHS,
    render_fn: Callable[[tuple[int, ...]], dict] | None = None,
):
    """Build an evaluator from its config URI.

    "oracle:<kind>?seed=S&sigma=F&step=F" with kind one of separable,
    plateau, noisy; or "cmd:<executable> <args...>".
    """
    scheme, sep, rest = uri.partition(":")
    if not sep:
        raise ConfigError(f"evaluator URI {uri!r} has no scheme")
    if scheme == "oracle":
        parsed = urlparse("oracle://" + rest) if "//" in rest else urlparse(uri)
        kind_name = (parsed.path or parsed.netloc).lstrip("/")
        params = dict(parse_qsl(parsed.query))
        kinds = {
            "separable": OracleKind.SEPARABLE_CONCAVE,
            "separable_concave": OracleKind.SEPARABLE_CONCAVE,
            "plateau": OracleKind.PLATEAU,
            "noisy": OracleKind.NOISY,
        }
        if kind_name not in kinds:
            raise ConfigError(f"unknown oracle kind {kind_name!r}; known: {sorted(kinds)}")
        unknown = params.keys() - {"seed", "sigma", "step"}
        if unknown:
            raise ConfigError(f"unknown oracle parameters {sorted(unknown)}")
        try:
            spec = make_oracle_spec(
                space,
                kind=kinds[kind_name],
                seed=int(params.get("seed", 0)),
                noise_sigma=float(params.get("sigma", 0.0)),
                plateau_step=float(params.get("step", PLATEAU_STEP_DEFAULT)),
            )
        except ValueError as exc:
            raise ConfigError(f"bad oracle parameter in {uri!r}: {exc}") from exc
        return OracleEvaluator(spec, space)
    if scheme == "cmd":
        argv = shlex.split(rest)
        if not argv:
            raise ConfigError("cmd evaluator URI has an empty command")
        return CommandEvaluator(
            argv,
            timeout=timeout,
            retries=retries,
            train_epochs=train_epochs,
            render_fn=render_fn,
        )
    raise ConfigError(f"unknown evaluator scheme {scheme!r} (expected oracle: or cmd:)")
