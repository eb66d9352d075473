"""Derivative-free policy-gradient search over an integer grid.

Each epoch perturbs every dimension of the center policy with a
category-balanced label in {-1, 0, +1}, evaluates the resulting
candidate policies, averages rewards per dimension and category, and
moves each coordinate one step toward the best category. Failed
evaluations are excluded from the averages rather than imputed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointError, ConfigError, EpochError, ShapeError, SpaceError
from .evaluation import (
    EvaluationRequest,
    EvaluationResult,
    Status,
    derive_trainer_seed,
    evaluate_batch,
)
from .search_space import (
    PolicyVector,
    SearchSpace,
    clamp_policy,
    space_from_config,
    space_to_config,
)

CHECKPOINT_FORMAT = "gridpg-checkpoint"
CHECKPOINT_VERSION = 1

HISTORY_COLUMNS = ("epoch", "candidate", "policy_id", "status", "reward", "coords")

CENTER_INDEX = -1

_CATEGORIES = (-1, 0, 1)


@dataclass(frozen=True, eq=False)
class PerturbationBatch:
    """Signed perturbation labels (p rows, one column per dimension) and
    the candidate policies they induce."""

    labels: np.ndarray
    candidates: tuple[PolicyVector, ...]

    @property
    def p(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class CategoryAverages:
    """Per-dimension mean reward for each label category. An average is
    None when no successful candidate carried that label; it is never 0
    by default."""

    ave_neg: float | None
    ave_zero: float | None
    ave_pos: float | None
    count_neg: int
    count_zero: int
    count_pos: int


@dataclass(frozen=True)
class SearchConfig:
    p: int = 42
    max_epochs: int = 100
    stop_tolerance: float = 1e-3
    stop_patience: int = 5
    seed: int = 0
    reevaluate_center: bool = False
    cache_rewards: bool = False

    def __post_init__(self):
        if self.p < 3:
            raise ConfigError(f"p must be >= 3, got {self.p}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.stop_tolerance < 0:
            raise ConfigError(f"stop_tolerance must be >= 0, got {self.stop_tolerance}")
        if self.stop_patience < 1:
            raise ConfigError(f"stop_patience must be >= 1, got {self.stop_patience}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class EvalRecord:
    epoch: int
    candidate: int
    policy_id: str
    status: str
    reward: float | None
    coords: tuple[int, ...]


@dataclass(frozen=True)
class MoveRecord:
    epoch: int
    before: tuple[int, ...]
    after: tuple[int, ...]
    cases: tuple[str, ...]


@dataclass
class SearchState:
    """Everything a resumed run needs; checkpoints serialize this whole."""

    space: SearchSpace
    config: SearchConfig
    rng: np.random.Generator
    policy: PolicyVector
    epoch: int = 0
    best_policy: PolicyVector | None = None
    best_reward: float | None = None
    best_policy_id: str | None = None
    stall_count: int = 0
    evals: list[EvalRecord] = field(default_factory=list)
    moves: list[MoveRecord] = field(default_factory=list)
    reward_cache: dict[tuple[int, ...], float] = field(default_factory=dict)


def initial_policy(space: SearchSpace, rng: np.random.Generator) -> PolicyVector:
    """Uniform over the grid, one draw per dimension in index order."""
    coords = tuple(
        int(rng.integers(d.x_min, d.x_max, endpoint=True)) for d in space.dimensions
    )
    return PolicyVector(coords)


def generate_perturbations(
    space: SearchSpace, policy: PolicyVector, p: int, rng: np.random.Generator
) -> PerturbationBatch:
    """Draw one balanced label column per dimension.

    Labels split p as evenly as possible over the feasible categories
    (a step off the grid is infeasible), remainders landing on
    categories picked uniformly without repetition, then the column is
    shuffled. Feasible-category counts therefore differ by at most 1.
    """
    if p < 3:
        raise ConfigError(f"p must be >= 3, got {p}")
    space.validate(policy)
    n = space.n
    labels = np.zeros((p, n), dtype=np.int8)
    for d, (x, dim) in enumerate(zip(policy.coords, space.dimensions)):
        feasible = [
            s for s in _CATEGORIES
            if dim.x_min <= x + s * dim.epsilon <= dim.x_max
        ]
        k = len(feasible)
        counts = dict.fromkeys(feasible, p // k)
        extra = p - (p // k) * k
        if extra:
            for idx in rng.choice(k, size=extra, replace=False):
                counts[feasible[int(idx)]] += 1
        column = np.repeat(
            np.array(feasible, dtype=np.int8),
            [counts[s] for s in feasible],
        )
        labels[:, d] = rng.permutation(column)
    center = np.array(policy.coords, dtype=np.int64)
    eps = np.array([dim.epsilon for dim in space.dimensions], dtype=np.int64)
    candidates = tuple(
        clamp_policy(space, (center + row * eps).tolist())
        for row in labels
    )
    return PerturbationBatch(labels=labels, candidates=candidates)


def category_averages(
    batch: PerturbationBatch, results: Sequence[EvaluationResult]
) -> list[CategoryAverages]:
    """Group candidate rewards by per-dimension label and average them.

    Sums accumulate in ascending candidate index so repeated runs agree
    bit for bit. Failed candidates contribute nothing.
    """
    if len(results) != batch.p:
        raise ShapeError(f"{len(results)} results for {batch.p} candidates")
    n = batch.labels.shape[1]
    sums = [[0.0] * n for _ in range(3)]
    counts = [[0] * n for _ in range(3)]
    rows = batch.labels.tolist()
    any_ok = False
    for row, result in zip(rows, results):
        if result.status is not Status.OK:
            continue
        any_ok = True
        reward = result.reward
        for d in range(n):
            s = row[d] + 1
            sums[s][d] += reward
            counts[s][d] += 1
    if not any_ok:
        detail = "; ".join(
            dict.fromkeys(r.diagnostics or r.status.value for r in results[:8])
        )
        raise EpochError(f"all {batch.p} candidate evaluations failed: {detail}")
    out = []
    for d in range(n):
        out.append(
            CategoryAverages(
                ave_neg=sums[0][d] / counts[0][d] if counts[0][d] else None,
                ave_zero=sums[1][d] / counts[1][d] if counts[1][d] else None,
                ave_pos=sums[2][d] / counts[2][d] if counts[2][d] else None,
                count_neg=counts[0][d],
                count_zero=counts[1][d],
                count_pos=counts[2][d],
            )
        )
    return out


def update_policy(
    space: SearchSpace, policy: PolicyVector, averages: Sequence[CategoryAverages]
) -> tuple[PolicyVector, tuple[str, ...]]:
    """One-step coordinate update from the category averages.

    Move down only when the down average strictly beats both others;
    stay whenever the zero average is at least both others; move up only
    when the up average strictly beats both; the remaining pattern (down
    and up tied above zero) stays put. Missing categories count as
    -infinity so an unobserved direction is never taken.
    """
    if len(averages) != space.n:
        raise ShapeError(f"{len(averages)} averages for {space.n} dimensions")
    neg_inf = float("-inf")
    coords = []
    cases = []
    for x, dim, avg in zip(policy.coords, space.dimensions, averages):
        a_neg = avg.ave_neg if avg.ave_neg is not None else neg_inf
        a_zero = avg.ave_zero if avg.ave_zero is not None else neg_inf
        a_pos = avg.ave_pos if avg.ave_pos is not None else neg_inf
        if a_neg > a_zero and a_neg > a_pos:
            step, case = -1, "neg"
        elif a_zero >= a_neg and a_zero >= a_pos:
            step, case = 0, "zero"
        elif a_pos > a_neg and a_pos > a_zero:
            step, case = 1, "pos"
        else:
            step, case = 0, "tie"
        new_x = min(max(x + step * dim.epsilon, dim.x_min), dim.x_max)
        coords.append(new_x)
        cases.append(case)
    return PolicyVector(tuple(coords)), tuple(cases)


def _policy_id(epoch: int, index: int) -> str:
    return f"e{epoch}-center" if index == CENTER_INDEX else f"e{epoch}-p{index}"


def _as_batch_evaluator(evaluator) -> Callable[[Sequence[EvaluationRequest]], list[EvaluationResult]]:
    if callable(evaluator):
        return evaluator
    if hasattr(evaluator, "evaluate"):
        return lambda requests: evaluate_batch(requests, evaluator, workers=1)
    raise ConfigError(
        f"evaluator {evaluator!r} is neither callable nor has an evaluate method"
    )


def run_epoch(state: SearchState, evaluator) -> SearchState:
    """Advance the search by one epoch, mutating and returning state.

    The evaluator is either a batch callable (requests -> results) or a
    single-request object with an evaluate method. An epoch in which
    every candidate fails aborts with the partial state attached for
    checkpointing.
    """
    config = state.config
    space = state.space
    epoch = state.epoch + 1
    batch_eval = _as_batch_evaluator(evaluator)

    batch = generate_perturbations(space, state.policy, config.p, state.rng)
    indices = list(range(batch.p))
    if config.reevaluate_center:
        indices = [CENTER_INDEX] + indices
    requests = []
    for i in indices:
        coords = state.policy.coords if i == CENTER_INDEX else batch.candidates[i].coords
        requests.append(
            EvaluationRequest(
                policy_id=_policy_id(epoch, i),
                raw_policy=coords,
                trainer_seed=derive_trainer_seed(config.seed, epoch, i),
            )
        )

    cached: dict[str, EvaluationResult] = {}
    to_run = []
    if config.cache_rewards:
        for req in requests:
            hit = state.reward_cache.get(req.raw_policy)
            if hit is None:
                to_run.append(req)
            else:
                cached[req.policy_id] = EvaluationResult(
                    req.policy_id, Status.OK, reward=hit, diagnostics="cached"
                )
    else:
        to_run = requests

    fresh = batch_eval(to_run) if to_run else []
    if len(fresh) != len(to_run):
        raise EpochError(
            f"evaluator returned {len(fresh)} results for {len(to_run)} requests",
            state=state,
        )
    by_id = dict(cached)
    for req, res in zip(to_run, fresh):
        if res.policy_id != req.policy_id:
            raise EpochError(
                f"result for {res.policy_id!r} arrived in {req.policy_id!r}'s slot",
                state=state,
            )
        by_id[req.policy_id] = res
    results = [by_id[r.policy_id] for r in requests]

    for i, req, res in zip(indices, requests, results):
        state.evals.append(
            EvalRecord(
                epoch=epoch,
                candidate=i,
                policy_id=req.policy_id,
                status=res.status.value,
                reward=res.reward,
                coords=req.raw_policy,
            )
        )
        if config.cache_rewards and res.status is Status.OK:
            state.reward_cache[req.raw_policy] = res.reward

    best_before = state.best_reward
    for req, res in zip(requests, results):
        if res.status is Status.OK and (
            state.best_reward is None or res.reward > state.best_reward
        ):
            state.best_reward = res.reward
            state.best_policy = PolicyVector(req.raw_policy)
            state.best_policy_id = req.policy_id

    candidate_results = results[1:] if config.reevaluate_center else results
    try:
        averages = category_averages(batch, candidate_results)
    except EpochError as exc:
        raise EpochError(f"epoch {epoch}: {exc}", state=state) from exc

    new_policy, cases = update_policy(space, state.policy, averages)
    state.moves.append(
        MoveRecord(epoch=epoch, before=state.policy.coords, after=new_policy.coords, cases=cases)
    )
    improvement = (
        math.inf if best_before is None else state.best_reward - best_before
    )
    if improvement < config.stop_tolerance:
        state.stall_count += 1
    else:
        state.stall_count = 0
    state.policy = new_policy
    state.epoch = epoch
    return state


def run_search(
    space: SearchSpace,
    config: SearchConfig,
    evaluator,
    initial_state: SearchState | None = None,
    on_epoch: Callable[[SearchState], None] | None = None,
) -> SearchState:
    """Run epochs until the epoch budget or the stall rule ends the search.

    The stall rule: stop after stop_patience consecutive epochs whose
    best-seen reward improved by less than stop_tolerance. The answer is
    the best-seen policy, which need not be the final center. Passing
    initial_state resumes it (with this config) instead of starting fresh.
    """
    if initial_state is not None:
        state = initial_state
        if space_to_config(state.space) != space_to_config(space):
            raise SpaceError("resume state was built for a different search space")
        state.config = config
    else:
        rng = np.random.default_rng(config.seed)
        state = SearchState(
            space=space,
            config=config,
            rng=rng,
            policy=initial_policy(space, rng),
        )
    while state.epoch < config.max_epochs and state.stall_count < config.stop_patience:
        run_epoch(state, evaluator)
        if on_epoch is not None:
            on_epoch(state)
    return state


def history_to_csv(records: Sequence[EvalRecord]) -> str:
    """Frozen column order; floats rendered exactly (round-trip repr)."""
    lines = [",".join(HISTORY_COLUMNS)]
    for r in records:
        reward = "" if r.reward is None else repr(r.reward)
        coords = " ".join(str(c) for c in r.coords)
        lines.append(f"{r.epoch},{r.candidate},{r.policy_id},{r.status},{reward},{coords}")
    return "\n".join(lines) + "\n"


def save_checkpoint(state: SearchState, path, extra: dict | None = None) -> None:
    """Atomic JSON snapshot: config echo, RNG state, policy, history."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "space": space_to_config(state.space),
        "config": {
            "p": state.config.p,
            "max_epochs": state.config.max_epochs,
            "stop_tolerance": state.config.stop_tolerance,
            "stop_patience": state.config.stop_patience,
            "seed": state.config.seed,
            "reevaluate_center": state.config.reevaluate_center,
            "cache_rewards": state.config.cache_rewards,
        },
        "epoch": state.epoch,
        "policy": list(state.policy.coords),
        "best_policy": None if state.best_policy is None else list(state.best_policy.coords),
        "best_reward": state.best_reward,
        "best_policy_id": state.best_policy_id,
        "stall_count": state.stall_count,
        "rng": state.rng.bit_generator.state,
        "evals": [
            [r.epoch, r.candidate, r.policy_id, r.status, r.reward, list(r.coords)]
            for r in state.evals
        ],
        "moves": [
            [m.epoch, list(m.before), list(m.after), list(m.cases)]
            for m in state.moves
        ],
        "reward_cache": [[list(k), v] for k, v in state.reward_cache.items()],
    }
    if extra is not None:
        payload["extra"] = extra
    text = json.dumps(payload, indent=1)
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path, with_extra: bool = False):
    """Rebuild a SearchState (and optionally the saved extra blob).

    Raises CheckpointError with position diagnostics for unreadable or
    corrupt files.
    """
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(
            f"corrupt checkpoint {path}: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    try:
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(
                f"{path} is not a search checkpoint (format {payload.get('format')!r})"
            )
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {payload.get('version')!r}"
            )
        space = space_from_config(payload["space"])
        config = SearchConfig(**payload["config"])
        rng = np.random.default_rng()
        rng.bit_generator.state = payload["rng"]
        policy = PolicyVector(tuple(payload["policy"]))
        space.validate(policy)
        best_policy = payload["best_policy"]
        state = SearchState(
            space=space,
            config=config,
            rng=rng,
            policy=policy,
            epoch=payload["epoch"],
            best_policy=None if best_policy is None else PolicyVector(tuple(best_policy)),
            best_reward=payload["best_reward"],
            best_policy_id=payload["best_policy_id"],
            stall_count=payload["stall_count"],
            evals=[
                EvalRecord(e, c, pid, status, reward, tuple(coords))
                for e, c, pid, status, reward, coords in payload["evals"]
            ],
            moves=[
                MoveRecord(e, tuple(before), tuple(after), tuple(cases))
                for e, before, after, cases in payload["moves"]
            ],
            reward_cache={tuple(k): v for k, v in payload.get("reward_cache", [])},
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if with_extra:
        return state, payload.get("extra")
    return state
