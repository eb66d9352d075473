"""Perturbation balance, the averaging update rule, epochs, checkpoints."""

import collections
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridpg import (
    CategoryAverages,
    CheckpointError,
    ConfigError,
    EpochError,
    EvaluationResult,
    OracleEvaluator,
    OracleKind,
    OracleSpec,
    PolicyVector,
    SearchConfig,
    SearchState,
    ShapeError,
    SpaceError,
    Status,
    category_averages,
    clamp_policy,
    derive_trainer_seed,
    generate_perturbations,
    history_to_csv,
    initial_policy,
    load_checkpoint,
    make_oracle_spec,
    run_epoch,
    run_search,
    save_checkpoint,
    update_policy,
)
from gridpg.optimizer import CENTER_INDEX, HISTORY_COLUMNS

from testkit import line_space


class ConstEvaluator:
    """Same reward for every policy; also counts invocations."""

    def __init__(self, reward: float = 0.5):
        self.reward = reward
        self.calls = 0

    def evaluate(self, request):
        self.calls += 1
        return EvaluationResult(request.policy_id, Status.OK, reward=self.reward)


class RecordingEvaluator(ConstEvaluator):
    def __init__(self, reward: float = 0.5):
        super().__init__(reward)
        self.requests = []

    def evaluate(self, request):
        self.requests.append(request)
        return super().evaluate(request)


class FailingEvaluator:
    def evaluate(self, request):
        return EvaluationResult(request.policy_id, Status.FAILED, diagnostics="down")


def line_oracle(space, target_coord=0):
    """Noiseless concave ridge with its peak at a fixed corner."""
    spec = OracleSpec(
        OracleKind.SEPARABLE_CONCAVE,
        PolicyVector((target_coord,) * space.n),
        (1.0,) * space.n,
    )
    return OracleEvaluator(spec, space)


def fresh_state(space, config, policy=None):
    rng = np.random.default_rng(config.seed)
    start = initial_policy(space, rng) if policy is None else PolicyVector(policy)
    return SearchState(space=space, config=config, rng=rng, policy=start)


def averages_from_values(neg, zero, pos):
    return CategoryAverages(
        ave_neg=neg, ave_zero=zero, ave_pos=pos,
        count_neg=0 if neg is None else 14,
        count_zero=0 if zero is None else 14,
        count_pos=0 if pos is None else 14,
    )


class TestSearchConfig:
    def test_defaults(self):
        c = SearchConfig()
        assert (c.p, c.max_epochs, c.stop_tolerance, c.stop_patience) == (42, 100, 1e-3, 5)
        assert not c.reevaluate_center and not c.cache_rewards

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"p": 2},
            {"max_epochs": 0},
            {"stop_tolerance": -1e-9},
            {"stop_patience": 0},
            {"seed": -1},
            {"seed": 2**64},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            SearchConfig(**kwargs)


class TestInitialPolicy:
    def test_in_bounds_and_seeded(self, acdc):
        a = initial_policy(acdc, np.random.default_rng(5))
        b = initial_policy(acdc, np.random.default_rng(5))
        c = initial_policy(acdc, np.random.default_rng(6))
        assert a == b and a != c
        acdc.validate(a)

    def test_reaches_extremes(self):
        space = line_space(1, x_min=0, x_max=3)
        seen = {initial_policy(space, np.random.default_rng(s)).coords[0] for s in range(200)}
        assert seen == {0, 1, 2, 3}


class TestPerturbations:
    def test_interior_split_is_exact_thirds(self):
        space = line_space(4)
        batch = generate_perturbations(
            space, PolicyVector((5, 5, 5, 5)), 42, np.random.default_rng(0)
        )
        assert batch.labels.shape == (42, 4)
        for d in range(4):
            counts = collections.Counter(batch.labels[:, d].tolist())
            assert counts == {-1: 14, 0: 14, 1: 14}

    def test_lower_boundary_drops_negative(self):
        space = line_space(1)
        batch = generate_perturbations(
            space, PolicyVector((0,)), 42, np.random.default_rng(0)
        )
        counts = collections.Counter(batch.labels[:, 0].tolist())
        assert counts == {0: 21, 1: 21}

    def test_upper_boundary_drops_positive(self):
        space = line_space(1)
        batch = generate_perturbations(
            space, PolicyVector((10,)), 42, np.random.default_rng(0)
        )
        counts = collections.Counter(batch.labels[:, 0].tolist())
        assert counts == {-1: 21, 0: 21}

    def test_frozen_dimension_gets_all_zeros(self):
        space = line_space(1, x_min=4, x_max=4)
        batch = generate_perturbations(
            space, PolicyVector((4,)), 42, np.random.default_rng(0)
        )
        assert (batch.labels == 0).all()

    @settings(max_examples=80, deadline=None)
    @given(
        p=st.integers(3, 100),
        position=st.sampled_from(["min", "mid", "max"]),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_balance_within_one(self, p, position, seed):
        space = line_space(2)
        x = {"min": 0, "mid": 5, "max": 10}[position]
        feasible = {"min": (0, 1), "mid": (-1, 0, 1), "max": (-1, 0)}[position]
        batch = generate_perturbations(
            space, PolicyVector((x, x)), p, np.random.default_rng(seed)
        )
        for d in range(2):
            counts = collections.Counter(batch.labels[:, d].tolist())
            assert set(counts) <= set(feasible)
            assert sum(counts.values()) == p
            sizes = [counts.get(s, 0) for s in feasible]
            assert max(sizes) - min(sizes) <= 1

    def test_candidates_are_clamped_center_plus_labels(self):
        space = line_space(3, x_min=0, x_max=6)
        center = PolicyVector((0, 3, 6))
        batch = generate_perturbations(space, center, 11, np.random.default_rng(2))
        for row, cand in zip(batch.labels.tolist(), batch.candidates):
            expected = clamp_policy(space, [c + s for c, s in zip(center.coords, row)])
            assert cand == expected
            space.validate(cand)

    def test_deterministic_under_same_rng_state(self):
        space = line_space(5)
        a = generate_perturbations(space, PolicyVector((5,) * 5), 42, np.random.default_rng(9))
        b = generate_perturbations(space, PolicyVector((5,) * 5), 42, np.random.default_rng(9))
        assert (a.labels == b.labels).all()
        assert a.candidates == b.candidates

    def test_bad_inputs(self):
        space = line_space(2)
        with pytest.raises(ConfigError):
            generate_perturbations(space, PolicyVector((5, 5)), 2, np.random.default_rng(0))
        with pytest.raises(SpaceError):
            generate_perturbations(space, PolicyVector((5, 99)), 42, np.random.default_rng(0))


def ok(pid, reward):
    return EvaluationResult(pid, Status.OK, reward=reward)


def failed(pid):
    return EvaluationResult(pid, Status.FAILED, diagnostics="lost")


class TestCategoryAverages:
    def brute_force(self, batch, results):
        """Group rewards per (dimension, label) and average with sum()."""
        n = batch.labels.shape[1]
        out = []
        for d in range(n):
            groups = {-1: [], 0: [], 1: []}
            for row, res in zip(batch.labels.tolist(), results):
                if res.status is Status.OK:
                    groups[row[d]].append(res.reward)
            out.append(
                CategoryAverages(
                    ave_neg=sum(groups[-1]) / len(groups[-1]) if groups[-1] else None,
                    ave_zero=sum(groups[0]) / len(groups[0]) if groups[0] else None,
                    ave_pos=sum(groups[1]) / len(groups[1]) if groups[1] else None,
                    count_neg=len(groups[-1]),
                    count_zero=len(groups[0]),
                    count_pos=len(groups[1]),
                )
            )
        return out

    def test_matches_brute_force_bit_for_bit(self):
        space = line_space(6)
        rng = np.random.default_rng(13)
        for trial in range(20):
            batch = generate_perturbations(space, PolicyVector((5,) * 6), 17, rng)
            results = []
            for i in range(batch.p):
                if rng.random() < 0.25:
                    results.append(failed(f"e1-p{i}"))
                else:
                    results.append(ok(f"e1-p{i}", float(rng.random())))
            if not any(r.status is Status.OK for r in results):
                continue
            got = category_averages(batch, results)
            want = self.brute_force(batch, results)
            assert got == want  # exact float equality, same summation order

    def test_absent_category_is_none_not_zero(self):
        space = line_space(1)
        batch = generate_perturbations(space, PolicyVector((0,)), 6, np.random.default_rng(0))
        results = [ok(f"e1-p{i}", 0.5) for i in range(6)]
        avg = category_averages(batch, results)[0]
        assert avg.ave_neg is None
        assert avg.count_neg == 0
        assert avg.ave_zero == 0.5 and avg.ave_pos == 0.5

    def test_failures_only_shrink_counts(self):
        space = line_space(1)
        batch = generate_perturbations(space, PolicyVector((5,)), 9, np.random.default_rng(1))
        results = [
            failed(f"e1-p{i}") if i % 3 == 0 else ok(f"e1-p{i}", 1.0) for i in range(9)
        ]
        avg = category_averages(batch, results)[0]
        assert avg.count_neg + avg.count_zero + avg.count_pos == 6

    def test_all_failed_raises_epoch_error(self):
        space = line_space(2)
        batch = generate_perturbations(space, PolicyVector((5, 5)), 6, np.random.default_rng(2))
        with pytest.raises(EpochError, match="all 6 candidate evaluations failed"):
            category_averages(batch, [failed(f"e1-p{i}") for i in range(6)])

    def test_result_count_mismatch(self):
        space = line_space(1)
        batch = generate_perturbations(space, PolicyVector((5,)), 6, np.random.default_rng(3))
        with pytest.raises(ShapeError):
            category_averages(batch, [ok("e1-p0", 0.5)])


class TestUpdatePolicy:
    # Rank triples (down, stay, up), 3 = best; expected step per the
    # strict-winner rule with ties resolved toward staying.
    TRUTH_TABLE = [
        ((3, 2, 1), -1),
        ((3, 1, 2), -1),
        ((2, 3, 1), 0),
        ((1, 3, 2), 0),
        ((2, 1, 3), 1),
        ((1, 2, 3), 1),
        ((3, 3, 1), 0),
        ((1, 1, 3), 1),
        ((3, 1, 3), 0),
        ((1, 3, 1), 0),
        ((1, 3, 3), 0),
        ((3, 1, 1), -1),
        ((2, 2, 2), 0),
    ]

    @pytest.mark.parametrize("ranks,step", TRUTH_TABLE)
    def test_truth_table(self, ranks, step):
        space = line_space(1)
        values = [r / 10 for r in ranks]
        new, cases = update_policy(
            space, PolicyVector((5,)), [averages_from_values(*values)]
        )
        assert new.coords[0] - 5 == step

    def test_numeric_examples(self):
        space = line_space(1)
        cases = [
            ((0.70, 0.60, 0.50), -1),
            ((0.50, 0.60, 0.70), 1),
            ((0.60, 0.70, 0.50), 0),
            ((0.70, 0.50, 0.70), 0),
        ]
        for values, step in cases:
            new, _ = update_policy(space, PolicyVector((3,)), [averages_from_values(*values)])
            assert new.coords[0] == 3 + step, values

    def test_missing_direction_never_taken(self):
        space = line_space(1)
        # Up average missing entirely: even a poor stay average wins over it.
        new, _ = update_policy(
            space, PolicyVector((5,)), [averages_from_values(0.9, 0.1, None)]
        )
        assert new.coords[0] == 4
        new, _ = update_policy(
            space, PolicyVector((5,)), [averages_from_values(None, 0.1, 0.9)]
        )
        assert new.coords[0] == 6
        new, _ = update_policy(
            space, PolicyVector((5,)), [averages_from_values(None, 0.1, None)]
        )
        assert new.coords[0] == 5

    def test_result_is_clamped_to_grid(self):
        space = line_space(1, x_min=0, x_max=10)
        new, _ = update_policy(
            space, PolicyVector((0,)), [averages_from_values(0.9, 0.1, 0.2)]
        )
        assert new.coords[0] == 0
        new, _ = update_policy(
            space, PolicyVector((10,)), [averages_from_values(0.1, 0.2, 0.9)]
        )
        assert new.coords[0] == 10

    def test_cases_reported_per_dimension(self):
        space = line_space(4)
        avgs = [
            averages_from_values(0.9, 0.5, 0.1),
            averages_from_values(0.1, 0.9, 0.5),
            averages_from_values(0.1, 0.5, 0.9),
            averages_from_values(0.9, 0.1, 0.9),
        ]
        new, cases = update_policy(space, PolicyVector((5, 5, 5, 5)), avgs)
        assert cases == ("neg", "zero", "pos", "tie")
        assert new.coords == (4, 5, 6, 5)

    def test_dimension_count_checked(self):
        space = line_space(2)
        with pytest.raises(ShapeError):
            update_policy(space, PolicyVector((5, 5)), [averages_from_values(0.1, 0.2, 0.3)])

    @settings(max_examples=100, deadline=None)
    @given(
        neg=st.one_of(st.none(), st.floats(0, 1)),
        zero=st.one_of(st.none(), st.floats(0, 1)),
        pos=st.one_of(st.none(), st.floats(0, 1)),
    )
    def test_exactly_one_case_applies(self, neg, zero, pos):
        if neg is None and zero is None and pos is None:
            return
        space = line_space(1)
        new, cases = update_policy(
            space, PolicyVector((5,)), [averages_from_values(neg, zero, pos)]
        )
        ninf = float("-inf")
        a, b, c = (v if v is not None else ninf for v in (neg, zero, pos))
        if cases[0] == "neg":
            assert a > b and a > c and new.coords[0] == 4
        elif cases[0] == "pos":
            assert c > a and c > b and new.coords[0] == 6
        elif cases[0] == "zero":
            assert b >= a and b >= c and new.coords[0] == 5
        else:
            assert a == c > b and new.coords[0] == 5


class TestRunEpoch:
    def test_history_grows_by_p(self):
        space = line_space(3)
        state = fresh_state(space, SearchConfig(p=10, seed=1))
        run_epoch(state, ConstEvaluator())
        assert len(state.evals) == 10
        assert state.epoch == 1
        assert [r.policy_id for r in state.evals] == [f"e1-p{i}" for i in range(10)]

    def test_center_evaluated_first_when_enabled(self):
        space = line_space(3)
        state = fresh_state(space, SearchConfig(p=10, seed=1, reevaluate_center=True))
        center = state.policy
        ev = RecordingEvaluator()
        run_epoch(state, ev)
        assert len(state.evals) == 11
        first = state.evals[0]
        assert first.policy_id == "e1-center"
        assert first.candidate == CENTER_INDEX
        assert first.coords == center.coords
        assert ev.requests[0].policy_id == "e1-center"

    def test_constant_rewards_leave_policy_in_place(self):
        space = line_space(4)
        state = fresh_state(space, SearchConfig(p=9, seed=3))
        before = state.policy
        run_epoch(state, ConstEvaluator())
        assert state.policy == before
        assert state.moves[-1].cases == ("zero",) * 4

    def test_trainer_seeds_follow_run_seed(self):
        space = line_space(2)
        state = fresh_state(space, SearchConfig(p=5, seed=77, reevaluate_center=True))
        ev = RecordingEvaluator()
        run_epoch(state, ev)
        for req in ev.requests:
            idx = CENTER_INDEX if req.policy_id.endswith("center") else int(
                req.policy_id.split("-p")[1]
            )
            assert req.trainer_seed == derive_trainer_seed(77, 1, idx)

    def test_best_seen_keeps_earliest_on_ties(self):
        space = line_space(1)
        state = fresh_state(space, SearchConfig(p=6, seed=2))
        run_epoch(state, ConstEvaluator(0.5))
        first_best = state.best_policy_id
        run_epoch(state, ConstEvaluator(0.5))
        assert state.best_policy_id == first_best == "e1-p0"
        run_epoch(state, ConstEvaluator(0.75))
        assert state.best_policy_id == "e3-p0"
        assert state.best_reward == 0.75

    def test_stall_counting(self):
        space = line_space(2)
        state = fresh_state(space, SearchConfig(p=5, seed=4, stop_tolerance=1e-3))
        run_epoch(state, ConstEvaluator(0.5))
        assert state.stall_count == 0  # first reward is an infinite improvement
        run_epoch(state, ConstEvaluator(0.5))
        assert state.stall_count == 1
        run_epoch(state, ConstEvaluator(0.9))
        assert state.stall_count == 0  # big improvement resets the stall

    def test_all_failed_attaches_state(self):
        space = line_space(2)
        state = fresh_state(space, SearchConfig(p=5, seed=5))
        with pytest.raises(EpochError) as exc_info:
            run_epoch(state, FailingEvaluator())
        assert exc_info.value.state is state
        assert len(state.evals) == 5  # the failed epoch is still on record
        assert all(r.status == "failed" for r in state.evals)

    def test_result_count_mismatch_rejected(self):
        space = line_space(2)
        state = fresh_state(space, SearchConfig(p=5, seed=6))
        with pytest.raises(EpochError, match="4 results for 5 requests"):
            run_epoch(state, lambda requests: [
                EvaluationResult(r.policy_id, Status.OK, reward=0.5) for r in requests[:-1]
            ])

    def test_result_id_mismatch_rejected(self):
        space = line_space(2)
        state = fresh_state(space, SearchConfig(p=5, seed=7))
        with pytest.raises(EpochError, match="slot"):
            run_epoch(state, lambda requests: [
                EvaluationResult("e9-p9", Status.OK, reward=0.5) for _ in requests
            ])

    def test_reward_cache_round_trip(self):
        space = line_space(1, x_min=0, x_max=1)  # tiny grid: guaranteed repeats
        config = SearchConfig(p=6, seed=8, cache_rewards=True)
        state = fresh_state(space, config)
        ev = ConstEvaluator(0.5)
        run_epoch(state, ev)
        first_calls = ev.calls
        assert first_calls == 6
        assert set(state.reward_cache) == {(0,), (1,)}
        run_epoch(state, ev)
        assert ev.calls == first_calls  # every epoch-2 candidate was cached
        assert len(state.evals) == 12

    def test_cache_disabled_by_default(self):
        space = line_space(1, x_min=0, x_max=1)
        state = fresh_state(space, SearchConfig(p=6, seed=8))
        ev = ConstEvaluator(0.5)
        run_epoch(state, ev)
        run_epoch(state, ev)
        assert ev.calls == 12
        assert state.reward_cache == {}


class TestMonotoneLine:
    def test_descends_one_step_per_epoch_then_parks(self):
        # One dimension, noiseless peak at 0, start at 10: every epoch the
        # down-category average is strictly best, so the center must walk
        # 10 -> 0 and then hold.
        space = line_space(1, x_min=0, x_max=10)
        state = fresh_state(space, SearchConfig(p=9, seed=11), policy=(10,))
        ev = line_oracle(space, target_coord=0)
        trajectory = []
        for _ in range(14):
            run_epoch(state, ev)
            trajectory.append(state.policy.coords[0])
        assert trajectory == [9, 8, 7, 6, 5, 4, 3, 2, 1, 0, 0, 0, 0, 0]


class TestRunSearch:
    def test_epoch_budget(self):
        space = line_space(3)
        state = run_search(space, SearchConfig(p=5, max_epochs=1, seed=0), ConstEvaluator())
        assert state.epoch == 1

    def test_stall_rule_engages_after_patience(self):
        space = line_space(3)
        config = SearchConfig(p=5, seed=1, stop_patience=4)
        state = run_search(space, config, ConstEvaluator())
        assert state.epoch == 1 + 4  # epoch 1 improves; then 4 stalled epochs
        assert state.stall_count == 4

    def test_answer_is_best_seen_policy(self):
        space = line_space(2)
        config = SearchConfig(p=8, seed=3, max_epochs=6, stop_patience=10**6)
        ev = line_oracle(space)
        state = run_search(space, config, ev)
        rewards = [r.reward for r in state.evals if r.reward is not None]
        assert state.best_reward == max(rewards)
        best_records = [r for r in state.evals if r.policy_id == state.best_policy_id]
        assert best_records[0].coords == state.best_policy.coords

    def test_on_epoch_callback(self):
        space = line_space(2)
        seen = []
        run_search(
            space,
            SearchConfig(p=5, max_epochs=3, seed=4, stop_patience=10**6),
            ConstEvaluator(),
            on_epoch=lambda s: seen.append(s.epoch),
        )
        assert seen == [1, 2, 3]

    def test_bitwise_determinism(self):
        space = line_space(4)
        config = SearchConfig(p=7, max_epochs=5, seed=21, stop_patience=10**6)
        a = run_search(space, config, line_oracle(space))
        b = run_search(space, config, line_oracle(space))
        assert history_to_csv(a.evals) == history_to_csv(b.evals)
        assert a.policy == b.policy
        assert a.moves == b.moves
        assert a.rng.bit_generator.state == b.rng.bit_generator.state


class TestHistoryCsv:
    def test_layout(self):
        records = run_search(
            line_space(2), SearchConfig(p=4, max_epochs=1, seed=0), ConstEvaluator(0.25)
        ).evals
        text = history_to_csv(records)
        lines = text.splitlines()
        assert lines[0] == ",".join(HISTORY_COLUMNS)
        assert len(lines) == 5
        assert text.endswith("\n")
        epoch, candidate, pid, status, reward, coords = lines[1].split(",")
        assert (epoch, candidate, pid, status) == ("1", "0", "e1-p0", "ok")
        assert float(reward) == 0.25
        assert len(coords.split(" ")) == 2

    def test_missing_reward_is_empty_field(self):
        from gridpg import EvalRecord

        rec = EvalRecord(2, 3, "e2-p3", "failed", None, (1, 2))
        assert history_to_csv([rec]).splitlines()[1] == "2,3,e2-p3,failed,,1 2"

    def test_reward_repr_round_trips(self):
        from gridpg import EvalRecord

        value = 0.1 + 0.2  # not exactly representable in decimal
        rec = EvalRecord(1, 0, "e1-p0", "ok", value, (0,))
        field = history_to_csv([rec]).splitlines()[1].split(",")[4]
        assert float(field) == value


class TestCheckpoint:
    def run_a_bit(self, tmp_path, epochs=3, cache=False):
        space = line_space(3)
        config = SearchConfig(
            p=6, max_epochs=epochs, seed=9, stop_patience=10**6, cache_rewards=cache
        )
        state = run_search(space, config, line_oracle(space))
        path = tmp_path / "ckpt.json"
        save_checkpoint(state, path)
        return state, path

    def test_round_trip_restores_every_field(self, tmp_path):
        state, path = self.run_a_bit(tmp_path, cache=True)
        loaded = load_checkpoint(path)
        assert loaded.policy == state.policy
        assert loaded.epoch == state.epoch
        assert loaded.best_policy == state.best_policy
        assert loaded.best_reward == state.best_reward
        assert loaded.best_policy_id == state.best_policy_id
        assert loaded.stall_count == state.stall_count
        assert loaded.evals == state.evals
        assert loaded.moves == state.moves
        assert loaded.reward_cache == state.reward_cache
        assert loaded.config == state.config
        assert loaded.rng.bit_generator.state == state.rng.bit_generator.state
        assert loaded.space == state.space

    def test_resume_equals_uninterrupted(self, tmp_path):
        space = line_space(3)
        evaluator = line_oracle(space)
        full_config = SearchConfig(p=6, max_epochs=6, seed=9, stop_patience=10**6)

        straight = run_search(space, full_config, evaluator)

        half_config = SearchConfig(p=6, max_epochs=3, seed=9, stop_patience=10**6)
        half = run_search(space, half_config, line_oracle(space))
        path = tmp_path / "ckpt.json"
        save_checkpoint(half, path)
        resumed = run_search(
            space, full_config, line_oracle(space), initial_state=load_checkpoint(path)
        )

        assert history_to_csv(resumed.evals) == history_to_csv(straight.evals)
        assert resumed.policy == straight.policy
        assert resumed.best_reward == straight.best_reward
        assert resumed.rng.bit_generator.state == straight.rng.bit_generator.state

    def test_resume_rejects_different_space(self, tmp_path):
        state, path = self.run_a_bit(tmp_path)
        loaded = load_checkpoint(path)
        other = line_space(3, x_min=0, x_max=11)
        with pytest.raises(SpaceError, match="different search space"):
            run_search(other, state.config, ConstEvaluator(), initial_state=loaded)

    def test_extra_blob(self, tmp_path):
        state, path = self.run_a_bit(tmp_path)
        save_checkpoint(state, path, extra={"cli": {"note": "hello"}})
        loaded, extra = load_checkpoint(path, with_extra=True)
        assert extra == {"cli": {"note": "hello"}}
        save_checkpoint(state, path)
        _, missing = load_checkpoint(path, with_extra=True)
        assert missing is None

    def test_no_temp_file_left_behind(self, tmp_path):
        self.run_a_bit(tmp_path)
        assert [p.name for p in tmp_path.iterdir()] == ["ckpt.json"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "absent.json")

    def test_corrupt_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "gridpg-checkpoint",\n "version": ')
        with pytest.raises(CheckpointError, match=r"line \d+ column \d+"):
            load_checkpoint(path)

    def test_truncated_checkpoint(self, tmp_path):
        state, path = self.run_a_bit(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_format_and_version(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"format": "something-else", "version": 1}))
        with pytest.raises(CheckpointError, match="not a search checkpoint"):
            load_checkpoint(path)
        path.write_text(json.dumps({"format": "gridpg-checkpoint", "version": 99}))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_missing_key_is_corrupt(self, tmp_path):
        state, path = self.run_a_bit(tmp_path)
        payload = json.loads(path.read_text())
        del payload["policy"]
        path.write_text(json.dumps(payload))
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(path)
