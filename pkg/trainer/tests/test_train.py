import io
import re

import numpy as np
import pytest

from shapes_trainer import DataConfig, TrainSettings, build_network, last_k_mean, make_arrays, train_and_score
from shapes_trainer.train import mean_foreground_dice

from test_net import desc

TINY_DATA = DataConfig(seed=1, image_size=16, train_size=6, val_size=3)


def tiny_net():
    return build_network(desc([[2, 2, 2, 2]] * 6, fs=3, classes=4))


class TestLastKMean:
    def test_averages_tail(self):
        assert last_k_mean([1.0, 2.0, 3.0, 4.0], 2) == 3.5
        assert last_k_mean([1.0, 2.0], 2) == 1.5
        assert last_k_mean([0.25], 1) == 0.25

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError, match="k must be"):
            last_k_mean([1.0], 0)
        with pytest.raises(ValueError, match="at least"):
            last_k_mean([1.0, 2.0], 3)


class TestForegroundDice:
    def test_identical_is_one(self):
        labels = np.array([[0, 1], [2, 3]])
        assert mean_foreground_dice(labels, labels) == 1.0

    def test_all_wrong_is_zero(self):
        pred = np.array([[1, 2], [3, 1]])
        true = np.array([[2, 3], [1, 2]])
        assert mean_foreground_dice(pred, true) == 0.0

    def test_absent_class_scores_one(self):
        # only class 1 present anywhere; classes 2 and 3 agree on "nowhere"
        pred = np.array([[1, 0]])
        true = np.array([[1, 0]])
        assert mean_foreground_dice(pred, true) == 1.0

    def test_hand_example(self):
        pred = np.array([[1, 1, 0, 0]])
        true = np.array([[1, 0, 1, 0]])
        # class 1: 2*1/(2+2) = 0.5; classes 2, 3 absent from both: 1.0 each
        assert mean_foreground_dice(pred, true) == pytest.approx((0.5 + 1.0 + 1.0) / 3)

    def test_background_excluded(self):
        pred = np.zeros((4, 4), dtype=int)
        true = np.zeros((4, 4), dtype=int)
        true[0, 0] = 1
        # background agrees almost everywhere but only class 1 counts
        assert mean_foreground_dice(pred, true) == pytest.approx((0.0 + 1.0 + 1.0) / 3)


class TestSettings:
    @pytest.mark.parametrize("kw", [
        {"train_epochs": 0}, {"batch_size": 0}, {"lr": 0.0}, {"last_k": 0},
    ])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            TrainSettings(**kw)


class TestTrainAndScore:
    def test_returns_logged_tail_mean(self):
        arrays = make_arrays(TINY_DATA)
        log = io.StringIO()
        settings = TrainSettings(train_epochs=3, batch_size=2, last_k=2)
        reward = train_and_score(tiny_net(), arrays, settings, seed=9, log=log)
        text = log.getvalue()
        assert re.search(r"settings batch_size=2 lr=0\.001 init=torch-default seed=9", text)
        series = [float(m) for m in re.findall(r"val_dice (\S+)", text)]
        assert len(series) == 3
        assert all(0.0 <= v <= 1.0 for v in series)
        assert reward == last_k_mean(series, 2)

    def test_short_runs_use_what_exists(self):
        arrays = make_arrays(TINY_DATA)
        settings = TrainSettings(train_epochs=1, batch_size=2, last_k=5)
        reward = train_and_score(tiny_net(), arrays, settings, seed=9, log=io.StringIO())
        assert 0.0 <= reward <= 1.0

    def test_seeded_runs_repeat_exactly(self):
        import torch

        arrays = make_arrays(TINY_DATA)
        settings = TrainSettings(train_epochs=2, batch_size=2)
        rewards = []
        for _ in range(2):
            torch.manual_seed(0)
            rewards.append(
                train_and_score(tiny_net(), arrays, settings, seed=5, log=io.StringIO())
            )
        assert rewards[0] == rewards[1]
