import json
import re
import subprocess
import sys

import pytest

from shapes_trainer import DataConfig, TrainSettings, handle_request, last_k_mean

from test_net import desc

TINY_DATA = DataConfig(seed=1, image_size=16, train_size=4, val_size=2)
FAST = TrainSettings(batch_size=2)
TRAINER = [sys.executable, "-m", "shapes_trainer"]
SMALL_FLAGS = ["--image-size", "16", "--train-size", "4", "--val-size", "2", "--batch-size", "2"]


def request_line(**over) -> str:
    req = {
        "type": "evaluate",
        "protocol_version": 1,
        "policy_id": "e1-p0",
        "train_epochs": 1,
        "trainer_seed": 42,
        "raw_policy": [1] * 76,
        "architecture": desc([[2, 2, 2, 2]] * 6, fs=3, classes=4),
    }
    req.update(over)
    return json.dumps(req)


def run_trainer(line: str, *flags: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [*TRAINER, *SMALL_FLAGS, *flags],
        input=line, capture_output=True, text=True, timeout=300,
    )


class TestProtocolSubprocess:
    def test_round_trip(self):
        proc = run_trainer(request_line(train_epochs=2))
        assert proc.returncode == 0, proc.stderr
        lines = proc.stdout.strip().splitlines()
        assert len(lines) == 1, "exactly one response line"
        response = json.loads(lines[0])
        assert response["type"] == "result"
        assert response["policy_id"] == "e1-p0"
        assert 0.0 <= response["reward"] <= 1.0

    def test_reward_is_tail_mean_of_logged_series(self):
        proc = run_trainer(request_line(policy_id="e2-p5", train_epochs=3))
        assert proc.returncode == 0
        response = json.loads(proc.stdout)
        series = [float(m) for m in re.findall(r"val_dice (\S+)", proc.stderr)]
        assert len(series) == 3
        assert response["reward"] == last_k_mean(series, 3)
        assert "settings batch_size=2" in proc.stderr

    def test_repeat_runs_identical(self):
        line = request_line(train_epochs=2, trainer_seed=77)
        a = json.loads(run_trainer(line).stdout)
        b = json.loads(run_trainer(line).stdout)
        assert a == b

    def test_unparseable_request_fails_loudly(self):
        proc = run_trainer("this is not json\n")
        assert proc.returncode != 0
        response = json.loads(proc.stdout)
        assert response["type"] == "error"
        assert "unparseable" in response["message"]

    def test_empty_input_fails_loudly(self):
        proc = run_trainer("")
        assert proc.returncode != 0
        assert json.loads(proc.stdout)["type"] == "error"

    def test_error_responses_carry_policy_id(self):
        proc = run_trainer(request_line(architecture=None))
        assert proc.returncode == 0
        response = json.loads(proc.stdout)
        assert response["type"] == "error"
        assert response["policy_id"] == "e1-p0"
        assert "architecture" in response["message"]


class TestHandleRequest:
    def run(self, line: str):
        import io
        return handle_request(line, TINY_DATA, FAST, log=io.StringIO())

    def test_success(self):
        response, code = self.run(request_line())
        assert code == 0
        assert response["type"] == "result"
        assert response["policy_id"] == "e1-p0"
        assert 0.0 <= response["reward"] <= 1.0

    def test_unknown_request_fields_ignored(self):
        response, _ = self.run(request_line(mystery=1, another={"x": 2}))
        assert response["type"] == "result"

    def test_identical_requests_identical_rewards(self):
        import torch

        line = request_line(trainer_seed=11)
        first, _ = self.run(line)
        torch.manual_seed(999)  # interpreter state must not leak into results
        second, _ = self.run(line)
        assert first == second

    @pytest.mark.parametrize("over,needle", [
        ({"type": "train"}, "type"),
        ({"protocol_version": 2}, "protocol_version"),
        ({"policy_id": ""}, "policy_id"),
        ({"policy_id": 7}, "policy_id"),
        ({"train_epochs": 0}, "train_epochs"),
        ({"train_epochs": "ten"}, "train_epochs"),
        ({"train_epochs": True}, "train_epochs"),
        ({"trainer_seed": -1}, "trainer_seed"),
        ({"trainer_seed": 1.5}, "trainer_seed"),
        ({"architecture": "wide"}, "architecture"),
    ])
    def test_validation_failures(self, over, needle):
        response, code = self.run(request_line(**over))
        assert code == 0
        assert response["type"] == "error"
        assert needle in response["message"]

    def test_json_array_rejected(self):
        response, code = self.run("[1, 2, 3]")
        assert code == 1
        assert response["type"] == "error"

    def test_bad_architecture_reported(self):
        bad = desc([[2, 2, 2, 2]] * 6)
        bad["down_blocks"][0]["layers"][0]["num_filters"] = 0
        response, code = self.run(request_line(architecture=bad))
        assert code == 0
        assert response["type"] == "error"
        assert response["message"].startswith("bad architecture")
        assert response["policy_id"] == "e1-p0"

    def test_missing_raw_policy_is_fine(self):
        line = request_line()
        req = json.loads(line)
        del req["raw_policy"]
        response, _ = self.run(json.dumps(req))
        assert response["type"] == "result"
