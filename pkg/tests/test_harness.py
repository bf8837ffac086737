"""Configuration, dataset loading, atomic persistence, locking."""

import json
import math

import pytest

from semtrace.harness import (
    ConfigError,
    RunConfig,
    RunLock,
    SEED_ENV_VAR,
    atomic_write_jsonl,
    atomic_write_text,
    decode_json_value,
    encode_json_value,
    load_problems,
    read_jsonl,
)
from semtrace.values import MimSet


def test_defaults_are_valid():
    RunConfig().validate()


def test_validation_names_the_bad_field():
    cfg = RunConfig(align_ratio=1.5)
    with pytest.raises(ConfigError) as exc:
        cfg.validate()
    assert "align_ratio" in str(exc.value)


@pytest.mark.parametrize(
    "field,value",
    [
        ("batch_size", 0),
        ("group_size", 1),
        ("clip_eps", 0.0),
        ("learning_rate", -1.0),
        ("optimizer", "rmsprop"),
        ("std_floor", 0.0),
    ],
)
def test_invalid_fields_rejected(field, value):
    cfg = RunConfig(**{field: value})
    with pytest.raises(ConfigError) as exc:
        cfg.validate()
    assert field in str(exc.value)


def test_from_file_rejects_unknown_fields(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 1, "warp_factor": 9}))
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_file(path)
    assert "warp_factor" in str(exc.value)


def test_env_var_overrides_seed(tmp_path, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 1}))
    monkeypatch.setenv(SEED_ENV_VAR, "77")
    assert RunConfig.from_file(path).seed == 77
    monkeypatch.setenv(SEED_ENV_VAR, "not-a-number")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_json_value_round_trip():
    values = [1, 2.5, True, None, "s", [1, [2, "x"]], math.inf, -math.inf]
    for v in values:
        assert decode_json_value(encode_json_value(v)) == v
    assert encode_json_value(MimSet([3, 1])) == [1, 3]


def test_load_problems(tmp_path):
    record = {
        "id": "sum",
        "template": {
            "source": "fn s(a, b) {\n    t = a __HOLE_1__ b\n    return t\n}\n",
            "holes": [["+", "-"]],
        },
        "tests": [{"input": [1, 2], "expected": 3}],
    }
    path = tmp_path / "problems.jsonl"
    path.write_text(json.dumps(record) + "\n")
    problems = load_problems(path)
    assert problems[0].problem_id == "sum"
    assert problems[0].tests[0].expected == 3


def test_load_problems_reports_line_number(tmp_path):
    path = tmp_path / "problems.jsonl"
    path.write_text('{"id": "x"}\n')
    with pytest.raises(ConfigError) as exc:
        load_problems(path)
    assert "line 1" in str(exc.value)


def test_load_problems_rejects_empty_tests(tmp_path):
    record = {
        "id": "p",
        "template": {"source": "fn f(a) {\n    b = a __HOLE_1__ 1\n    return b\n}\n", "holes": [["+"]]},
        "tests": [],
    }
    path = tmp_path / "problems.jsonl"
    path.write_text(json.dumps(record) + "\n")
    with pytest.raises(ConfigError):
        load_problems(path)


def test_atomic_write_leaves_no_temp_file(tmp_path):
    path = tmp_path / "out.txt"
    atomic_write_text(path, "hello\n")
    assert path.read_text() == "hello\n"
    assert list(tmp_path.iterdir()) == [path]


def test_jsonl_round_trip(tmp_path):
    path = tmp_path / "data.jsonl"
    records = [{"a": 1}, {"b": [2, 3]}]
    atomic_write_jsonl(path, records)
    assert read_jsonl(path) == records


def test_run_lock_exclusive(tmp_path):
    with RunLock(tmp_path):
        with pytest.raises(RuntimeError):
            with RunLock(tmp_path):
                pass
    # released on exit
    with RunLock(tmp_path):
        pass


def test_run_lock_removes_file(tmp_path):
    lock = RunLock(tmp_path)
    with lock:
        assert lock.path.exists()
    assert not lock.path.exists()
