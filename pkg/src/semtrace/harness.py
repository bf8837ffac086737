"""Run configuration, dataset ingestion, and persistence helpers.

Datasets are JSONL with canonically serialized values; all file writes go
through :func:`atomic_write_text` (write-temp-then-rename) so a killed run
never leaves a torn file.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from .evalsuite import INF_SENTINEL, NEG_INF_SENTINEL
from .lang import HoleTemplate, TemplateError, instantiate_template
from .rewards import TestCase
from .tracer import DEFAULT_BUDGET
from .values import MimSet, Value

SEED_ENV_VAR = "SEMTRACE_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    batch_size: int = 128
    mini_batch: int = 64
    learning_rate: float = 1e-6
    max_steps: int = 1000
    group_size: int = 8
    align_ratio: float = 0.4
    clip_eps: float = 0.2
    kl_beta: float = 1e-3
    step_budget: int = DEFAULT_BUDGET
    buffer_capacity: int = 4096
    checkpoint_interval: int = 25
    optimizer: str = "sgd"
    std_floor: float = 1e-6
    dataset_path: str = ""
    run_dir: str = ""

    def validate(self) -> None:
        checks = [
            ("batch_size", self.batch_size >= 1),
            ("mini_batch", self.mini_batch >= 1),
            ("learning_rate", self.learning_rate > 0),
            ("max_steps", self.max_steps >= 1),
            ("group_size", self.group_size >= 2),
            ("align_ratio", 0.0 <= self.align_ratio <= 1.0),
            ("clip_eps", 0.0 < self.clip_eps < 1.0),
            ("kl_beta", self.kl_beta >= 0),
            ("step_budget", self.step_budget >= 1),
            ("buffer_capacity", self.buffer_capacity >= 1),
            ("checkpoint_interval", self.checkpoint_interval >= 1),
            ("optimizer", self.optimizer in ("sgd", "adam")),
            ("std_floor", self.std_floor > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError("invalid value for %r: %r" % (name, getattr(self, name)))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError("unknown config fields: %s" % ", ".join(sorted(unknown)))
        cfg = cls(**raw)
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            try:
                cfg.seed = int(env_seed)
            except ValueError:
                raise ConfigError("%s must be an integer, got %r" % (SEED_ENV_VAR, env_seed))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProblemRecord:
    problem_id: str
    template: HoleTemplate
    tests: List[TestCase]

    def validate(self) -> None:
        if not self.tests:
            raise ConfigError("problem %r has no test cases" % self.problem_id)
        try:
            instantiate_template(self.template, [0] * self.template.hole_count)
        except TemplateError as exc:
            raise ConfigError("problem %r template is not instantiable: %s" % (self.problem_id, exc)) from exc


# --- canonical JSON <-> value bridging ---


def decode_json_value(raw) -> Value:
    """JSON value -> MiniImp value, decoding the infinity sentinels."""
    if isinstance(raw, str):
        if raw == INF_SENTINEL:
            return math.inf
        if raw == NEG_INF_SENTINEL:
            return -math.inf
        return raw
    if raw is None or isinstance(raw, (bool, int, float)):
        return raw
    if isinstance(raw, list):
        return [decode_json_value(x) for x in raw]
    raise ValueError("not a valid dataset value: %r" % (raw,))


def encode_json_value(v: Value):
    """MiniImp value -> JSON value (sets become ascending lists)."""
    if isinstance(v, float):
        if math.isinf(v):
            return INF_SENTINEL if v > 0 else NEG_INF_SENTINEL
        return v
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, list):
        return [encode_json_value(x) for x in v]
    if isinstance(v, MimSet):
        return [encode_json_value(x) for x in v.members]
    raise ValueError("not an encodable value: %r" % (v,))


def load_problems(path) -> List[ProblemRecord]:
    """Read a problems JSONL file: {id, template: {source, holes}, tests}."""
    problems: List[ProblemRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                template = HoleTemplate(
                    template_source=raw["template"]["source"],
                    hole_vocab=tuple(tuple(v) for v in raw["template"]["holes"]),
                )
                tests = [
                    TestCase(
                        input=[decode_json_value(v) for v in t["input"]],
                        expected=decode_json_value(t["expected"]),
                    )
                    for t in raw["tests"]
                ]
                record = ProblemRecord(problem_id=raw["id"], template=template, tests=tests)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("problems file %s line %d: %s" % (path, line_no, exc)) from exc
            record.validate()
            problems.append(record)
    if not problems:
        raise ConfigError("problems file %s is empty" % path)
    return problems


# --- atomic persistence ---


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_write_jsonl(path, records: Sequence[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r) + "\n" for r in records))


def read_jsonl(path) -> List[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


class RunLock:
    """Exclusive ownership of a run directory via an O_EXCL lock file."""

    def __init__(self, run_dir):
        self.path = Path(run_dir) / ".lock"
        self._fd: Optional[int] = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError("run directory is locked by another process: %s" % self.path)
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        return False


def subprocess_predictor(command: Sequence[str], timeout: float = 60.0):
    """Predictor adapter: run ``command``, prompt on stdin, text on stdout."""

    def predict(prompt: str) -> str:
        proc = subprocess.run(
            list(command),
            input=prompt.encode("utf-8"),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=timeout,
        )
        if proc.returncode != 0:
            raise RuntimeError(
                "predictor exited with %d: %s" % (proc.returncode, proc.stderr.decode("utf-8", "replace").strip())
            )
        return proc.stdout.decode("utf-8")

    return predict
