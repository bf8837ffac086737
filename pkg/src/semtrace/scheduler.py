"""Mixed-batch training loop: code-generation prompts plus alignment prompts
harvested on the fly from failed rollouts.

Warmup is emergent: while the failure buffer is empty every batch is pure
code generation; once failures accumulate, each batch carries
``floor(align_ratio * batch_size)`` alignment prompts (capped by the buffer).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import grpo
from .evalsuite import canonical_serialize, values_match_truth
from .grpo import (
    KIND_ALIGNMENT,
    KIND_CODEGEN,
    GrpoConfig,
    RolloutGroup,
    TemplatePolicy,
    ValuePredictorPolicy,
    candidate_value_pool,
    sample_rollouts,
    train_step,
)
from .harness import (
    ProblemRecord,
    RunConfig,
    RunLock,
    atomic_write_jsonl,
    atomic_write_text,
    decode_json_value,
    encode_json_value,
)
from .lang import Program, format_program, list_variables, parse_program
from .rewards import GenRewardReport, SemPrediction, gen_reward, sem_reward
from .tracer import DEFAULT_BUDGET, STATUS_RETURNED, execute, final_values
from .values import Value


@dataclass
class AlignmentPrompt:
    prompt_id: str  # hash of (program, input)
    p_fail: Program
    input: List[Value]
    variables: List[str]  # V: first-definition order, restricted to defined vars
    truth: Dict[str, Value]
    origin_step: int

    def to_record(self) -> dict:
        return {
            "id": self.prompt_id,
            "source": format_program(self.p_fail),
            "input": [encode_json_value(v) for v in self.input],
            "variables": list(self.variables),
            "truth": {k: encode_json_value(v) for k, v in self.truth.items()},
            "origin_step": self.origin_step,
        }

    @classmethod
    def from_record(cls, rec: dict, budget: int = DEFAULT_BUDGET) -> "AlignmentPrompt":
        program = parse_program(rec["source"])
        input_values = [decode_json_value(v) for v in rec["input"]]
        prompt = cls(
            prompt_id=rec["id"],
            p_fail=program,
            input=input_values,
            variables=list(rec["variables"]),
            truth={k: decode_json_value(v) for k, v in rec["truth"].items()},
            origin_step=int(rec["origin_step"]),
        )
        # stored ground truth must revalidate against a fresh trace
        fresh = execute(program, input_values, budget=budget)
        if fresh.status != STATUS_RETURNED:
            raise ValueError("alignment prompt %r no longer terminates" % prompt.prompt_id)
        for v in prompt.variables:
            if v not in fresh.final_vars or not values_match_truth(fresh.final_vars[v], prompt.truth[v]):
                raise ValueError("stale ground truth for %r in prompt %r" % (v, prompt.prompt_id))
        # adopt the freshly traced values so the in-memory truth is exact
        prompt.truth = {v: fresh.final_vars[v] for v in prompt.variables}
        return prompt


def alignment_prompt_id(p_fail: Program, input_values: Sequence[Value]) -> str:
    payload = format_program(p_fail) + "\n" + canonical_serialize(list(input_values))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def build_alignment_prompt(
    p_fail: Program,
    tests,
    budget: int = DEFAULT_BUDGET,
    report: Optional[GenRewardReport] = None,
    origin_step: int = 0,
) -> Optional[AlignmentPrompt]:
    """Turn one failed program into an alignment prompt, or None if no test
    input terminates normally or the program defines no variables.

    Input selection: the first failing-but-terminating test, else the first
    terminating test.
    """
    if report is None:
        report = gen_reward(p_fail, tests, budget=budget)
    index = report.first_failing_terminating
    if index is None:
        for i, outcome in enumerate(report.per_test):
            if outcome.status == STATUS_RETURNED:
                index = i
                break
    if index is None:
        return None
    x = list(tests[index].input)
    rec = execute(p_fail, x, budget=budget)
    if rec.status != STATUS_RETURNED:
        return None
    variables = [v for v in list_variables(p_fail) if v in rec.final_vars]
    if not variables:
        return None
    truth = final_values(rec)
    return AlignmentPrompt(
        prompt_id=alignment_prompt_id(p_fail, x),
        p_fail=p_fail,
        input=x,
        variables=variables,
        truth={v: truth[v] for v in variables},
        origin_step=origin_step,
    )


class FailureBuffer:
    """FIFO buffer of alignment prompts, deduplicated by prompt id."""

    def __init__(self, capacity: int = 4096):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries: deque = deque()
        self._ids = set()

    def __len__(self):
        return len(self.entries)

    def __contains__(self, prompt_id: str):
        return prompt_id in self._ids

    def add(self, prompt: AlignmentPrompt) -> bool:
        if prompt.prompt_id in self._ids:
            return False
        self.entries.append(prompt)
        self._ids.add(prompt.prompt_id)
        while len(self.entries) > self.capacity:
            evicted = self.entries.popleft()
            self._ids.discard(evicted.prompt_id)
        return True

    def sample(self, n: int, rng: np.random.Generator) -> List[AlignmentPrompt]:
        """Uniform draw of ``min(n, len)`` distinct entries."""
        n = min(n, len(self.entries))
        if n == 0:
            return []
        idx = rng.choice(len(self.entries), size=n, replace=False)
        pool = list(self.entries)
        return [pool[i] for i in sorted(int(i) for i in idx)]


def harvest_failures(
    group: RolloutGroup,
    tests,
    buffer: FailureBuffer,
    budget: int = DEFAULT_BUDGET,
    origin_step: int = 0,
    reports: Optional[Dict[int, GenRewardReport]] = None,
) -> Tuple[int, int]:
    """Push alignment prompts built from the group's failed samples.

    Returns (added, ineligible).  Only wrong-answer samples whose chosen
    input terminates normally are eligible; duplicates count as neither.
    """
    if group.kind != KIND_CODEGEN:
        raise ValueError("only code-generation groups are harvested")
    added = 0
    ineligible = 0
    for i, sample in enumerate(group.samples):
        if float(sample.reward) != 0.0:
            continue
        if not isinstance(sample.artifact, Program):
            ineligible += 1
            continue
        report = reports.get(i) if reports else None
        prompt = build_alignment_prompt(
            sample.artifact, tests, budget=budget, report=report, origin_step=origin_step
        )
        if prompt is None:
            ineligible += 1
            continue
        if buffer.add(prompt):
            added += 1
    return added, ineligible


class CodePromptPool:
    """Without-replacement sampler over problem ids, reshuffled per epoch."""

    def __init__(self, problem_ids: Sequence[str]):
        if not problem_ids:
            raise ValueError("code prompt pool must be non-empty")
        self.problem_ids = list(problem_ids)
        self.order: List[str] = []
        self.cursor = 0

    def draw(self, n: int, rng: np.random.Generator) -> List[str]:
        out = []
        for _ in range(n):
            if self.cursor >= len(self.order):
                self.order = list(self.problem_ids)
                rng.shuffle(self.order)
                self.cursor = 0
            out.append(self.order[self.cursor])
            self.cursor += 1
        return out

    def state(self) -> dict:
        return {"order": list(self.order), "cursor": self.cursor}

    def restore(self, state: dict) -> None:
        self.order = list(state["order"])
        self.cursor = int(state["cursor"])


@dataclass
class MixedBatch:
    step: int
    code_prompts: List[str]
    align_prompts: List[AlignmentPrompt] = field(default_factory=list)


def mix_batch(
    code_pool: CodePromptPool,
    buffer: FailureBuffer,
    batch_size: int,
    align_ratio: float,
    rng: np.random.Generator,
    step: int = 0,
) -> MixedBatch:
    """Compose one batch: floor(align_ratio * B) alignment prompts (capped by
    the buffer), the remainder code prompts."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    target_align = math.floor(align_ratio * batch_size)
    align_prompts = buffer.sample(target_align, rng)
    code_prompts = code_pool.draw(batch_size - len(align_prompts), rng)
    return MixedBatch(step=step, code_prompts=code_prompts, align_prompts=align_prompts)


# --- end-to-end training ---


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state

def _restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state
    return rng


class Trainer:
    def __init__(self, config: RunConfig, problems: Sequence[ProblemRecord]):
        config.validate()
        self.config = config
        self.problems = {p.problem_id: p for p in problems}
        self.grpo_cfg = GrpoConfig(
            group_size=config.group_size,
            clip_eps=config.clip_eps,
            kl_beta=config.kl_beta,
            learning_rate=config.learning_rate,
            optimizer=config.optimizer,
            std_floor=config.std_floor,
        )
        self.grpo_cfg.validate()
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.code_policy = TemplatePolicy()
        for pid, problem in self.problems.items():
            self.code_policy.register_template(pid, problem.template)
        self.align_policy = ValuePredictorPolicy()
        self.code_ref = self.code_policy.snapshot()
        self.align_ref = self.align_policy.snapshot()
        self.buffer = FailureBuffer(config.buffer_capacity)
        self.pool = CodePromptPool(sorted(self.problems))
        self.step = 0
        self.metrics: List[dict] = []

    # --- one training step ---

    def _register_alignment(self, prompt: AlignmentPrompt) -> None:
        if prompt.prompt_id not in self.align_policy.pools:
            pool = candidate_value_pool(prompt.p_fail, prompt.input, prompt.truth)
            # register_prompt keeps already-loaded logits for known prompts
            self.align_policy.register_prompt(prompt.prompt_id, prompt.variables, pool)

    def run_step(self) -> dict:
        self.step += 1
        batch = mix_batch(
            self.pool,
            self.buffer,
            self.config.batch_size,
            self.config.align_ratio,
            self.rng,
            step=self.step,
        )
        code_groups: List[RolloutGroup] = []
        code_reports: List[Dict[int, GenRewardReport]] = []
        for pid in batch.code_prompts:
            problem = self.problems[pid]
            group = sample_rollouts(self.code_policy, pid, KIND_CODEGEN, self.config.group_size, self.rng)
            reports: Dict[int, GenRewardReport] = {}
            for i, sample in enumerate(group.samples):
                if sample.artifact is None:
                    sample.reward = 0.0
                    continue
                report = gen_reward(sample.artifact, problem.tests, budget=self.config.step_budget)
                reports[i] = report
                sample.reward = float(report.reward)
            group.fill_advantages(self.grpo_cfg.std_floor)
            code_groups.append(group)
            code_reports.append(reports)

        align_groups: List[RolloutGroup] = []
        for prompt in batch.align_prompts:
            self._register_alignment(prompt)
            group = sample_rollouts(
                self.align_policy, prompt.prompt_id, KIND_ALIGNMENT, self.config.group_size, self.rng
            )
            for sample in group.samples:
                if isinstance(sample.artifact, SemPrediction):
                    sample.reward = float(
                        sem_reward(sample.artifact, prompt.truth, prompt.variables)
                    )
                else:
                    sample.reward = 0.0
            group.fill_advantages(self.grpo_cfg.std_floor)
            align_groups.append(group)

        n_total = len(code_groups) + len(align_groups)
        objective = 0.0
        kl = 0.0
        clip_fraction = 0.0
        # mini-batches share the same frozen old log-probabilities (one inner epoch)
        mini = self.config.mini_batch
        all_groups = [(g, self.code_policy, self.code_ref) for g in code_groups] + [
            (g, self.align_policy, self.align_ref) for g in align_groups
        ]
        for start in range(0, len(all_groups), mini):
            chunk = all_groups[start : start + mini]
            for policy, ref in ((self.code_policy, self.code_ref), (self.align_policy, self.align_ref)):
                groups = [g for g, pol, _ in chunk if pol is policy]
                if not groups:
                    continue
                m = train_step(policy, groups, ref, self.grpo_cfg, group_count=n_total)
                objective += m.objective
                kl += m.kl
                clip_fraction += m.clip_fraction * len(groups) / n_total

        gen_rewards = [s.reward for g in code_groups for s in g.samples]
        sem_rewards = [s.reward for g in align_groups for s in g.samples]
        mean_r_gen = sum(gen_rewards) / len(gen_rewards) if gen_rewards else None
        mean_r_sem = sum(sem_rewards) / len(sem_rewards) if sem_rewards else None

        for group, reports in zip(code_groups, code_reports):
            harvest_failures(
                group,
                self.problems[group.prompt_id].tests,
                self.buffer,
                budget=self.config.step_budget,
                origin_step=self.step,
                reports=reports,
            )

        record = {
            "step": self.step,
            "loss": -objective,
            "kl": kl,
            "clip_fraction": clip_fraction,
            "mean_R_gen": mean_r_gen,
            "mean_R_sem": mean_r_sem,
            "buffer_size": len(self.buffer),
            "n_align_in_batch": len(batch.align_prompts),
        }
        self.metrics.append(record)
        return record

    # --- persistence ---

    def save_checkpoint(self, run_dir: Path) -> Path:
        ckpt = run_dir / "checkpoints" / ("step_%d" % self.step)
        ckpt.mkdir(parents=True, exist_ok=True)
        self.code_policy.save(ckpt / "code_policy.bin")
        self.align_policy.save(ckpt / "align_policy.bin")
        buffer_records = [p.to_record() for p in self.buffer.entries]
        atomic_write_jsonl(ckpt / "buffer.jsonl", buffer_records)
        state = {
            "step": self.step,
            "rng": _rng_state(self.rng),
            "pool": self.pool.state(),
            "opt_code": _opt_state_to_json(self.code_policy.opt_state),
            "opt_align": _opt_state_to_json(self.align_policy.opt_state),
        }
        atomic_write_text(ckpt / "state.json", json.dumps(state))
        atomic_write_jsonl(run_dir / "buffer.jsonl", buffer_records)
        return ckpt

    def load_checkpoint(self, ckpt: Path) -> None:
        state = json.loads((ckpt / "state.json").read_text("utf-8"))
        self.step = int(state["step"])
        self.rng = _restore_rng(state["rng"])
        self.pool.restore(state["pool"])
        self.code_policy.load(ckpt / "code_policy.bin")
        self.align_policy.load(ckpt / "align_policy.bin")
        self.code_policy.opt_state = _opt_state_from_json(state["opt_code"])
        self.align_policy.opt_state = _opt_state_from_json(state["opt_align"])
        self.buffer = FailureBuffer(self.config.buffer_capacity)
        for rec in _read_jsonl(ckpt / "buffer.jsonl"):
            prompt = AlignmentPrompt.from_record(rec, budget=self.config.step_budget)
            self.buffer.add(prompt)
            # re-registers pools; loaded logits are kept (params already set)
            self._register_alignment(prompt)


def _opt_state_to_json(opt_state: dict) -> dict:
    if "adam" not in opt_state:
        return {}
    adam = opt_state["adam"]
    conv = lambda table: {pid: [list(map(float, v)) for v in vecs] for pid, vecs in table.items()}
    return {"t": adam["t"], "m": conv(adam["m"]), "v": conv(adam["v"])}


def _opt_state_from_json(raw: dict) -> dict:
    if not raw:
        return {}
    conv = lambda table: {pid: [np.array(v, dtype=float) for v in vecs] for pid, vecs in table.items()}
    return {"adam": {"t": int(raw["t"]), "m": conv(raw["m"]), "v": conv(raw["v"])}}


def _read_jsonl(path) -> List[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def _last_checkpoint(run_dir: Path) -> Optional[Path]:
    ckpt_root = run_dir / "checkpoints"
    if not ckpt_root.is_dir():
        return None
    best = None
    best_step = -1
    for entry in ckpt_root.iterdir():
        if entry.is_dir() and entry.name.startswith("step_"):
            try:
                step = int(entry.name.split("_", 1)[1])
            except ValueError:
                continue
            if step > best_step:
                best_step = step
                best = entry
    return best


def run_training(
    config: RunConfig,
    problems: Sequence[ProblemRecord],
    run_dir,
    resume: bool = False,
) -> Path:
    """Drive the full loop; returns the run directory.

    The run directory receives ``config.json``, ``metrics.jsonl`` (one record
    per step), periodic ``checkpoints/step_<n>/``, and ``buffer.jsonl``.
    Reruns with identical (seed, config, dataset) are bitwise identical.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(run_dir):
        trainer = Trainer(config, problems)
        if resume:
            ckpt = _last_checkpoint(run_dir)
            if ckpt is None:
                raise RuntimeError("no checkpoint to resume from in %s" % run_dir)
            trainer.load_checkpoint(ckpt)
            existing = _read_jsonl(run_dir / "metrics.jsonl")
            trainer.metrics = [r for r in existing if r["step"] <= trainer.step]
        atomic_write_text(run_dir / "config.json", json.dumps(config.to_dict(), indent=2) + "\n")
        while trainer.step < config.max_steps:
            trainer.run_step()
            atomic_write_jsonl(run_dir / "metrics.jsonl", trainer.metrics)
            if trainer.step % config.checkpoint_interval == 0 or trainer.step == config.max_steps:
                trainer.save_checkpoint(run_dir)
        atomic_write_jsonl(run_dir / "buffer.jsonl", [p.to_record() for p in trainer.buffer.entries])
    return run_dir
