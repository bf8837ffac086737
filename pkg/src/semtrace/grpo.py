"""Group Relative Policy Optimization over product-of-categoricals policies.

A prompt maps to a fixed sequence of independent categorical distributions
(one per decision step); an action sequence picks one index per step.  The
surrogate is the clipped importance-weighted advantage, averaged over samples
and steps, minus a KL penalty against a frozen reference policy.  Gradients
are analytic (softmax Jacobian) and cross-checked against finite differences
in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .evalsuite import canonical_serialize
from .lang import HoleTemplate, Program, instantiate_template
from .rewards import SemPrediction
from .values import Value

KIND_CODEGEN = "codegen"
KIND_ALIGNMENT = "alignment"


@dataclass
class GrpoConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    kl_beta: float = 1e-3
    learning_rate: float = 0.5
    optimizer: str = "sgd"  # "sgd" | "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    std_floor: float = 1e-6

    def validate(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.std_floor <= 0:
            raise ValueError("std_floor must be positive")


def group_advantages(rewards: Sequence[float], std_floor: float = 1e-6) -> List[float]:
    """Group-normalized advantages: (R_i - mean) / max(population std, floor).

    Degenerate groups (all rewards equal) yield exactly zero advantages.
    """
    n = len(rewards)
    if n < 2:
        raise ValueError("a group needs at least 2 rewards")
    rs = [float(r) for r in rewards]
    mean = sum(rs) / n
    centered = [r - mean for r in rs]
    if all(c == 0.0 for c in centered):
        return [0.0] * n
    std = (sum(c * c for c in centered) / n) ** 0.5
    denom = max(std, std_floor)
    return [c / denom for c in centered]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    return shifted - np.log(np.sum(np.exp(shifted)))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def kl_categorical(p_logits: np.ndarray, q_logits: np.ndarray) -> float:
    """Exact KL(softmax(p_logits) || softmax(q_logits))."""
    p_logits = np.asarray(p_logits, dtype=float)
    q_logits = np.asarray(q_logits, dtype=float)
    if p_logits.shape != q_logits.shape:
        raise ValueError("logit vectors must have the same shape")
    lp = log_softmax(p_logits)
    lq = log_softmax(q_logits)
    return float(np.sum(np.exp(lp) * (lp - lq)))


@dataclass
class RolloutSample:
    actions: List[int]
    logp_old: List[float]
    artifact: object = None  # Program, SemPrediction, or None on decode failure
    reward: float = 0.0
    decode_error: Optional[str] = None


@dataclass
class RolloutGroup:
    prompt_id: str
    kind: str  # KIND_CODEGEN | KIND_ALIGNMENT
    samples: List[RolloutSample]
    advantages: Optional[List[float]] = None

    def fill_advantages(self, std_floor: float = 1e-6) -> None:
        self.advantages = group_advantages([s.reward for s in self.samples], std_floor)


class CategoricalSequencePolicy:
    """Base policy: per prompt id, one logit vector per decision step."""

    def __init__(self):
        self.params: Dict[str, List[np.ndarray]] = {}
        self.opt_state: dict = {}

    def step_logits(self, prompt_id: str) -> List[np.ndarray]:
        if prompt_id not in self.params:
            raise KeyError("prompt %r not registered" % prompt_id)
        return self.params[prompt_id]

    def sample(self, prompt_id: str, rng: np.random.Generator):
        """Draw one action per step; returns (actions, per-step log-probs)."""
        actions: List[int] = []
        logps: List[float] = []
        for logits in self.step_logits(prompt_id):
            lp = log_softmax(logits)
            a = int(rng.choice(len(lp), p=np.exp(lp)))
            actions.append(a)
            logps.append(float(lp[a]))
        return actions, logps

    def logprob(self, prompt_id: str, actions: Sequence[int]) -> List[float]:
        step_logits = self.step_logits(prompt_id)
        if len(actions) != len(step_logits):
            raise ValueError("action sequence length mismatch")
        return [float(log_softmax(logits)[a]) for logits, a in zip(step_logits, actions)]

    def grad_logprob(self, prompt_id: str, actions: Sequence[int]) -> List[np.ndarray]:
        """Gradient of the total log-probability w.r.t. each step's logits."""
        grads = []
        for logits, a in zip(self.step_logits(prompt_id), actions):
            p = softmax(logits)
            g = -p
            g[a] += 1.0
            grads.append(g)
        return grads

    def snapshot(self) -> "CategoricalSequencePolicy":
        """Frozen copy usable as the old or reference policy."""
        frozen = CategoricalSequencePolicy()
        frozen.params = {k: [v.copy() for v in vs] for k, vs in self.params.items()}
        return frozen

    def decode(self, prompt_id: str, actions: Sequence[int]):
        raise NotImplementedError

    # --- checkpoint serialization (little-endian float64 logit vectors) ---

    MAGIC = b"SEMPOL01"

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<I", len(self.params)))
            for pid in sorted(self.params):
                raw = pid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                vecs = self.params[pid]
                fh.write(struct.pack("<I", len(vecs)))
                for vec in vecs:
                    fh.write(struct.pack("<I", len(vec)))
                    fh.write(np.asarray(vec, dtype="<f8").tobytes())

    def load(self, path) -> None:
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != self.MAGIC:
                raise ValueError("bad policy checkpoint magic %r" % magic)
            (n_prompts,) = struct.unpack("<I", fh.read(4))
            params: Dict[str, List[np.ndarray]] = {}
            for _ in range(n_prompts):
                (id_len,) = struct.unpack("<I", fh.read(4))
                pid = fh.read(id_len).decode("utf-8")
                (n_steps,) = struct.unpack("<I", fh.read(4))
                vecs = []
                for _ in range(n_steps):
                    (dim,) = struct.unpack("<I", fh.read(4))
                    vecs.append(np.frombuffer(fh.read(8 * dim), dtype="<f8").astype(float))
                params[pid] = vecs
        # loaded vectors replace any registered initializations
        self.params.update(params)


class TemplatePolicy(CategoricalSequencePolicy):
    """Toy code-generation policy: one categorical per template hole."""

    def __init__(self):
        super().__init__()
        self.templates: Dict[str, HoleTemplate] = {}

    def register_template(self, prompt_id: str, template: HoleTemplate) -> None:
        self.templates[prompt_id] = template
        if prompt_id not in self.params:
            self.params[prompt_id] = [
                np.zeros(len(vocab), dtype=float) for vocab in template.hole_vocab
            ]

    def decode(self, prompt_id: str, actions: Sequence[int]) -> Program:
        return instantiate_template(self.templates[prompt_id], list(actions))


class ValuePredictorPolicy(CategoricalSequencePolicy):
    """Toy trace-inference policy: per alignment prompt, one categorical per
    listed variable, over a deterministic candidate value pool."""

    def __init__(self):
        super().__init__()
        self.pools: Dict[str, List[Value]] = {}
        self.variables: Dict[str, List[str]] = {}

    def register_prompt(self, prompt_id: str, variables: Sequence[str], pool: Sequence[Value]) -> None:
        self.pools[prompt_id] = list(pool)
        self.variables[prompt_id] = list(variables)
        if prompt_id not in self.params:
            self.params[prompt_id] = [
                np.zeros(len(pool), dtype=float) for _ in variables
            ]

    def decode(self, prompt_id: str, actions: Sequence[int]) -> SemPrediction:
        pool = self.pools[prompt_id]
        names = self.variables[prompt_id]
        return SemPrediction(variables={v: pool[a] for v, a in zip(names, actions)})


def candidate_value_pool(program: Program, input_values: Sequence[Value], truth: Dict[str, Value]) -> List[Value]:
    """Deterministic candidate pool: literal constants in the program, atomic
    values from the input, a small base set, and the ground-truth values
    themselves (so the optimum is attainable); deduplicated and ordered by
    canonical serialization."""
    from .lang import nodes

    values: List[Value] = []

    def walk_expr(e):
        if isinstance(e, nodes.Literal):
            values.append(e.value)
        elif isinstance(e, nodes.BinOp):
            walk_expr(e.left)
            walk_expr(e.right)
        elif isinstance(e, nodes.UnaryOp):
            walk_expr(e.operand)
        elif isinstance(e, nodes.Index):
            walk_expr(e.base)
            walk_expr(e.index)
        elif isinstance(e, nodes.Call):
            for a in e.args:
                walk_expr(a)
        elif isinstance(e, (nodes.ListLit, nodes.SetLit)):
            for i in e.items:
                walk_expr(i)

    def walk_stmts(stmts):
        for s in stmts:
            if isinstance(s, nodes.Assign):
                walk_expr(s.value)
            elif isinstance(s, nodes.IndexAssign):
                walk_expr(s.index)
                walk_expr(s.value)
            elif isinstance(s, nodes.Append):
                walk_expr(s.value)
            elif isinstance(s, nodes.If):
                walk_expr(s.cond)
                walk_stmts(s.then_body)
                walk_stmts(s.else_body)
            elif isinstance(s, nodes.While):
                walk_expr(s.cond)
                walk_stmts(s.body)
            elif isinstance(s, nodes.For):
                walk_expr(s.start)
                walk_expr(s.stop)
                if s.step is not None:
                    walk_expr(s.step)
                walk_stmts(s.body)
            elif isinstance(s, nodes.Return):
                walk_expr(s.value)

    walk_stmts(program.body)

    def atoms(v):
        from .values import MimSet

        if isinstance(v, (list, MimSet)):
            for x in v:
                yield from atoms(x)
        else:
            yield v

    for v in input_values:
        values.extend(atoms(v))
    values.extend([-1, 0, 1, 2, True, False, None, float("inf")])
    values.extend(truth.values())

    seen = set()
    pool = []
    for v in values:
        key = canonical_serialize(v)
        if key not in seen:
            seen.add(key)
            pool.append(v)
    pool.sort(key=canonical_serialize)
    return pool


def sample_rollouts(
    policy: CategoricalSequencePolicy,
    prompt_id: str,
    kind: str,
    group_size: int,
    rng: np.random.Generator,
) -> RolloutGroup:
    """Draw G independent samples with frozen old log-probabilities; rewards
    are filled in by the caller.  Decode failures become reward-0 samples."""
    samples: List[RolloutSample] = []
    for _ in range(group_size):
        actions, logps = policy.sample(prompt_id, rng)
        sample = RolloutSample(actions=actions, logp_old=logps)
        try:
            sample.artifact = policy.decode(prompt_id, actions)
        except Exception as exc:  # decode must never be fatal
            sample.artifact = None
            sample.decode_error = str(exc)
            sample.reward = 0.0
        samples.append(sample)
    return RolloutGroup(prompt_id=prompt_id, kind=kind, samples=samples)


@dataclass
class SurrogateMetrics:
    objective: float
    kl: float
    clip_fraction: float
    mean_ratio: float


def surrogate_and_grad(
    policy: CategoricalSequencePolicy,
    group: RolloutGroup,
    ref_policy: Optional[CategoricalSequencePolicy],
    cfg: GrpoConfig,
):
    """Clipped surrogate objective and its analytic gradient for one group.

    Returns ``(objective, grads, metrics)`` where ``grads`` maps the group's
    prompt id to per-step logit gradients (ascent direction).  Where the
    clipped branch of ``min`` is active its gradient is zero.
    """
    if group.advantages is None:
        raise ValueError("advantages must be populated before the surrogate")
    pid = group.prompt_id
    step_logits = policy.step_logits(pid)
    n_steps = len(step_logits)
    grads = [np.zeros_like(v) for v in step_logits]
    log_ps = [log_softmax(v) for v in step_logits]
    ps = [np.exp(lp) for lp in log_ps]

    G = len(group.samples)
    objective = 0.0
    ratios = []
    clipped_steps = 0
    total_steps = 0
    for sample, adv in zip(group.samples, group.advantages):
        if len(sample.actions) != n_steps:
            raise ValueError("sample/actions mismatch for prompt %r" % pid)
        weight = 1.0 / (G * n_steps)
        for t, (a, lp_old) in enumerate(zip(sample.actions, sample.logp_old)):
            ratio = float(np.exp(log_ps[t][a] - lp_old))
            ratios.append(ratio)
            total_steps += 1
            unclipped = ratio * adv
            clipped = float(np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)) * adv
            if unclipped <= clipped:
                objective += weight * unclipped
                # d(ratio)/d(logits) = ratio * (onehot - p)
                coeff = weight * adv * ratio
                grads[t] -= coeff * ps[t]
                grads[t][a] += coeff
            else:
                objective += weight * clipped
                clipped_steps += 1

    kl_total = 0.0
    for t in range(n_steps):
        if ref_policy is not None and pid in ref_policy.params:
            ref_logits = ref_policy.params[pid][t]
        else:
            ref_logits = np.zeros_like(step_logits[t])
        lq = log_softmax(ref_logits)
        kl_t = float(np.sum(ps[t] * (log_ps[t] - lq)))
        kl_total += kl_t
        # d/dlogits of KL(p||q) = p * ((log p - log q) - KL)
        grads[t] -= cfg.kl_beta * ps[t] * ((log_ps[t] - lq) - kl_t)
    objective -= cfg.kl_beta * kl_total

    metrics = SurrogateMetrics(
        objective=objective,
        kl=kl_total,
        clip_fraction=(clipped_steps / total_steps) if total_steps else 0.0,
        mean_ratio=(sum(ratios) / len(ratios)) if ratios else 0.0,
    )
    return objective, {pid: grads}, metrics


def _apply_update(policy: CategoricalSequencePolicy, grads: Dict[str, List[np.ndarray]], cfg: GrpoConfig) -> None:
    """One ascent update on the accumulated gradients."""
    if cfg.optimizer == "sgd":
        for pid, vecs in grads.items():
            for t, g in enumerate(vecs):
                policy.params[pid][t] += cfg.learning_rate * g
        return
    state = policy.opt_state.setdefault("adam", {"t": 0, "m": {}, "v": {}})
    state["t"] += 1
    t_step = state["t"]
    for pid, vecs in grads.items():
        m_list = state["m"].setdefault(pid, [np.zeros_like(g) for g in vecs])
        v_list = state["v"].setdefault(pid, [np.zeros_like(g) for g in vecs])
        for t, g in enumerate(vecs):
            m_list[t] = cfg.adam_beta1 * m_list[t] + (1 - cfg.adam_beta1) * g
            v_list[t] = cfg.adam_beta2 * v_list[t] + (1 - cfg.adam_beta2) * g * g
            m_hat = m_list[t] / (1 - cfg.adam_beta1 ** t_step)
            v_hat = v_list[t] / (1 - cfg.adam_beta2 ** t_step)
            policy.params[pid][t] += cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


@dataclass
class TrainStepMetrics:
    objective: float
    kl: float
    clip_fraction: float
    mean_reward_codegen: Optional[float]
    mean_reward_alignment: Optional[float]


def train_step(
    policy: CategoricalSequencePolicy,
    groups: Sequence[RolloutGroup],
    ref_policy: Optional[CategoricalSequencePolicy],
    cfg: GrpoConfig,
    group_count: Optional[int] = None,
) -> TrainStepMetrics:
    """One optimizer update on the surrogate averaged over ``groups``.

    ``group_count`` lets a caller average over a larger universe of groups
    (e.g. a mixed batch split across two policies) so that every group keeps
    identical weight.
    """
    if not groups:
        raise ValueError("at least one rollout group is required")
    n = group_count if group_count is not None else len(groups)
    total_grads: Dict[str, List[np.ndarray]] = {}
    objective = 0.0
    kl = 0.0
    clip_fraction = 0.0
    rewards = {KIND_CODEGEN: [], KIND_ALIGNMENT: []}
    for group in groups:
        obj, grads, metrics = surrogate_and_grad(policy, group, ref_policy, cfg)
        objective += obj / n
        kl += metrics.kl / n
        clip_fraction += metrics.clip_fraction / len(groups)
        for s in group.samples:
            rewards[group.kind].append(float(s.reward))
        for pid, vecs in grads.items():
            if pid not in total_grads:
                total_grads[pid] = [np.zeros_like(g) for g in vecs]
            for t, g in enumerate(vecs):
                total_grads[pid][t] += g / n
    _apply_update(policy, total_grads, cfg)
    mean = lambda xs: (sum(xs) / len(xs)) if xs else None
    return TrainStepMetrics(
        objective=objective,
        kl=kl,
        clip_fraction=clip_fraction,
        mean_reward_codegen=mean(rewards[KIND_CODEGEN]),
        mean_reward_alignment=mean(rewards[KIND_ALIGNMENT]),
    )
