"""Trace-inference evaluation: canonical serialization, strict prediction
parsing, Exact@1 scoring, and pass@1 aggregation.

The canonical text form is a single line of strict JSON with keys
"final_output" and "variables"; sets appear as ascending lists and the
infinities as the sentinel strings ``"__INF__"`` / ``"__-INF__"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence

from .lang import Program, format_program, list_variables, parse_program
from .rewards import TestCase, gen_reward
from .tracer import DEFAULT_BUDGET, STATUS_RETURNED, execute
from .values import MimSet, Value, values_equal

INF_SENTINEL = "__INF__"
NEG_INF_SENTINEL = "__-INF__"


class SerializationError(ValueError):
    pass


class MalformedPrediction(ValueError):
    pass


def canonical_serialize(v: Value) -> str:
    """Deterministic single-line rendering of a value."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return '"%s"' % (INF_SENTINEL if v > 0 else NEG_INF_SENTINEL)
        if math.isnan(v):
            raise SerializationError("NaN is not serializable")
        return repr(v)  # shortest round-trip decimal
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        return "[%s]" % ", ".join(canonical_serialize(x) for x in v)
    if isinstance(v, MimSet):
        # members are already stored in canonical ascending order
        return "[%s]" % ", ".join(canonical_serialize(x) for x in v.members)
    raise SerializationError("unserializable value: %r" % (v,))


def serialize_record(final_output: Value, variables: Dict[str, Value]) -> str:
    """The canonical answer line: final output plus variables in V order."""
    if variables:
        body = ", ".join('"%s": %s' % (k, canonical_serialize(v)) for k, v in variables.items())
        vars_text = "{ %s }" % body
    else:
        vars_text = "{}"
    return '{ "final_output": %s, "variables": %s }' % (canonical_serialize(final_output), vars_text)


def _decode(raw):
    if isinstance(raw, str):
        if raw == INF_SENTINEL:
            return math.inf
        if raw == NEG_INF_SENTINEL:
            return -math.inf
        return raw
    if raw is None or isinstance(raw, (bool, int, float)):
        return raw
    if isinstance(raw, list):
        return [_decode(x) for x in raw]
    raise MalformedPrediction("nested objects are not valid values")


@dataclass
class Prediction:
    final_output: Value
    variables: Dict[str, Value]


def _reject_constant(text):
    raise MalformedPrediction("non-strict JSON literal %r" % text)


def parse_prediction(raw: str) -> Prediction:
    """Parse the last non-empty line of ``raw`` as the strict answer object.

    Raises :class:`MalformedPrediction` for anything that is not one strict
    JSON object with exactly the two required keys; eval runs score such
    predictions as fully incorrect instead of aborting.
    """
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if not lines:
        raise MalformedPrediction("empty prediction")
    last = lines[-1].strip()
    try:
        obj = json.loads(last, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedPrediction("last line is not strict JSON: %s" % exc) from exc
    if not isinstance(obj, dict) or set(obj.keys()) != {"final_output", "variables"}:
        raise MalformedPrediction('expected exactly the keys "final_output" and "variables"')
    if not isinstance(obj["variables"], dict):
        raise MalformedPrediction('"variables" must be an object')
    return Prediction(
        final_output=_decode(obj["final_output"]),
        variables={k: _decode(v) for k, v in obj["variables"].items()},
    )


def values_match_truth(truth: Value, pred: Value) -> bool:
    """Equality with set/list reconciliation against the truth's type: a
    set-valued truth accepts a list prediction only in canonical ascending
    order."""
    if isinstance(truth, MimSet):
        if isinstance(pred, list):
            return values_equal(list(truth.members), pred)
        return values_equal(truth, pred)
    if isinstance(truth, list) and isinstance(pred, list):
        return len(truth) == len(pred) and all(
            values_match_truth(t, q) for t, q in zip(truth, pred)
        )
    return values_equal(truth, pred)


@dataclass
class EvalItem:
    item_id: str
    program: Program
    input: List[Value]
    variables: List[str]  # V, in first-definition order
    truth_output: Value
    truth_vars: Dict[str, Value]


def build_eval_item(item_id: str, program: Program, input_values: Sequence[Value],
                    budget: int = DEFAULT_BUDGET) -> EvalItem:
    """Derive the ground truth for one item by tracing the program."""
    rec = execute(program, list(input_values), budget=budget)
    if rec.status != STATUS_RETURNED:
        raise ValueError("eval item %r does not terminate normally (%s)" % (item_id, rec.status))
    variables = [v for v in list_variables(program) if v in rec.final_vars]
    return EvalItem(
        item_id=item_id,
        program=program,
        input=list(input_values),
        variables=variables,
        truth_output=rec.return_value,
        truth_vars={v: rec.final_vars[v] for v in variables},
    )


def load_eval_items(path, budget: int = DEFAULT_BUDGET) -> List[EvalItem]:
    """Read ``eval_items.jsonl``: one record per line with id, source, input,
    and the expected variable list; ground truth is regenerated by tracing."""
    items: List[EvalItem] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            program = parse_program(rec["source"])
            item = build_eval_item(rec["id"], program, [_decode(v) for v in rec["input"]], budget=budget)
            if "variables" in rec and list(rec["variables"]) != item.variables:
                raise ValueError(
                    "line %d: stored variable list %s does not match traced %s"
                    % (line_no, rec["variables"], item.variables)
                )
            items.append(item)
    return items


_PROMPT_TEMPLATE: Optional[str] = None


def prompt_template() -> str:
    global _PROMPT_TEMPLATE
    if _PROMPT_TEMPLATE is None:
        _PROMPT_TEMPLATE = (
            resources.files("semtrace.resources").joinpath("trace_prompt.txt").read_text("utf-8")
        )
    return _PROMPT_TEMPLATE


def build_prompt(item: EvalItem) -> str:
    """Fill the verbatim prompt template for one eval item."""
    text = prompt_template()
    text = text.replace("{function_name}", item.program.name)
    text = text.replace("{variable_names}", ", ".join('"%s"' % v for v in item.variables))
    text = text.replace("{code}", format_program(item.program).rstrip("\n"))
    text = text.replace("{input}", canonical_serialize(item.input))
    return text


def exact_at_1(pred: Prediction, item: EvalItem) -> bool:
    """True iff the return value and every listed variable are all correct."""
    if not values_match_truth(item.truth_output, pred.final_output):
        return False
    for v in item.variables:
        if v not in pred.variables:
            return False
        if not values_match_truth(item.truth_vars[v], pred.variables[v]):
            return False
    return True


@dataclass
class ItemResult:
    item_id: str
    exact: bool
    output_correct: bool
    per_variable: Dict[str, bool]
    error: Optional[str] = None
    raw: str = ""


@dataclass
class EvalReport:
    items: List[ItemResult] = field(default_factory=list)

    @property
    def exact_at_1(self) -> float:
        if not self.items:
            return 0.0
        return sum(1 for r in self.items if r.exact) / len(self.items)

    def to_dict(self) -> dict:
        return {
            "exact_at_1": self.exact_at_1,
            "n_items": len(self.items),
            "items": [
                {
                    "id": r.item_id,
                    "exact": r.exact,
                    "output_correct": r.output_correct,
                    "per_variable": r.per_variable,
                    "error": r.error,
                }
                for r in self.items
            ],
        }


def score_item(item: EvalItem, raw: str) -> ItemResult:
    try:
        pred = parse_prediction(raw)
    except MalformedPrediction as exc:
        return ItemResult(
            item_id=item.item_id,
            exact=False,
            output_correct=False,
            per_variable={v: False for v in item.variables},
            error=str(exc),
            raw=raw,
        )
    output_correct = values_match_truth(item.truth_output, pred.final_output)
    per_variable = {
        v: v in pred.variables and values_match_truth(item.truth_vars[v], pred.variables[v])
        for v in item.variables
    }
    return ItemResult(
        item_id=item.item_id,
        exact=output_correct and all(per_variable.values()),
        output_correct=output_correct,
        per_variable=per_variable,
        raw=raw,
    )


def run_eval(items: Sequence[EvalItem], predictor: Callable[[str], str]) -> EvalReport:
    """Prompt the predictor for each item, parse and score; a predictor
    failure scores that one item incorrect and is recorded."""
    if not items:
        raise ValueError("at least one eval item is required")
    report = EvalReport()
    for item in items:
        prompt = build_prompt(item)
        try:
            raw = predictor(prompt)
        except Exception as exc:  # predictor is external code
            report.items.append(
                ItemResult(
                    item_id=item.item_id,
                    exact=False,
                    output_correct=False,
                    per_variable={v: False for v in item.variables},
                    error="predictor failed: %s" % exc,
                )
            )
            continue
        report.items.append(score_item(item, raw))
    return report


def oracle_predictor_for(items: Sequence[EvalItem]) -> Callable[[str], str]:
    """Predictor that answers every prompt with the serialized ground truth."""
    by_prompt = {build_prompt(item): item for item in items}

    def predict(prompt: str) -> str:
        item = by_prompt[prompt]
        return serialize_record(item.truth_output, dict(item.truth_vars))

    return predict


def pass_at_1(scored: Sequence[tuple]) -> float:
    """Mean binary functional-correctness over (program, tests) items."""
    if not scored:
        raise ValueError("at least one item is required")
    total = 0
    for program, tests in scored:
        total += gen_reward(program, [t if isinstance(t, TestCase) else TestCase(*t) for t in tests]).reward
    return total / len(scored)
