import numpy as np
import pytest

from semtrace.harness import ProblemRecord
from semtrace.lang import HoleTemplate, parse_program
from semtrace.rewards import TestCase

SUM_SRC = "fn s() {\n    t = 0\n    for i in range(1, 4) {\n        t = t + i\n    }\n    return t\n}\n"
IDENTITY_SRC = "fn id(x) {\n    return x\n}\n"


@pytest.fixture
def sum_program():
    return parse_program(SUM_SRC)


@pytest.fixture
def identity_program():
    return parse_program(IDENTITY_SRC)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_problem(pid, truth_op="+", extra=0):
    """One-hole arithmetic problem; sources differ per pid so failing
    instantiations from different problems never collide in the buffer."""
    src = (
        "fn f_%s(a, b) {\n"
        "    t = a __HOLE_1__ b\n"
        "    r = t + %d\n"
        "    return r\n"
        "}\n" % (pid, extra)
    )
    template = HoleTemplate(template_source=src, hole_vocab=(("+", "-", "*"),))
    ops = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b}
    fn = ops[truth_op]
    tests = [
        TestCase(input=[a, b], expected=fn(a, b) + extra)
        for a, b in [(2, 3), (5, 7), (10, 4)]
    ]
    return ProblemRecord(problem_id=pid, template=template, tests=tests)
