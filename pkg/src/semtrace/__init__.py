"""Execution-trace-aligned reinforcement learning for a small imperative
language: interpreter, verifiable rewards, group-relative policy
optimization, mixed-batch scheduling, trace-inference evaluation, and
linear probing utilities.
"""

__version__ = "0.1.0"

from .lang import ParseError, Program, format_program, parse_program
from .rewards import TestCase, gen_reward, sem_reward
from .tracer import ExecutionRecord, execute, final_values, reference_evaluate

__all__ = [
    "ExecutionRecord",
    "ParseError",
    "Program",
    "TestCase",
    "execute",
    "final_values",
    "format_program",
    "gen_reward",
    "parse_program",
    "reference_evaluate",
    "sem_reward",
    "__version__",
]
