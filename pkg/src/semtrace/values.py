"""Runtime values for MiniImp and canonical equality over them.

A MiniImp value is one of: int (signed 64-bit), float (may be +-inf, never
NaN), bool, str, None, list of values, or :class:`MimSet`.  Python's bool is
deliberately treated as a category of its own: ``true`` is not the number 1.
"""

from __future__ import annotations

import math
from typing import Union

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

Value = Union[int, float, bool, str, None, list, "MimSet"]


def is_number(v) -> bool:
    """True for int/float values, excluding booleans."""
    return isinstance(v, (int, float)) and not isinstance(v, bool)


class MimSet:
    """Immutable set of hashable MiniImp values (numbers, booleans, strings).

    Members are deduplicated under canonical equality and stored sorted in
    canonical order (numbers ascending, then booleans, then strings), so
    iteration and serialization are deterministic.
    """

    __slots__ = ("members",)

    def __init__(self, items=()):
        nums, bools, strs = [], [], []
        num_seen, bool_seen, str_seen = set(), set(), set()
        for item in items:
            if isinstance(item, bool):
                if item not in bool_seen:
                    bool_seen.add(item)
                    bools.append(item)
            elif isinstance(item, (int, float)):
                if isinstance(item, float) and math.isnan(item):
                    raise ValueError("NaN cannot be a set member")
                # int and float hash/compare exactly in CPython, so the seen
                # set collapses 2 and 2.0 onto one representative
                if item not in num_seen:
                    num_seen.add(item)
                    nums.append(item)
            elif isinstance(item, str):
                if item not in str_seen:
                    str_seen.add(item)
                    strs.append(item)
            else:
                raise TypeError("unhashable set member: %r" % (item,))
        object.__setattr__(self, "members", tuple(sorted(nums)) + tuple(sorted(bools)) + tuple(sorted(strs)))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, v):
        return any(values_equal(v, m) for m in self.members)

    def __eq__(self, other):
        return isinstance(other, MimSet) and values_equal(self, other)

    def __hash__(self):
        return hash(("MimSet", self.members))

    def __repr__(self):
        return "MimSet(%r)" % (list(self.members),)


def values_equal(a: Value, b: Value) -> bool:
    """Canonical equality: total, with int/float numeric coercion.

    Booleans only equal booleans; 2 == 2.0; +inf == +inf; lists compare
    elementwise; sets compare as their canonically sorted member sequences.
    """
    a_bool, b_bool = isinstance(a, bool), isinstance(b, bool)
    if a_bool or b_bool:
        return a_bool and b_bool and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b  # exact mixed int/float comparison
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, MimSet) and isinstance(b, MimSet):
        return len(a.members) == len(b.members) and all(
            values_equal(x, y) for x, y in zip(a.members, b.members)
        )
    return False


def is_valid_value(v) -> bool:
    """Structural check used by fixtures and loaders."""
    if v is None or isinstance(v, (bool, str)):
        return True
    if isinstance(v, int):
        return INT_MIN <= v <= INT_MAX
    if isinstance(v, float):
        return not math.isnan(v)
    if isinstance(v, list):
        return all(is_valid_value(x) for x in v)
    if isinstance(v, MimSet):
        return all(is_valid_value(x) for x in v.members)
    return False
