"""AST node types for MiniImp.

Programs are immutable; structural equality ignores source locations, so a
program and its formatted-then-reparsed twin compare equal.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union


@dataclass(frozen=True)
class Loc:
    line: int
    col: int


# --- expressions ---


@dataclass(frozen=True)
class Literal:
    """Atomic literal: int, float (incl. inf), bool, str, or None."""

    value: object

    def __eq__(self, other):
        # dataclass eq would treat 2 == 2.0 and True == 1; literals must keep
        # the lexical type distinct
        return (
            isinstance(other, Literal)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self):
        return hash((type(self.value).__name__, self.value))


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryOp:
    op: str  # "-" or "not"
    operand: "Expr"


@dataclass(frozen=True)
class Index:
    base: "Expr"
    index: "Expr"


@dataclass(frozen=True)
class Call:
    func: str  # one of BUILTINS
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class ListLit:
    items: Tuple["Expr", ...]


@dataclass(frozen=True)
class SetLit:
    items: Tuple["Expr", ...]


Expr = Union[Literal, Var, BinOp, UnaryOp, Index, Call, ListLit, SetLit]

BUILTINS = ("len", "abs", "min", "max")


# --- statements ---


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class IndexAssign:
    target: str
    index: Expr
    value: Expr
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class Append:
    target: str
    value: Expr
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then_body: Tuple["Stmt", ...]
    else_body: Tuple["Stmt", ...]
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Tuple["Stmt", ...]
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class For:
    var: str
    start: Expr
    stop: Expr
    step: Optional[Expr]
    body: Tuple["Stmt", ...]
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class Break:
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class Continue:
    loc: Optional[Loc] = field(default=None, compare=False)


@dataclass(frozen=True)
class Return:
    value: Expr
    loc: Optional[Loc] = field(default=None, compare=False)


Stmt = Union[Assign, IndexAssign, Append, If, While, For, Break, Continue, Return]


@dataclass(frozen=True)
class Program:
    name: str
    params: Tuple[str, ...]
    body: Tuple[Stmt, ...]

    @property
    def source_hash(self) -> int:
        """64-bit content hash of the canonical pretty-print."""
        from .formatter import format_program

        digest = hashlib.sha256(format_program(self).encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")


def count_nodes(node) -> int:
    """Number of AST nodes in a statement/expression tree (Program counts 1)."""
    if isinstance(node, Program):
        return 1 + sum(count_nodes(s) for s in node.body)
    if isinstance(node, (Literal, Var, Break, Continue)):
        return 1
    if isinstance(node, BinOp):
        return 1 + count_nodes(node.left) + count_nodes(node.right)
    if isinstance(node, UnaryOp):
        return 1 + count_nodes(node.operand)
    if isinstance(node, Index):
        return 1 + count_nodes(node.base) + count_nodes(node.index)
    if isinstance(node, Call):
        return 1 + sum(count_nodes(a) for a in node.args)
    if isinstance(node, (ListLit, SetLit)):
        return 1 + sum(count_nodes(i) for i in node.items)
    if isinstance(node, (Assign, Append)):
        return 1 + count_nodes(node.value)
    if isinstance(node, IndexAssign):
        return 1 + count_nodes(node.index) + count_nodes(node.value)
    if isinstance(node, If):
        return (
            1
            + count_nodes(node.cond)
            + sum(count_nodes(s) for s in node.then_body)
            + sum(count_nodes(s) for s in node.else_body)
        )
    if isinstance(node, While):
        return 1 + count_nodes(node.cond) + sum(count_nodes(s) for s in node.body)
    if isinstance(node, For):
        n = 1 + count_nodes(node.start) + count_nodes(node.stop)
        if node.step is not None:
            n += count_nodes(node.step)
        return n + sum(count_nodes(s) for s in node.body)
    if isinstance(node, Return):
        return 1 + count_nodes(node.value)
    raise TypeError("not an AST node: %r" % (node,))


def list_variables(p: Program):
    """Ordered variable list V: parameters first, then every other variable at
    its first textual definition point, each name once."""
    seen = list(p.params)

    def visit(stmts):
        for s in stmts:
            if isinstance(s, Assign) and s.target not in seen:
                seen.append(s.target)
            elif isinstance(s, (IndexAssign, Append)) and s.target not in seen:
                seen.append(s.target)
            elif isinstance(s, If):
                visit(s.then_body)
                visit(s.else_body)
            elif isinstance(s, While):
                visit(s.body)
            elif isinstance(s, For):
                if s.var not in seen:
                    seen.append(s.var)
                visit(s.body)

    visit(p.body)
    return list(seen)
