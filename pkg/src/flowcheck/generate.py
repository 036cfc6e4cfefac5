"""Seeded random programs and policies for the cross-validation campaigns.

Assignments only ever store 0 or 1, so every run over a {0, 1} universe has
finitely many configurations and exploring it always ends in termination or a
detected cycle. Outputs may add two variables, giving values in {0, 1, 2}.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from flowcheck.lang import (
    Assign,
    BinOp,
    Command,
    Directive,
    Expr,
    If,
    Lit,
    Out,
    Skip,
    UnOp,
    Var,
    While,
    seq,
)
from flowcheck.policy import DynamicPolicySpec, PolicyState

VARIABLES = ("x", "y", "z")
CHANNELS = ("a", "b")
_COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass
class ProgramGenerator:
    """Random programs of at most `max_statements` statements over `variables`."""

    rng: random.Random
    max_statements: int = 12
    variables: tuple[str, ...] = VARIABLES
    channels: tuple[str, ...] = CHANNELS
    directives: bool = False
    max_depth: int = 2

    def __post_init__(self) -> None:
        self._budget = 0
        self._points = 0

    def program(self) -> Command:
        self._budget = self.rng.randint(1, self.max_statements)
        self._points = 0
        return self._block(0)

    def _var(self) -> Var:
        return Var(self.rng.choice(self.variables))

    def boolean(self) -> Expr:
        match self.rng.randrange(4):
            case 0:
                return self._var()
            case 1:
                return UnOp("!", self._var())
            case 2:
                op = self.rng.choice(_COMPARISONS)
                return BinOp(op, self._var(), self._var())
            case _:
                op = self.rng.choice(("&&", "||"))
                return BinOp(op, self._var(), self._var())

    def _assigned(self) -> Expr:
        match self.rng.randrange(3):
            case 0:
                return Lit(self.rng.randint(0, 1))
            case 1:
                return self._var()
        return self.boolean()

    def _output(self) -> Expr:
        match self.rng.randrange(3):
            case 0:
                return Lit(self.rng.randint(0, 2))
            case 1:
                return self._var()
        return BinOp("+", self._var(), self._var())

    def _statement(self, depth: int) -> Command:
        self._budget -= 1
        kinds = ["assign", "assign", "out", "out", "skip"]
        if depth < self.max_depth and self._budget > 1:
            kinds += ["if", "while"]
        if self.directives:
            kinds.append("directive")
        match self.rng.choice(kinds):
            case "assign":
                return Assign(self.rng.choice(self.variables), self._assigned())
            case "out":
                self._points += 1
                channel = self.rng.choice(self.channels)
                return Out(self._output(), channel, f"p{self._points}")
            case "if":
                cond = self.boolean()
                then = self._block(depth + 1)
                orelse = Skip()
                if self._budget > 0 and self.rng.random() < 0.5:
                    orelse = self._block(depth + 1)
                return If(cond, then, orelse)
            case "while":
                return While(self.boolean(), self._block(depth + 1))
            case "directive":
                action = self.rng.choice(("allow", "revoke"))
                return Directive(action, self._var(), self.rng.choice(self.channels))
        return Skip()

    def _block(self, depth: int) -> Command:
        # the top level spends the whole budget, nested blocks a uniform share
        length = self._budget
        if depth > 0:
            length = self.rng.randint(1, max(1, self._budget))
        items = [self._statement(depth)]
        while self._budget > 0 and len(items) < length:
            items.append(self._statement(depth))
        return seq(*items)


def random_program(
    seed: int,
    max_statements: int = 12,
    variables: tuple[str, ...] = VARIABLES,
    directives: bool = False,
) -> Command:
    rng = random.Random(seed)
    return ProgramGenerator(
        rng, max_statements, variables, directives=directives
    ).program()


def random_policy(
    seed: int,
    variables: tuple[str, ...] = VARIABLES,
    channels: tuple[str, ...] = CHANNELS,
) -> DynamicPolicySpec:
    """An initial policy granting each variable to each channel with even odds."""
    rng = random.Random(seed)
    allowed = {
        channel: [name for name in variables if rng.random() < 0.5]
        for channel in channels
    }
    return DynamicPolicySpec(PolicyState.from_mapping(allowed))


def straight_line_program(statements: int, variables: int, seed: int = 0) -> Command:
    """Assignments `xi := xj + xk` with an output every tenth statement."""
    rng = random.Random(seed)
    names = [f"x{index}" for index in range(variables)]
    items: list[Command] = []
    for index in range(statements):
        if index % 10 == 9:
            items.append(Out(Var(rng.choice(names)), "a", f"p{index}"))
        else:
            rhs = BinOp("+", Var(rng.choice(names)), Var(rng.choice(names)))
            items.append(Assign(rng.choice(names), rhs))
    return seq(*items)
