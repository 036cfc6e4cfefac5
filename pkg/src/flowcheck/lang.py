"""Abstract syntax, parser and canonical printer for the while-language.

Programs are immutable trees of frozen dataclasses. Long statement lists are
right-nested `Seq` chains, so every traversal here walks the spine of a chain
with a loop and only recurses into nested bodies.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Literal, TypeAlias

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import (
    UnexpectedCharacters,
    UnexpectedEOF,
    UnexpectedInput,
    UnexpectedToken,
)

from flowcheck.errors import DuplicatePointError, ParseError
from flowcheck.logging import get_logger

logger = get_logger(__name__)

GRAMMAR_PATH = Path(__file__).parent / "while.lark"

BINARY_OPS = ("+", "-", "*", "==", "!=", "<", "<=", ">", ">=", "&&", "||")
UNARY_OPS = ("-", "!")
KEYWORDS = frozenset(
    {"skip", "if", "else", "while", "out", "on", "allow", "revoke", "true", "false"}
)


# Expressions


@dataclass(frozen=True, slots=True)
class Lit:
    value: int


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class UnOp:
    op: str
    operand: Expr


Expr: TypeAlias = Lit | Var | BinOp | UnOp


# Commands


@dataclass(frozen=True, slots=True)
class Skip:
    pass


@dataclass(frozen=True, slots=True)
class Seq:
    first: Command
    second: Command


@dataclass(frozen=True, slots=True)
class Assign:
    target: str
    rhs: Expr


@dataclass(frozen=True, slots=True)
class If:
    cond: Expr
    then: Command
    orelse: Command


@dataclass(frozen=True, slots=True)
class While:
    cond: Expr
    body: Command


@dataclass(frozen=True, slots=True)
class Out:
    rhs: Expr
    channel: str
    point: str


@dataclass(frozen=True, slots=True)
class Directive:
    """Grant (`allow`) or withdraw (`revoke`) the flow of `subject` to `channel`."""

    action: Literal["allow", "revoke"]
    subject: Expr
    channel: str


Command: TypeAlias = Skip | Seq | Assign | If | While | Out | Directive


@dataclass(frozen=True, slots=True, order=True)
class ChannelPoint:
    """An output point `p` paired with the channel it writes to, printed `a@p`."""

    channel: str
    point: str

    def __str__(self) -> str:
        return f"{self.channel}@{self.point}"

    @classmethod
    def parse(cls, text: str) -> ChannelPoint:
        channel, sep, point = text.strip().partition("@")
        if not sep or not channel or not point:
            raise ParseError(f"expected a channel point like 'a@p1', got {text!r}")
        return cls(channel, point)


# Construction helpers


def seq(*commands: Command) -> Command:
    """Chain commands into a right-nested sequence; no commands means `skip`."""
    if not commands:
        return Skip()
    result = commands[-1]
    for command in reversed(commands[:-1]):
        result = Seq(command, result)
    return result


def flatten(c: Command) -> list[Command]:
    """The items along the right spine of a sequence, so `seq(*flatten(c)) == c`."""
    items: list[Command] = []
    while isinstance(c, Seq):
        items.append(c.first)
        c = c.second
    items.append(c)
    return items


def statements(c: Command) -> Iterator[Command]:
    """Every non-sequence sub-command in source order, compound ones included."""
    stack = [c]
    while stack:
        node = stack.pop()
        match node:
            case Seq(first, second):
                stack.append(second)
                stack.append(first)
            case If(_, then, orelse):
                yield node
                stack.append(orelse)
                stack.append(then)
            case While(_, body):
                yield node
                stack.append(body)
            case _:
                yield node


@lru_cache(maxsize=4096)
def fv(e: Expr) -> frozenset[str]:
    match e:
        case Lit():
            return frozenset()
        case Var(name):
            return frozenset({name})
        case BinOp(_, left, right):
            return fv(left) | fv(right)
        case UnOp(_, operand):
            return fv(operand)
    raise TypeError(f"not an expression: {e!r}")


def program_variables(c: Command, include_directives: bool = True) -> frozenset[str]:
    names: set[str] = set()
    for node in statements(c):
        match node:
            case Assign(target, rhs):
                names.add(target)
                names |= fv(rhs)
            case If(cond) | While(cond):
                names |= fv(cond)
            case Out(rhs):
                names |= fv(rhs)
            case Directive(subject=subject) if include_directives:
                names |= fv(subject)
    return frozenset(names)


def outputs(c: Command) -> list[Out]:
    return [node for node in statements(c) if isinstance(node, Out)]


def channels(c: Command) -> frozenset[str]:
    """Channels some output statement writes to."""
    return frozenset(out.channel for out in outputs(c))


def points(c: Command) -> frozenset[ChannelPoint]:
    return frozenset(ChannelPoint(out.channel, out.point) for out in outputs(c))


def directives(c: Command) -> list[Directive]:
    return [node for node in statements(c) if isinstance(node, Directive)]


def _map_commands(c: Command, leaf) -> Command:
    match c:
        case Seq():
            return seq(*(_map_commands(item, leaf) for item in flatten(c)))
        case If(cond, then, orelse):
            return If(cond, _map_commands(then, leaf), _map_commands(orelse, leaf))
        case While(cond, body):
            return While(cond, _map_commands(body, leaf))
    return leaf(c)


def erase_directives(c: Command) -> Command:
    """Replace each directive by `{ skip; skip }`, which takes the same silent steps."""

    def erase(node: Command) -> Command:
        return Seq(Skip(), Skip()) if isinstance(node, Directive) else node

    return _map_commands(c, erase)


# Parsing


@lru_cache(maxsize=1)
def _parser() -> Lark:
    return Lark(
        GRAMMAR_PATH.read_text(),
        start=["program", "expr"],
        parser="lalr",
    )


def _binary(op: str):
    def build(self, left: Expr, right: Expr) -> Expr:
        return BinOp(op, left, right)

    return build


@v_args(inline=True)
class _ToAst(Transformer):
    def __init__(self) -> None:
        super().__init__()
        self.explicit_points: list[tuple[Token, str]] = []

    def number(self, token: Token) -> Expr:
        return Lit(int(token))

    def true(self) -> Expr:
        return Lit(1)

    def false(self) -> Expr:
        return Lit(0)

    def var(self, token: Token) -> Expr:
        return Var(str(token))

    def neg(self, operand: Expr) -> Expr:
        if isinstance(operand, Lit):
            return Lit(-operand.value)
        return UnOp("-", operand)

    def not_(self, operand: Expr) -> Expr:
        return UnOp("!", operand)

    add = _binary("+")
    sub = _binary("-")
    mul = _binary("*")
    eq = _binary("==")
    ne = _binary("!=")
    lt = _binary("<")
    le = _binary("<=")
    gt = _binary(">")
    ge = _binary(">=")
    and_ = _binary("&&")
    or_ = _binary("||")

    def skip(self) -> Command:
        return Skip()

    def assign(self, target: Token, rhs: Expr) -> Command:
        return Assign(str(target), rhs)

    def if_(self, cond: Expr, then: Command, orelse: Command | None = None) -> Command:
        return If(cond, then, orelse if orelse is not None else Skip())

    def while_(self, cond: Expr, body: Command) -> Command:
        return While(cond, body)

    def out(self, rhs: Expr, channel: Token, point: Token | None = None) -> Command:
        if point is None:
            return Out(rhs, str(channel), "")
        self.explicit_points.append((point, str(channel)))
        return Out(rhs, str(channel), str(point))

    def allow(self, subject: Expr, channel: Token) -> Command:
        return Directive("allow", subject, str(channel))

    def revoke(self, subject: Expr, channel: Token) -> Command:
        return Directive("revoke", subject, str(channel))

    def block(self, program: Command) -> Command:
        return program

    def program(self, *items: Command) -> Command:
        return seq(*items)


def _parse_tree(text: str, start: str):
    try:
        return _parser().parse(text, start=start)
    except UnexpectedEOF as exc:
        raise ParseError("unexpected end of input") from exc
    except UnexpectedCharacters as exc:
        raise ParseError(
            f"unexpected character {exc.char!r}", exc.line, exc.column
        ) from exc
    except UnexpectedToken as exc:
        found = "end of input" if exc.token.type == "$END" else repr(str(exc.token))
        line = exc.line if exc.line > 0 else None
        raise ParseError(f"unexpected {found}", line, exc.column) from exc
    except UnexpectedInput as exc:
        raise ParseError(str(exc)) from exc


def _fresh_points(taken: Iterable[str]) -> Iterator[str]:
    taken = set(taken)
    index = 0
    while True:
        index += 1
        if (name := f"p{index}") not in taken:
            yield name


def parse_expression(text: str) -> Expr:
    return _ToAst().transform(_parse_tree(text, "expr"))


def parse_program(source: str) -> Command:
    """Parse a program, numbering unannotated outputs `p1, p2, ...` in source order.

    Automatic names skip every point the source annotates explicitly. A point
    annotated on two different channels raises `DuplicatePointError`.
    """
    builder = _ToAst()
    command = builder.transform(_parse_tree(source, "program"))

    owners: dict[str, str] = {}
    for token, channel in builder.explicit_points:
        owner = owners.setdefault(str(token), channel)
        if owner != channel:
            raise DuplicatePointError(
                f"point {token} is used on channels {owner} and {channel}",
                token.line,
                token.column,
            )

    fresh = _fresh_points(owners)

    def number(node: Command) -> Command:
        if isinstance(node, Out) and not node.point:
            return Out(node.rhs, node.channel, next(fresh))
        return node

    command = _map_commands(command, number)
    logger.debug(f"Parsed program with {len(points(command))} output points")
    return command


# Printing

_PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "==": 3,
    "!=": 3,
    "<": 4,
    "<=": 4,
    ">": 4,
    ">=": 4,
    "+": 5,
    "-": 5,
    "*": 6,
}
_UNARY_PRECEDENCE = 7
_ATOM_PRECEDENCE = 8
INDENT = "    "


def pretty_expr(e: Expr, context: int = 0) -> str:
    """Print with the fewest parentheses that parse back to the same tree."""
    match e:
        case Lit(value):
            text = str(value)
            precedence = _UNARY_PRECEDENCE if value < 0 else _ATOM_PRECEDENCE
        case Var(name):
            text, precedence = name, _ATOM_PRECEDENCE
        case BinOp(op, left, right):
            precedence = _PRECEDENCE[op]
            # operators are left-associative
            text = (
                f"{pretty_expr(left, precedence)} {op} "
                f"{pretty_expr(right, precedence + 1)}"
            )
        case UnOp(op, operand):
            text = op + pretty_expr(operand, _UNARY_PRECEDENCE)
            precedence = _UNARY_PRECEDENCE
        case _:
            raise TypeError(f"not an expression: {e!r}")
    return f"({text})" if precedence < context else text


def _lines(c: Command, depth: int) -> list[str]:
    pad = INDENT * depth
    match c:
        case Seq():
            items = flatten(c)
            lines: list[str] = []
            for index, item in enumerate(items):
                if isinstance(item, Seq):
                    chunk = [f"{pad}{{", *_lines(item, depth + 1), f"{pad}}}"]
                else:
                    chunk = _lines(item, depth)
                if index < len(items) - 1:
                    chunk[-1] += ";"
                lines.extend(chunk)
            return lines
        case Skip():
            return [f"{pad}skip"]
        case Assign(target, rhs):
            return [f"{pad}{target} := {pretty_expr(rhs)}"]
        case If(cond, then, orelse):
            return [
                f"{pad}if ({pretty_expr(cond)}) {{",
                *_lines(then, depth + 1),
                f"{pad}}} else {{",
                *_lines(orelse, depth + 1),
                f"{pad}}}",
            ]
        case While(cond, body):
            return [
                f"{pad}while ({pretty_expr(cond)}) {{",
                *_lines(body, depth + 1),
                f"{pad}}}",
            ]
        case Out(rhs, channel, point):
            where = f" @ {point}" if point else ""
            return [f"{pad}out {pretty_expr(rhs)} on {channel}{where}"]
        case Directive(action, subject, channel):
            return [f"{pad}{action} {pretty_expr(subject)} -> {channel}"]
    raise TypeError(f"not a command: {c!r}")


def pretty(c: Command) -> str:
    return "\n".join(_lines(c, 0)) + "\n"


def program_digest(c: Command) -> str:
    """Content hash of the canonical print, stable under layout and comment edits."""
    return hashlib.sha256(pretty(c).encode()).hexdigest()
