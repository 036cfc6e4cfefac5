"""Flow-sensitive dependency typing for the while-language with outputs.

A typing maps every typing variable to the set of typing variables its final
value (or, for channel points, the values output there) may depend on. The
environment algebra is `compose`, `union` and `fixpoint`; `infer` applies one
rule per command form.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import Enum
from typing import TypeAlias

from pydantic import BaseModel, Field

from flowcheck.lang import (
    Assign,
    ChannelPoint,
    Command,
    Directive,
    Expr,
    If,
    Out,
    Seq,
    Skip,
    While,
    channels,
    flatten,
    fv,
    points,
    program_variables,
)
from flowcheck.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, slots=True, order=True)
class ProgVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True, order=True)
class Channel:
    """The context of a channel: what decides how many outputs it receives."""

    name: str

    def __str__(self) -> str:
        return f"#{self.name}"


class Pc(Enum):
    PC = "$pc"

    def __str__(self) -> str:
        return self.value


PC = Pc.PC

TypingVar: TypeAlias = ProgVar | Channel | ChannelPoint | Pc

_KIND_ORDER = {Pc: 0, ProgVar: 1, Channel: 2, ChannelPoint: 3}


def var_key(var: TypingVar) -> tuple[int, str]:
    return _KIND_ORDER[type(var)], str(var)


def parse_typing_var(text: str) -> TypingVar:
    if text == str(PC):
        return PC
    if text.startswith("#"):
        return Channel(text[1:])
    if "@" in text:
        return ChannelPoint.parse(text)
    return ProgVar(text)


def _vars(e: Expr) -> frozenset[TypingVar]:
    return frozenset(ProgVar(name) for name in fv(e))


class DepEnv:
    """A dependency environment with identity default.

    Only entries that differ from `{x}` are stored, so equal environments have
    equal representations.
    """

    __slots__ = ("_deps",)

    def __init__(self, deps: Mapping[TypingVar, Iterable[TypingVar]] | None = None):
        self._deps: dict[TypingVar, frozenset[TypingVar]] = {}
        for var, dependencies in (deps or {}).items():
            dependencies = frozenset(dependencies)
            if dependencies != {var}:
                self._deps[var] = dependencies

    @classmethod
    def _trusted(cls, deps: dict[TypingVar, frozenset[TypingVar]]) -> DepEnv:
        env = cls.__new__(cls)
        env._deps = deps
        return env

    def __call__(self, var: TypingVar) -> frozenset[TypingVar]:
        deps = self._deps.get(var)
        return frozenset({var}) if deps is None else deps

    def keys(self) -> frozenset[TypingVar]:
        """Variables whose entry differs from the identity."""
        return frozenset(self._deps)

    def items(self) -> list[tuple[TypingVar, frozenset[TypingVar]]]:
        return sorted(self._deps.items(), key=lambda item: var_key(item[0]))

    def update(self, changes: Mapping[TypingVar, Iterable[TypingVar]]) -> DepEnv:
        """Simultaneous update `Γ[x ↦ S; y ↦ T]`."""
        deps = dict(self._deps)
        for var, dependencies in changes.items():
            dependencies = frozenset(dependencies)
            if dependencies == {var}:
                deps.pop(var, None)
            else:
                deps[var] = dependencies
        return DepEnv._trusted(deps)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DepEnv) and self._deps == other._deps

    def __hash__(self) -> int:
        return hash(frozenset(self._deps.items()))

    def __le__(self, other: DepEnv) -> bool:
        """Pointwise inclusion."""
        return all(self(var) <= other(var) for var in self.keys() | other.keys())

    def __repr__(self) -> str:
        body = ", ".join(
            f"{var}: {{{', '.join(sorted(map(str, deps)))}}}"
            for var, deps in self.items()
        )
        return f"DepEnv({{{body}}})"


def gamma_id() -> DepEnv:
    return DepEnv()


def compose(g2: DepEnv, g1: DepEnv) -> DepEnv:
    """`(g2;g1)(x)` is the union of `g1(y)` over every `y` in `g2(x)`.

    `g1` types the earlier command, `g2` the later one.
    """
    deps = dict(g1._deps)
    for var, mids in g2._deps.items():
        combined: set[TypingVar] = set()
        for mid in mids:
            combined |= g1(mid)
        if combined == {var}:
            deps.pop(var, None)
        else:
            deps[var] = frozenset(combined)
    return DepEnv._trusted(deps)


def union(g1: DepEnv, g2: DepEnv) -> DepEnv:
    deps: dict[TypingVar, frozenset[TypingVar]] = {}
    for var in g1.keys() | g2.keys():
        combined = g1(var) | g2(var)
        if combined != {var}:
            deps[var] = combined
    return DepEnv._trusted(deps)


def fixpoint(g: DepEnv) -> DepEnv:
    """The reflexive-transitive closure `⋃ gⁿ`, grown until it stops changing."""
    closure = gamma_id()
    while True:
        grown = union(gamma_id(), compose(closure, g))
        if grown == closure:
            return closure
        closure = grown


def _guard(cond: Expr) -> DepEnv:
    return gamma_id().update({PC: _vars(cond) | {PC}})


def infer(c: Command) -> DepEnv:
    """The principal typing of `c`; directives type like `skip`."""
    match c:
        case Seq():
            items = flatten(c)
            env = infer(items[0])
            for item in items[1:]:
                env = compose(infer(item), env)
            return env
        case Skip() | Directive():
            return gamma_id()
        case Assign(target, rhs):
            return gamma_id().update({ProgVar(target): _vars(rhs) | {PC}})
        case If(cond, then, orelse):
            guard = _guard(cond)
            branches = union(compose(infer(then), guard), compose(infer(orelse), guard))
            return branches.update({PC: {PC}})
        case While(cond, body):
            closure = fixpoint(compose(infer(body), _guard(cond)))
            return closure.update({PC: {PC}})
        case Out(rhs, channel, point):
            cp, context = ChannelPoint(channel, point), Channel(channel)
            return gamma_id().update(
                {cp: _vars(rhs) | {PC, context, cp}, context: {PC, context}}
            )
    raise TypeError(f"not a command: {c!r}")


@dataclass(frozen=True)
class PVarView:
    """A typing seen through program variables only."""

    env: DepEnv

    def __call__(self, var: TypingVar) -> frozenset[str]:
        return frozenset(v.name for v in self.env(var) if isinstance(v, ProgVar))


def restrict_to_pvars(g: DepEnv) -> PVarView:
    return PVarView(g)


class TypingReport(BaseModel):
    """JSON form of a typing over the variables, channels and points of a program."""

    digest: str | None = None
    restricted: bool = False
    variables: dict[str, list[str]] = Field(default_factory=dict)
    channels: dict[str, list[str]] = Field(default_factory=dict)
    points: dict[str, list[str]] = Field(default_factory=dict)

    @classmethod
    def from_env(
        cls,
        g: DepEnv,
        c: Command,
        restricted: bool = False,
        digest: str | None = None,
    ) -> TypingReport:
        view = PVarView(g)

        def render(var: TypingVar) -> list[str]:
            if restricted:
                return sorted(view(var))
            return [str(v) for v in sorted(g(var), key=var_key)]

        return cls(
            digest=digest,
            restricted=restricted,
            variables={x: render(ProgVar(x)) for x in sorted(program_variables(c))},
            channels={a: render(Channel(a)) for a in sorted(channels(c))},
            points={str(cp): render(cp) for cp in sorted(points(c))},
        )

    def to_env(self) -> DepEnv:
        if self.restricted:
            raise ValueError("a restricted report does not determine the typing")
        entries: dict[TypingVar, list[str]] = {}
        for name, deps in self.variables.items():
            entries[ProgVar(name)] = deps
        for name, deps in self.channels.items():
            entries[Channel(name)] = deps
        for text, deps in self.points.items():
            entries[ChannelPoint.parse(text)] = deps
        return DepEnv(
            {var: map(parse_typing_var, deps) for var, deps in entries.items()}
        )
