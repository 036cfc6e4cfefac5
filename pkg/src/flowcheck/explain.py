"""Why a channel point depends on a variable.

Re-runs inference while remembering, for every dependency, the chain of
statements that introduced it. When several chains lead to the same
dependency the shortest one is kept.
"""

from __future__ import annotations

from pydantic import BaseModel

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
    flatten,
    fv,
    pretty,
    pretty_expr,
)
from flowcheck.policy import EquivSpec, coarser_syntactic
from flowcheck.typesystem import PC, Channel, ProgVar, TypingVar

Chain = tuple[str, ...]
Reasons = dict[TypingVar, Chain]


class _Traced:
    """A dependency environment whose dependencies carry statement chains."""

    __slots__ = ("entries",)

    def __init__(self, entries: dict[TypingVar, Reasons] | None = None):
        self.entries = entries or {}

    def __call__(self, var: TypingVar) -> Reasons:
        return self.entries.get(var, {var: ()})

    def shape(self) -> dict[TypingVar, frozenset[TypingVar]]:
        return {
            var: frozenset(reasons)
            for var, reasons in self.entries.items()
            if set(reasons) != {var}
        }


def _merge(into: Reasons, dep: TypingVar, chain: Chain) -> None:
    if dep not in into or (len(chain), chain) < (len(into[dep]), into[dep]):
        into[dep] = chain


def _compose(g2: _Traced, g1: _Traced) -> _Traced:
    entries = dict(g1.entries)
    for var, mids in g2.entries.items():
        combined: Reasons = {}
        for mid, later in mids.items():
            for dep, earlier in g1(mid).items():
                _merge(combined, dep, earlier + later)
        entries[var] = combined
    return _Traced(entries)


def _union(g1: _Traced, g2: _Traced) -> _Traced:
    entries: dict[TypingVar, Reasons] = {}
    for var in g1.entries.keys() | g2.entries.keys():
        combined = dict(g1(var))
        for dep, chain in g2(var).items():
            _merge(combined, dep, chain)
        entries[var] = combined
    return _Traced(entries)


def _fixpoint(g: _Traced) -> _Traced:
    closure = _Traced()
    while True:
        grown = _union(_Traced(), _compose(closure, g))
        if grown.shape() == closure.shape():
            return grown
        closure = grown


def _from(e: Expr, step: str) -> Reasons:
    return {ProgVar(name): (step,) for name in fv(e)}


def _guard(cond: Expr, step: str) -> _Traced:
    return _Traced({PC: {PC: (), **_from(cond, step)}})


def _reset_pc(g: _Traced) -> _Traced:
    return _Traced({**g.entries, PC: {PC: ()}})


def describe(c: Command) -> str:
    match c:
        case If(cond):
            return f"if ({pretty_expr(cond)})"
        case While(cond):
            return f"while ({pretty_expr(cond)})"
    return pretty(c).strip()


def traced_infer(c: Command) -> _Traced:
    match c:
        case Seq():
            items = flatten(c)
            env = traced_infer(items[0])
            for item in items[1:]:
                env = _compose(traced_infer(item), env)
            return env
        case Skip() | Directive():
            return _Traced()
        case Assign(target, rhs):
            step = describe(c)
            return _Traced({ProgVar(target): {**_from(rhs, step), PC: (step,)}})
        case If(cond, then, orelse):
            guard = _guard(cond, describe(c))
            branches = _union(
                _compose(traced_infer(then), guard),
                _compose(traced_infer(orelse), guard),
            )
            return _reset_pc(branches)
        case While(cond, body):
            guard = _guard(cond, describe(c))
            return _reset_pc(_fixpoint(_compose(traced_infer(body), guard)))
        case Out(rhs, channel, point):
            step = describe(c)
            cp, context = ChannelPoint(channel, point), Channel(channel)
            return _Traced(
                {
                    cp: {**_from(rhs, step), PC: (step,), context: (step,), cp: ()},
                    context: {PC: (step,), context: ()},
                }
            )
    raise TypeError(f"not a command: {c!r}")


class DependencyReason(BaseModel):
    variable: str
    chain: list[str]
    allowed: bool | None = None


class Explanation(BaseModel):
    point: str
    dependencies: list[DependencyReason]
    approximation: list[str] | None = None

    def render(self) -> str:
        if not self.dependencies:
            return f"{self.point} depends on no program variable"
        lines = [f"{self.point} depends on:"]
        for dep in self.dependencies:
            mark = {True: " (allowed)", False: " (not allowed)", None: ""}[dep.allowed]
            lines.append(f"  {dep.variable}{mark}")
            lines.extend(f"    {index}. {step}" for index, step in enumerate(dep.chain, 1))
        if self.approximation is not None:
            lines.append(f"allowed at {self.point}: {{{', '.join(self.approximation)}}}")
        return "\n".join(lines)


def explain_point(
    c: Command, point: ChannelPoint, approximation: EquivSpec | None = None
) -> Explanation:
    reasons = traced_infer(c)(point)

    def allowed(name: str) -> bool | None:
        if approximation is None:
            return None
        if coarser_syntactic({name}, approximation):
            return True
        # agreement on other expressions may still pin the variable
        return False if approximation.is_variable_only else None

    dependencies = [
        DependencyReason(variable=var.name, chain=list(chain), allowed=allowed(var.name))
        for var, chain in sorted(
            ((v, ch) for v, ch in reasons.items() if isinstance(v, ProgVar)),
            key=lambda item: item[0].name,
        )
    ]
    return Explanation(
        point=str(point),
        dependencies=dependencies,
        approximation=approximation.to_json() if approximation is not None else None,
    )
