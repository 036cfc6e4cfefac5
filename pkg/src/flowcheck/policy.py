"""Equivalence specifications, directive-driven dynamic policies and their
per-point approximation."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from flowcheck.errors import ExecutionPointError, ParseError, PolicyFileError
from flowcheck.lang import (
    ChannelPoint,
    Command,
    Directive,
    Expr,
    If,
    Out,
    Seq,
    Var,
    While,
    flatten,
    fv,
    parse_expression,
    pretty_expr,
)
from flowcheck.logging import get_logger
from flowcheck.semantics import Config, Store, Universe, evaluate, run

logger = get_logger(__name__)


@dataclass(frozen=True, slots=True)
class EquivSpec:
    """Stores are equivalent when they agree on every expression in `exprs`.

    The empty spec relates all stores; adding expressions refines the relation.
    """

    exprs: frozenset[Expr] = frozenset()

    @classmethod
    def of(cls, *items: Expr | str) -> EquivSpec:
        return cls(
            frozenset(
                parse_expression(item) if isinstance(item, str) else item
                for item in items
            )
        )

    @classmethod
    def of_variables(cls, names: Iterable[str]) -> EquivSpec:
        return cls(frozenset(Var(name) for name in names))

    @property
    def ordered(self) -> tuple[Expr, ...]:
        return tuple(sorted(self.exprs, key=pretty_expr))

    @property
    def variables(self) -> frozenset[str]:
        return frozenset().union(*(fv(e) for e in self.exprs))

    @property
    def is_variable_only(self) -> bool:
        return all(isinstance(e, Var) for e in self.exprs)

    def key(self, store: Mapping[str, int]) -> tuple[int, ...]:
        return tuple(evaluate(e, store) for e in self.ordered)

    def equivalent(self, first: Mapping[str, int], second: Mapping[str, int]) -> bool:
        return self.key(first) == self.key(second)

    def to_json(self) -> list[str]:
        return [pretty_expr(e) for e in self.ordered]

    def __str__(self) -> str:
        return "{" + ", ".join(self.to_json()) + "}"


@dataclass(frozen=True)
class StaticPolicy:
    """Channel to equivalence spec; channels without an entry allow nothing."""

    specs: Mapping[str, EquivSpec] = field(default_factory=dict)

    def __getitem__(self, channel: str) -> EquivSpec:
        return self.specs.get(channel, EquivSpec())


@dataclass(frozen=True, slots=True)
class PolicyState:
    """The `(expression, channel)` flows currently allowed."""

    permissions: frozenset[tuple[Expr, str]] = frozenset()

    @classmethod
    def from_mapping(cls, allowed: Mapping[str, Iterable[Expr | str]]) -> PolicyState:
        return cls(
            frozenset(
                (parse_expression(e) if isinstance(e, str) else e, channel)
                for channel, exprs in allowed.items()
                for e in exprs
            )
        )

    def apply(
        self, action: Literal["allow", "revoke"], subject: Expr, channel: str
    ) -> PolicyState:
        if action == "allow":
            return PolicyState(self.permissions | {(subject, channel)})
        return PolicyState(self.permissions - {(subject, channel)})

    def allowed(self, channel: str) -> EquivSpec:
        return EquivSpec(frozenset(e for e, a in self.permissions if a == channel))

    def static(self) -> StaticPolicy:
        channels = {a for _, a in self.permissions}
        return StaticPolicy({a: self.allowed(a) for a in sorted(channels)})


@dataclass(frozen=True)
class DynamicPolicySpec:
    """A dynamic policy driven by the program's own `allow`/`revoke` directives.

    The policy after an execution history is read off the policy state of its
    last configuration.
    """

    initial: PolicyState = field(default_factory=PolicyState)

    @property
    def variables(self) -> frozenset[str]:
        """Variables of the initially granted expressions."""
        return frozenset().union(*(fv(e) for e, _ in self.initial.permissions))

    def config(self, c: Command, store: Store) -> Config:
        return Config(c, store, self.initial)


def policy_at(spec: DynamicPolicySpec, c: Command, store: Store, n: int) -> StaticPolicy:
    """The policy active at execution point `(c, store, n)`."""
    result = run(spec.config(c, store), n)
    if len(result.labels) < n:
        raise ExecutionPointError(
            f"run terminates after {len(result.labels)} steps, before step {n}"
        )
    assert result.final.policy is not None
    return result.final.policy.static()


def coarser_syntactic(winner: Iterable[str], spec: EquivSpec) -> bool:
    """Every variable in `winner` is pinned by a bare occurrence in `spec`."""
    return all(Var(name) in spec.exprs for name in winner)


def coarseness_witness(
    r1: EquivSpec, r2: EquivSpec, universe: Iterable[Store]
) -> tuple[Store, Store] | None:
    """Two stores related by `r2` but not by `r1`, if any."""
    groups: dict[tuple[int, ...], tuple[Store, tuple[int, ...]]] = {}
    for store in universe:
        key2, key1 = r2.key(store), r1.key(store)
        if (seen := groups.get(key2)) is None:
            groups[key2] = (store, key1)
        elif seen[1] != key1:
            return seen[0], store
    return None


def coarser_exact(r1: EquivSpec, r2: EquivSpec, universe: Iterable[Store]) -> bool:
    """Whether agreement under `r2` implies agreement under `r1` on `universe`."""
    return coarseness_witness(r1, r2, universe) is None


@dataclass(frozen=True)
class PolicyApprox:
    """For every output point, a spec at least as strict as any policy active there."""

    specs: Mapping[ChannelPoint, EquivSpec] = field(default_factory=dict)

    def __getitem__(self, point: ChannelPoint) -> EquivSpec:
        return self.specs[point]

    def __contains__(self, point: object) -> bool:
        return point in self.specs

    @property
    def points(self) -> list[ChannelPoint]:
        return sorted(self.specs)

    def with_overrides(self, overrides: Mapping[ChannelPoint, EquivSpec]) -> PolicyApprox:
        return PolicyApprox({**self.specs, **overrides})

    def to_json(self) -> dict[str, list[str]]:
        return {str(point): self.specs[point].to_json() for point in self.points}


def _flow(
    c: Command,
    states: frozenset[PolicyState],
    reach: dict[ChannelPoint, set[PolicyState]],
) -> frozenset[PolicyState]:
    for item in flatten(c):
        match item:
            case Seq():
                states = _flow(item, states, reach)
            case Out(_, channel, point):
                reach.setdefault(ChannelPoint(channel, point), set()).update(states)
            case Directive(action, subject, channel):
                states = frozenset(s.apply(action, subject, channel) for s in states)
            case If(_, then, orelse):
                states = _flow(then, states, reach) | _flow(orelse, states, reach)
            case While(_, body):
                while True:
                    grown = states | _flow(body, states, reach)
                    if grown == states:
                        break
                    states = grown
    return states


def approximate_policy(c: Command, spec: DynamicPolicySpec) -> PolicyApprox:
    """Intersect the allowed flows of every policy state that may reach each output.

    Directive effects are propagated along both branches of every conditional
    and loop bodies are iterated until no new state appears.
    """
    reach: dict[ChannelPoint, set[PolicyState]] = {}
    _flow(c, frozenset({spec.initial}), reach)
    specs = {
        point: EquivSpec(
            reduce(
                frozenset.intersection,
                (state.allowed(point.channel).exprs for state in states),
            )
        )
        for point, states in reach.items()
    }
    logger.debug(f"Approximated policy at {len(specs)} points")
    return PolicyApprox(specs)


class PolicyFile(BaseModel):
    """On-disk policy: initial grants per channel, store domains and manual
    approximation entries keyed `channel@point`."""

    model_config = ConfigDict(extra="forbid")

    initial: dict[str, list[str]] = Field(default_factory=dict)
    universe: dict[str, list[int]] = Field(default_factory=dict)
    approx_override: dict[str, list[str]] = Field(default_factory=dict)

    @classmethod
    def load(cls, path: Path) -> PolicyFile:
        try:
            return cls.model_validate_json(path.read_bytes())
        except OSError as exc:
            raise PolicyFileError(f"cannot read policy file {path}: {exc}") from exc
        except ValidationError as exc:
            raise PolicyFileError(f"invalid policy file {path}:\n{exc}") from exc

    def initial_state(self) -> PolicyState:
        try:
            return PolicyState.from_mapping(self.initial)
        except ParseError as exc:
            raise PolicyFileError(f"bad expression in initial policy: {exc}") from exc

    def spec(self) -> DynamicPolicySpec:
        return DynamicPolicySpec(self.initial_state())

    def overrides(self) -> dict[ChannelPoint, EquivSpec]:
        try:
            return {
                ChannelPoint.parse(point): EquivSpec.of(*exprs)
                for point, exprs in self.approx_override.items()
            }
        except ParseError as exc:
            raise PolicyFileError(f"bad approximation override: {exc}") from exc

    @property
    def expression_variables(self) -> frozenset[str]:
        names: set[str] = set()
        for exprs in [*self.initial.values(), *self.approx_override.values()]:
            for text in exprs:
                try:
                    names |= fv(parse_expression(text))
                except ParseError as exc:
                    raise PolicyFileError(f"bad policy expression: {exc}") from exc
        return frozenset(names)


def universe_for(
    c: Command,
    policy_file: PolicyFile | None = None,
    override: Mapping[str, Iterable[int]] | None = None,
    default_domain: Iterable[int] = (0, 1),
) -> Universe:
    """Stores over every variable of the program and its policy.

    Domains come from `override` first, then the policy file, then the default.
    """
    domains: dict[str, Iterable[int]] = {}
    extra: frozenset[str] = frozenset()
    if policy_file is not None:
        domains.update(policy_file.universe)
        extra = policy_file.expression_variables
    domains.update(override or {})
    return Universe.for_program(c, domains, default_domain, extra)
