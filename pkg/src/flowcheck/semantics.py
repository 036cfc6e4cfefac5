"""Small-step semantics with labelled outputs, channel projection and run exploration."""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import TYPE_CHECKING, TypeAlias

from flowcheck.errors import UnboundVariableError
from flowcheck.lang import (
    Assign,
    BinOp,
    Command,
    Directive,
    Expr,
    If,
    Lit,
    Out,
    Seq,
    Skip,
    UnOp,
    Var,
    While,
    program_variables,
)
from flowcheck.logging import get_logger

if TYPE_CHECKING:
    from flowcheck.policy import PolicyState

logger = get_logger(__name__)

Trace: TypeAlias = tuple[int, ...]

_WORD = 1 << 64
_SIGN = 1 << 63


def wrap(value: int) -> int:
    """Reduce to a signed 64-bit machine integer."""
    value %= _WORD
    return value - _WORD if value >= _SIGN else value


class Store(Mapping[str, int]):
    """An immutable, hashable assignment of integers to program variables."""

    __slots__ = ("_values", "_hash")

    def __init__(self, values: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        self._values = {name: wrap(v) for name, v in sorted(dict(values).items())}
        self._hash: int | None = None

    def __getitem__(self, name: str) -> int:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self._values.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Store):
            return self._values == other._values
        return super().__eq__(other)

    def __lt__(self, other: Store) -> bool:
        return tuple(self._values.items()) < tuple(other._values.items())

    def __repr__(self) -> str:
        return f"Store({self._values!r})"

    def set(self, name: str, value: int) -> Store:
        return Store({**self._values, name: value})

    def covers(self, names: Iterable[str]) -> None:
        if missing := sorted(set(names) - self._values.keys()):
            raise UnboundVariableError(f"store does not bind {', '.join(missing)}")


_BINARY = {
    "+": lambda a, b: wrap(a + b),
    "-": lambda a, b: wrap(a - b),
    "*": lambda a, b: wrap(a * b),
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
    "&&": lambda a, b: int(a != 0 and b != 0),
    "||": lambda a, b: int(a != 0 or b != 0),
}


def evaluate(e: Expr, store: Mapping[str, int]) -> int:
    match e:
        case Lit(value):
            return wrap(value)
        case Var(name):
            try:
                return store[name]
            except KeyError:
                raise UnboundVariableError(f"variable {name} is not bound") from None
        case BinOp(op, left, right):
            return _BINARY[op](evaluate(left, store), evaluate(right, store))
        case UnOp("-", operand):
            return wrap(-evaluate(operand, store))
        case UnOp("!", operand):
            return int(evaluate(operand, store) == 0)
    raise TypeError(f"not an expression: {e!r}")


@dataclass(frozen=True)
class Universe:
    """A finite Cartesian product of per-variable domains."""

    domains: tuple[tuple[str, tuple[int, ...]], ...]

    @classmethod
    def of(cls, domains: Mapping[str, Iterable[int]]) -> Universe:
        return cls(
            tuple(
                (name, tuple(sorted(set(values))))
                for name, values in sorted(domains.items())
            )
        )

    @classmethod
    def for_program(
        cls,
        c: Command,
        domains: Mapping[str, Iterable[int]] | None = None,
        default: Iterable[int] = (0, 1),
        extra_variables: Iterable[str] = (),
    ) -> Universe:
        """Cover every variable of `c`; unlisted variables range over `default`."""
        domains = dict(domains or {})
        default = tuple(default)
        names = program_variables(c) | set(extra_variables) | domains.keys()
        return cls.of({name: domains.get(name, default) for name in names})

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.domains)

    @cached_property
    def stores(self) -> tuple[Store, ...]:
        names = self.variables
        values = [domain for _, domain in self.domains]
        return tuple(Store(zip(names, combo)) for combo in itertools.product(*values))

    def __iter__(self) -> Iterator[Store]:
        return iter(self.stores)

    def __len__(self) -> int:
        return len(self.stores)

    def as_dict(self) -> dict[str, list[int]]:
        return {name: list(values) for name, values in self.domains}


@dataclass(frozen=True, slots=True)
class Output:
    channel: str
    value: int
    point: str


# None stands for the silent label
Label: TypeAlias = Output | None


@dataclass(frozen=True, slots=True)
class Config:
    command: Command
    store: Store
    policy: PolicyState | None = None

    @property
    def terminal(self) -> bool:
        return isinstance(self.command, Skip)


def _step(
    c: Command, store: Store, policy: PolicyState | None
) -> tuple[Command, Store, PolicyState | None, Label]:
    match c:
        case Seq(Skip(), second):
            return second, store, policy, None
        case Seq(first, second):
            first, store, policy, label = _step(first, store, policy)
            return Seq(first, second), store, policy, label
        case Assign(target, rhs):
            return Skip(), store.set(target, evaluate(rhs, store)), policy, None
        case If(cond, then, orelse):
            branch = then if evaluate(cond, store) != 0 else orelse
            return branch, store, policy, None
        case While(cond, body):
            return If(cond, Seq(body, c), Skip()), store, policy, None
        case Out(rhs, channel, point):
            return Skip(), store, policy, Output(channel, evaluate(rhs, store), point)
        case Directive(action, subject, channel):
            if policy is not None:
                policy = policy.apply(action, subject, channel)
            return Skip(), store, policy, None
    raise TypeError(f"not a command: {c!r}")


def step(cfg: Config) -> tuple[Config, Label] | None:
    """One transition, or None when the configuration is terminal."""
    if cfg.terminal:
        return None
    command, store, policy, label = _step(cfg.command, cfg.store, cfg.policy)
    return Config(command, store, policy), label


@dataclass(frozen=True)
class Run:
    labels: list[Label]
    final: Config
    exhausted: bool


def run(cfg: Config, fuel: int) -> Run:
    if fuel < 0:
        raise ValueError("fuel must be non-negative")
    cfg.store.covers(program_variables(cfg.command, include_directives=False))
    labels: list[Label] = []
    while True:
        if cfg.terminal:
            return Run(labels, cfg, exhausted=False)
        if len(labels) == fuel:
            return Run(labels, cfg, exhausted=True)
        cfg, label = step(cfg)  # type: ignore[misc]
        labels.append(label)


def project(labels: Iterable[Label], channel: str) -> Trace:
    return tuple(
        label.value
        for label in labels
        if label is not None and label.channel == channel
    )


def reachable_traces(
    c: Command, store: Store, channel: str, fuel: int
) -> frozenset[tuple[Trace, bool]]:
    """Every channel prefix produced within `fuel` steps.

    The flag marks the longest prefix when the run was cut off by the fuel.
    """
    result = run(Config(c, store), fuel)
    trace = project(result.labels, channel)
    return frozenset(
        (trace[:length], result.exhausted and length == len(trace))
        for length in range(len(trace) + 1)
    )


class Status(StrEnum):
    TERMINATED = "terminated"
    CYCLIC = "cyclic"
    EXHAUSTED = "exhausted"


class TraceStatus(StrEnum):
    COMPLETE = "complete"
    INFINITE = "infinite"
    TRUNCATED = "truncated"


@dataclass(frozen=True, slots=True)
class Emission:
    """The output produced by the step leaving configuration number `step`."""

    step: int
    value: int
    point: str


@dataclass(frozen=True)
class ChannelTrace:
    """Everything a run ever emits on one channel.

    An infinite trace is `stem` followed by `loop` repeated forever; each loop
    round is `period` steps long.
    """

    channel: str
    stem: tuple[Emission, ...]
    status: TraceStatus
    loop: tuple[Emission, ...] = ()
    period: int = 0

    def emission(self, index: int) -> Emission | None:
        if index < len(self.stem):
            return self.stem[index]
        if self.status is not TraceStatus.INFINITE:
            return None
        rounds, offset = divmod(index - len(self.stem), len(self.loop))
        base = self.loop[offset]
        return Emission(base.step + rounds * self.period, base.value, base.point)

    def has_length(self, length: int) -> bool | None:
        """Whether the run emits at least `length` values; None when fuel ran out."""
        if length <= len(self.stem) or self.status is TraceStatus.INFINITE:
            return True
        if self.status is TraceStatus.COMPLETE:
            return False
        return None

    def values(self, length: int) -> Trace:
        emissions = (self.emission(index) for index in range(length))
        return tuple(e.value for e in emissions if e is not None)

    @property
    def known(self) -> Trace:
        return tuple(e.value for e in self.stem)

    def dump(self, limit: int | None = None) -> list[dict[str, int | str]]:
        """JSON-ready emissions; infinite traces are unrolled up to `limit`."""
        if self.status is TraceStatus.INFINITE:
            count = limit if limit is not None else len(self.stem) + len(self.loop)
        else:
            count = len(self.stem)
        return [
            {
                "channel": self.channel,
                "value": e.value,
                "point": e.point,
                "stepIndex": e.step,
            }
            for e in map(self.emission, range(count))
            if e is not None
        ]


@dataclass(frozen=True)
class Execution:
    """An explored run.

    `labels[i]` is the label of the step leaving `configs[i]`. A cyclic run
    continues from `configs[cycle_start]` after its last label.
    """

    configs: tuple[Config, ...]
    labels: tuple[Label, ...]
    status: Status
    cycle_start: int | None = None
    _traces: dict[str, ChannelTrace] = field(
        default_factory=dict, compare=False, repr=False
    )

    @property
    def period(self) -> int:
        if self.cycle_start is None:
            return 0
        return len(self.labels) - self.cycle_start

    def _index(self, n: int, size: int) -> int | None:
        if n < size:
            return n
        if self.status is Status.CYCLIC:
            assert self.cycle_start is not None
            return self.cycle_start + (n - self.cycle_start) % self.period
        return None

    def config_at(self, n: int) -> Config | None:
        index = self._index(n, len(self.configs))
        return None if index is None else self.configs[index]

    def label_at(self, n: int) -> Label:
        index = self._index(n, len(self.labels))
        return None if index is None else self.labels[index]

    def policy_at(self, n: int) -> PolicyState | None:
        cfg = self.config_at(n)
        return None if cfg is None else cfg.policy

    def channel_trace(self, channel: str) -> ChannelTrace:
        if channel in self._traces:
            return self._traces[channel]
        emissions = [
            Emission(index, label.value, label.point)
            for index, label in enumerate(self.labels)
            if label is not None and label.channel == channel
        ]
        match self.status:
            case Status.TERMINATED:
                trace = ChannelTrace(channel, tuple(emissions), TraceStatus.COMPLETE)
            case Status.EXHAUSTED:
                trace = ChannelTrace(channel, tuple(emissions), TraceStatus.TRUNCATED)
            case Status.CYCLIC:
                stem = tuple(e for e in emissions if e.step < self.cycle_start)
                loop = tuple(e for e in emissions if e.step >= self.cycle_start)
                status = TraceStatus.INFINITE if loop else TraceStatus.COMPLETE
                trace = ChannelTrace(channel, stem, status, loop, self.period)
        self._traces[channel] = trace
        return trace


def explore(cfg: Config, fuel: int) -> Execution:
    """Run until termination, a repeated configuration, or `fuel` steps.

    The semantics is deterministic, so a repeated configuration means the run
    repeats that stretch forever.
    """
    cfg.store.covers(program_variables(cfg.command, include_directives=False))
    seen: dict[Config, int] = {}
    configs: list[Config] = []
    labels: list[Label] = []
    while True:
        if (start := seen.get(cfg)) is not None:
            logger.debug(f"Cycle after {len(configs)} steps, period {len(configs) - start}")
            return Execution(tuple(configs), tuple(labels), Status.CYCLIC, start)
        seen[cfg] = len(configs)
        configs.append(cfg)
        if cfg.terminal:
            return Execution(tuple(configs), tuple(labels), Status.TERMINATED)
        if len(labels) == fuel:
            logger.debug(f"Fuel of {fuel} steps exhausted")
            return Execution(tuple(configs), tuple(labels), Status.EXHAUSTED)
        cfg, label = step(cfg)  # type: ignore[misc]
        labels.append(label)
