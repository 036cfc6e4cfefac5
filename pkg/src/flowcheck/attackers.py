"""Attackers observing a single channel.

An attacker is a deterministic automaton over observed values; its state after
a trace is all it remembers. Counting attackers keep the number of values seen
as part of their state, so their state after `t` fixes `|t|`.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from collections import deque
from collections.abc import Hashable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import BaseModel, ValidationError, model_validator
from typing_extensions import Self

from flowcheck.errors import AttackerFileError
from flowcheck.logging import get_logger

logger = get_logger(__name__)

DEFAULT_EDGE = "default"


class Attacker(ABC):
    #: whether the state determines how many values were observed
    counting: bool = False

    @property
    @abstractmethod
    def name(self) -> str: ...

    @property
    @abstractmethod
    def start(self) -> Hashable: ...

    @abstractmethod
    def step(self, state: Hashable, value: int) -> Hashable: ...

    @property
    def memory(self) -> int:
        """Loop rounds after which a pair of runs repeats its pair of attacker states."""
        return 1

    def run(self, trace: Iterable[int]) -> Hashable:
        state = self.start
        for value in trace:
            state = self.step(state, value)
        return state


def attacker_state(attacker: Attacker, trace: Iterable[int]) -> Hashable:
    return attacker.run(trace)


@dataclass(frozen=True)
class AutomatonAttacker(Attacker):
    """A finite attacker. Values without an edge follow the state's default edge,
    and a state without a default edge keeps its state."""

    label: str
    states: tuple[str, ...]
    initial: str
    edges: tuple[tuple[str, int, str], ...] = ()
    defaults: tuple[tuple[str, str], ...] = ()
    _table: dict[tuple[str, int], str] = field(
        init=False, repr=False, compare=False, hash=False
    )
    _fallback: dict[str, str] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_table", {(s, v): t for s, v, t in self.edges})
        object.__setattr__(self, "_fallback", dict(self.defaults))

    @property
    def name(self) -> str:
        return self.label

    @property
    def start(self) -> str:
        return self.initial

    def step(self, state: Hashable, value: int) -> str:
        target = self._table.get((state, value))  # type: ignore[arg-type]
        if target is None:
            target = self._fallback.get(state, state)  # type: ignore[arg-type]
        return target

    @property
    def memory(self) -> int:
        return len(self.states) ** 2


@dataclass(frozen=True)
class CountingAttacker(Attacker):
    """The lift of `base` that also counts the values it has seen."""

    base: Attacker
    counting = True

    @property
    def name(self) -> str:
        return f"{self.base.name}^ω"

    @property
    def start(self) -> tuple[Hashable, int]:
        return self.base.start, 0

    def step(self, state: Hashable, value: int) -> tuple[Hashable, int]:
        inner, count = state  # type: ignore[misc]
        return self.base.step(inner, value), count + 1

    @property
    def memory(self) -> int:
        return self.base.memory


@dataclass(frozen=True)
class PerfectRecall(Attacker):
    counting = True

    @property
    def name(self) -> str:
        return "perfect-recall"

    @property
    def start(self) -> tuple[int, ...]:
        return ()

    def step(self, state: Hashable, value: int) -> tuple[int, ...]:
        return (*state, value)  # type: ignore[misc]


@dataclass(frozen=True)
class LengthOnly(Attacker):
    """Remembers how many values it saw and nothing else."""

    counting = True

    @property
    def name(self) -> str:
        return "length-only"

    @property
    def start(self) -> int:
        return 0

    def step(self, state: Hashable, value: int) -> int:
        return state + 1  # type: ignore[operator]


@dataclass(frozen=True)
class SplitAttacker(Attacker):
    """Counts values and remembers the one observed at `position`.

    These attackers witness every failure of the two-run condition: a second run
    that agrees in length but differs in the value at `position`.
    """

    position: int
    counting = True

    @property
    def name(self) -> str:
        return f"split@{self.position}"

    @property
    def start(self) -> tuple[int, int | None]:
        return 0, None

    def step(self, state: Hashable, value: int) -> tuple[int, int | None]:
        count, seen = state  # type: ignore[misc]
        return count + 1, value if count == self.position else seen


def is_counting(attacker: Attacker, traces: Iterable[Sequence[int]]) -> bool:
    """Whether equal states imply equal lengths over `traces`."""
    lengths: dict[Hashable, int] = {}
    for trace in traces:
        state = attacker.run(trace)
        if lengths.setdefault(state, len(trace)) != len(trace):
            return False
    return True


def all_traces(alphabet: Sequence[int], max_length: int) -> Iterator[tuple[int, ...]]:
    for length in range(max_length + 1):
        yield from itertools.product(alphabet, repeat=length)


def canonical_form(
    attacker: AutomatonAttacker, alphabet: Sequence[int]
) -> tuple[tuple[int, ...], ...]:
    """Transition table over the reachable states, numbered in breadth-first order.

    Two automata have the same form iff they are isomorphic over `alphabet`.
    """
    alphabet = sorted(alphabet)
    order = {attacker.start: 0}
    queue = deque([attacker.start])
    rows: list[tuple[int, ...]] = []
    while queue:
        state = queue.popleft()
        row = []
        for value in alphabet:
            target = attacker.step(state, value)
            if target not in order:
                order[target] = len(order)
                queue.append(target)
            row.append(order[target])
        rows.append(tuple(row))
    return tuple(rows)


def automaton_from_table(
    table: Sequence[Sequence[int]], alphabet: Sequence[int], label: str | None = None
) -> AutomatonAttacker:
    alphabet = sorted(alphabet)
    states = tuple(f"q{index}" for index in range(len(table)))
    edges = tuple(
        (states[source], value, states[target])
        for source, row in enumerate(table)
        for value, target in zip(alphabet, row)
    )
    name = label or "dfa:" + "|".join(",".join(map(str, row)) for row in table)
    return AutomatonAttacker(name, states, states[0], edges)


def enumerate_attackers(
    alphabet: Sequence[int], max_states: int
) -> Iterator[AutomatonAttacker]:
    """Every automaton with at most `max_states` reachable states over `alphabet`,
    one per isomorphism class."""
    alphabet = sorted(alphabet)
    count = 0
    for size in range(1, max_states + 1):
        cells = size * len(alphabet)
        for flat in itertools.product(range(size), repeat=cells):
            table = tuple(
                flat[row * len(alphabet) : (row + 1) * len(alphabet)]
                for row in range(size)
            )
            attacker = automaton_from_table(table, alphabet)
            if canonical_form(attacker, alphabet) == table:
                count += 1
                yield attacker
    logger.debug(f"Enumerated {count} attackers with at most {max_states} states")


class AttackerFile(BaseModel):
    """On-disk automaton: `delta[state][value]` with an optional `default` value key."""

    name: str | None = None
    states: list[str]
    start: str
    delta: dict[str, dict[str, str]] = {}

    @model_validator(mode="after")
    def check_states(self: Self) -> Self:
        known = set(self.states)
        if self.start not in known:
            raise ValueError(f"start state {self.start} is not listed in states")
        for source, row in self.delta.items():
            if source not in known:
                raise ValueError(f"unknown state {source} in delta")
            for value, target in row.items():
                if target not in known:
                    raise ValueError(f"unknown target state {target} in delta")
                if value != DEFAULT_EDGE:
                    try:
                        int(value)
                    except ValueError:
                        raise ValueError(f"edge label {value!r} is not an integer") from None
        return self

    def to_attacker(self, fallback_name: str = "automaton") -> AutomatonAttacker:
        edges = tuple(
            (source, int(value), target)
            for source, row in sorted(self.delta.items())
            for value, target in sorted(row.items())
            if value != DEFAULT_EDGE
        )
        defaults = tuple(
            (source, row[DEFAULT_EDGE])
            for source, row in sorted(self.delta.items())
            if DEFAULT_EDGE in row
        )
        return AutomatonAttacker(
            self.name or fallback_name, tuple(self.states), self.start, edges, defaults
        )

    @classmethod
    def load(cls, path: Path) -> AutomatonAttacker:
        try:
            model = cls.model_validate_json(path.read_bytes())
        except OSError as exc:
            raise AttackerFileError(f"cannot read attacker file {path}: {exc}") from exc
        except ValidationError as exc:
            raise AttackerFileError(f"invalid attacker file {path}:\n{exc}") from exc
        return model.to_attacker(fallback_name=path.stem)
