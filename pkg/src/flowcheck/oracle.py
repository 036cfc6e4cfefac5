"""Brute-force semantic checks over a finite universe of initial stores.

Every store's run is explored once. A run that revisits a configuration is a
lasso, so its channel trace is known exactly even though it never ends, and
checks over it only need to look one joint period past the longest stem.
Runs cut off by the fuel make a check `bounded` unless a violation is found
among the decided cases.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Literal

from pydantic import BaseModel

from flowcheck.attackers import Attacker, LengthOnly, SplitAttacker
from flowcheck.lang import ChannelPoint, Command, channels
from flowcheck.logging import get_logger
from flowcheck.policy import DynamicPolicySpec, EquivSpec
from flowcheck.semantics import (
    ChannelTrace,
    Emission,
    Execution,
    Store,
    Trace,
    TraceStatus,
    Universe,
    explore,
)
from flowcheck.settings import settings
from flowcheck.typesystem import DepEnv, PVarView

logger = get_logger(__name__)

#: which progress knowledge is subtracted: none (knowledge-based), the
#: attacker's own progress (ACPI) or progress counted in full (PI)
Progress = Literal["none", "ac", "full"]


class VerdictKind(StrEnum):
    SECURE = "secure"
    INSECURE = "insecure"
    BOUNDED = "bounded"


class Counterexample(BaseModel):
    """Replay data: run `sigma` (and `rho`) and compare the values at `index`."""

    channel: str
    sigma: dict[str, int]
    rho: dict[str, int] | None = None
    trace: list[int]
    value: int
    step: int
    index: int
    point: str | None = None
    other_trace: list[int] | None = None
    other_value: int | None = None
    policy: list[str] | None = None
    attacker: str | None = None
    note: str | None = None


class Verdict(BaseModel):
    check: str
    kind: VerdictKind
    fuel: int
    counterexample: Counterexample | None = None
    detail: str | None = None

    @property
    def secure(self) -> bool:
        return self.kind is VerdictKind.SECURE

    @property
    def insecure(self) -> bool:
        return self.kind is VerdictKind.INSECURE


def combine(check: str, fuel: int, verdicts: Iterable[Verdict]) -> Verdict:
    """The first insecure verdict, else bounded if any verdict is, else secure."""
    bounded = None
    for verdict in verdicts:
        if verdict.insecure:
            return verdict.model_copy(update={"check": check})
        if verdict.kind is VerdictKind.BOUNDED and bounded is None:
            bounded = verdict
    if bounded is not None:
        return Verdict(check=check, kind=VerdictKind.BOUNDED, fuel=fuel, detail=bounded.detail)
    return Verdict(check=check, kind=VerdictKind.SECURE, fuel=fuel)


@dataclass(frozen=True)
class KnowledgeSet:
    """Stores an attacker still considers possible.

    `undecided` stores could not be classified because their run was cut off.
    """

    members: frozenset[Store]
    undecided: frozenset[Store]
    universe: tuple[Store, ...]

    def __contains__(self, store: object) -> bool:
        return store in self.members

    @property
    def exact(self) -> bool:
        return not self.undecided

    @property
    def exclusion(self) -> frozenset[Store]:
        return frozenset(self.universe) - self.members - self.undecided


@dataclass(frozen=True)
class _Reach:
    states: frozenset[Hashable]
    progress: frozenset[Hashable]
    decided: bool


class SemanticOracle:
    """Knowledge sets and security checks for one program over one universe."""

    def __init__(
        self,
        program: Command,
        universe: Universe,
        policy: DynamicPolicySpec | None = None,
        fuel: int | None = None,
    ) -> None:
        self.program = program
        self.universe = universe
        self.policy = policy or DynamicPolicySpec()
        self.fuel = settings.fuel if fuel is None else fuel
        self._executions: dict[Store, Execution] = {}
        self._classes: dict[tuple[EquivSpec, Store], tuple[Store, ...]] = {}
        self._prefix_states: dict[tuple[Attacker, Store, str], list[Hashable]] = {}
        self._reach: dict[tuple[Attacker, Store, str], _Reach] = {}

    # runs

    def execution(self, store: Store) -> Execution:
        if (execution := self._executions.get(store)) is None:
            execution = explore(self.policy.config(self.program, store), self.fuel)
            self._executions[store] = execution
        return execution

    def trace(self, store: Store, channel: str) -> ChannelTrace:
        return self.execution(store).channel_trace(channel)

    def horizon(self, channel: str, rounds: int = 1) -> tuple[int, bool]:
        """How many emission indices to examine, and whether the fuel capped it.

        Past the longest stem every trace is periodic; `rounds` joint periods
        cover the preperiod of whatever per-index state a check carries.
        """
        traces = [self.trace(store, channel) for store in self.universe]
        stem = max((len(t.stem) for t in traces), default=0)
        loops = [len(t.loop) for t in traces if t.status is TraceStatus.INFINITE]
        if not loops:
            return stem, False
        needed = stem + math.lcm(*loops) * rounds
        return min(needed, self.fuel), needed > self.fuel

    def equivalence_class(self, spec: EquivSpec, store: Store) -> tuple[Store, ...]:
        if (members := self._classes.get((spec, store))) is None:
            key = spec.key(store)
            members = tuple(rho for rho in self.universe if spec.key(rho) == key)
            self._classes[(spec, store)] = members
        return members

    def active_spec(self, store: Store, step: int, channel: str) -> EquivSpec:
        policy = self.execution(store).policy_at(step)
        assert policy is not None
        return policy.allowed(channel)

    # attacker bookkeeping

    def prefix_state(
        self, attacker: Attacker, store: Store, channel: str, length: int
    ) -> Hashable:
        """Attacker state after the first `length` values of the store's trace."""
        key = (attacker, store, channel)
        states = self._prefix_states.setdefault(key, [attacker.start])
        trace = self.trace(store, channel)
        while len(states) <= length:
            emission = trace.emission(len(states) - 1)
            assert emission is not None, "prefix longer than the trace"
            states.append(attacker.step(states[-1], emission.value))
        return states[length]

    def reach(self, attacker: Attacker, store: Store, channel: str) -> _Reach:
        """States after any prefix of the trace, and those after a prefix that
        is followed by a further value."""
        key = (attacker, store, channel)
        if (cached := self._reach.get(key)) is not None:
            return cached
        trace = self.trace(store, channel)
        state = attacker.start
        states, progress = {state}, set()
        for emission in trace.stem:
            progress.add(state)
            state = attacker.step(state, emission.value)
            states.add(state)
        if trace.status is TraceStatus.INFINITE:
            boundaries: set[Hashable] = set()
            while state not in boundaries:
                boundaries.add(state)
                for emission in trace.loop:
                    progress.add(state)
                    state = attacker.step(state, emission.value)
                    states.add(state)
        result = _Reach(
            frozenset(states),
            frozenset(progress),
            trace.status is not TraceStatus.TRUNCATED,
        )
        self._reach[key] = result
        return result

    def member(
        self,
        attacker: Attacker,
        rho: Store,
        channel: str,
        state: Hashable,
        length: int,
        progress: Progress = "none",
    ) -> bool | None:
        """Whether `rho` belongs to the knowledge (or progress knowledge) of an
        attacker in `state` after `length` values; None if undecided."""
        if attacker.counting or progress == "full":
            needed = length if progress == "none" else length + 1
            if (present := self.trace(rho, channel).has_length(needed)) is not True:
                return present
            return self.prefix_state(attacker, rho, channel, length) == state
        reach = self.reach(attacker, rho, channel)
        pool = reach.states if progress == "none" else reach.progress
        if state in pool:
            return True
        return False if reach.decided else None

    def knowledge(
        self,
        attacker: Attacker,
        channel: str,
        trace: Sequence[int],
        progress: Progress = "none",
    ) -> KnowledgeSet:
        state = attacker.run(trace)
        members, undecided = set(), set()
        for rho in self.universe:
            match self.member(attacker, rho, channel, state, len(trace), progress):
                case True:
                    members.add(rho)
                case None:
                    undecided.add(rho)
        return KnowledgeSet(frozenset(members), frozenset(undecided), self.universe.stores)

    # security conditions

    def knowledge_check(
        self,
        attacker: Attacker,
        channel: str,
        store: Store,
        progress: Progress,
    ) -> Verdict:
        """No output may exclude a store the active policy relates to `store`,
        unless the subtracted (progress) knowledge already excluded it."""
        check = {"none": "kb", "ac": "acpi", "full": "pi"}[progress]
        trace = self.trace(store, channel)
        horizon, capped = self.horizon(channel, attacker.memory + 1)
        count = horizon if trace.status is TraceStatus.INFINITE else len(trace.stem)
        undecided = False
        for index in range(count):
            emission = trace.emission(index)
            assert emission is not None
            before = self.prefix_state(attacker, store, channel, index)
            after = self.prefix_state(attacker, store, channel, index + 1)
            spec = self.active_spec(store, emission.step, channel)
            for rho in self.equivalence_class(spec, store):
                prior = self.member(attacker, rho, channel, before, index, progress)
                if prior is False:
                    continue
                posterior = self.member(attacker, rho, channel, after, index + 1)
                if posterior is True:
                    continue
                if prior is True and posterior is False:
                    return Verdict(
                        check=check,
                        kind=VerdictKind.INSECURE,
                        fuel=self.fuel,
                        counterexample=Counterexample(
                            channel=channel,
                            sigma=dict(store),
                            rho=dict(rho),
                            trace=list(trace.values(index)),
                            value=emission.value,
                            step=emission.step,
                            index=index,
                            point=emission.point,
                            policy=spec.to_json(),
                            attacker=attacker.name,
                            note=f"rho is excluded only once {emission.value} is seen",
                        ),
                    )
                undecided = True
        return self._closing_verdict(check, trace, undecided, capped)

    def _closing_verdict(
        self, check: str, trace: ChannelTrace, undecided: bool, capped: bool
    ) -> Verdict:
        if trace.status is TraceStatus.TRUNCATED:
            detail = f"run cut off after {self.fuel} steps"
        elif undecided:
            detail = "some compared runs were cut off by the fuel"
        elif capped and trace.status is TraceStatus.INFINITE:
            detail = "periodic horizon exceeds the fuel"
        else:
            return Verdict(check=check, kind=VerdictKind.SECURE, fuel=self.fuel)
        return Verdict(check=check, kind=VerdictKind.BOUNDED, fuel=self.fuel, detail=detail)

    def _agreement_check(
        self,
        check: str,
        channel: str,
        store: Store,
        related: Callable[[Emission], EquivSpec],
    ) -> Verdict:
        """Every related run with an output at the same index outputs the same value."""
        trace = self.trace(store, channel)
        horizon, capped = self.horizon(channel)
        count = horizon if trace.status is TraceStatus.INFINITE else len(trace.stem)
        undecided = False
        for index in range(count):
            emission = trace.emission(index)
            assert emission is not None
            spec = related(emission)
            for rho in self.equivalence_class(spec, store):
                other = self.trace(rho, channel)
                present = other.has_length(index + 1)
                if present is None:
                    undecided = True
                    continue
                if not present:
                    continue
                theirs = other.emission(index)
                assert theirs is not None
                if theirs.value != emission.value:
                    return Verdict(
                        check=check,
                        kind=VerdictKind.INSECURE,
                        fuel=self.fuel,
                        counterexample=Counterexample(
                            channel=channel,
                            sigma=dict(store),
                            rho=dict(rho),
                            trace=list(trace.values(index)),
                            value=emission.value,
                            step=emission.step,
                            index=index,
                            point=emission.point,
                            other_trace=list(other.values(index)),
                            other_value=theirs.value,
                            policy=spec.to_json(),
                        ),
                    )
        return self._closing_verdict(check, trace, undecided, capped)

    def two_run_check(self, channel: str, store: Store) -> Verdict:
        return self._agreement_check(
            "two-run",
            channel,
            store,
            lambda emission: self.active_spec(store, emission.step, channel),
        )

    def soundness_check(self, g: DepEnv, channel: str, store: Store) -> Verdict:
        view = PVarView(g)
        return self._agreement_check(
            "soundness",
            channel,
            store,
            lambda emission: EquivSpec.of_variables(
                view(ChannelPoint(channel, emission.point))
            ),
        )

    def for_all_stores(self, check: str, verdict_for) -> Verdict:
        return combine(check, self.fuel, (verdict_for(store) for store in self.universe))

    def is_quasi_constant(self, channel: str) -> bool | None:
        """Whether every run's trace is a prefix of one common trace."""
        traces = [self.trace(store, channel) for store in self.universe]
        if any(t.status is TraceStatus.TRUNCATED for t in traces):
            # a cut-off trace may still diverge later
            known_ok = self._comparable(traces, self.horizon(channel)[0])
            return None if known_ok else False
        return self._comparable(traces, self.horizon(channel)[0])

    def _comparable(self, traces: list[ChannelTrace], horizon: int) -> bool:
        reference: dict[int, int] = {}
        for trace in traces:
            count = horizon if trace.status is TraceStatus.INFINITE else len(trace.stem)
            for index in range(count):
                value = trace.emission(index).value  # type: ignore[union-attr]
                if reference.setdefault(index, value) != value:
                    return False
        return True


# Module-level entry points, one oracle per call.


def _oracle(
    c: Command,
    universe: Universe,
    fuel: int | None,
    policy: DynamicPolicySpec | None = None,
) -> SemanticOracle:
    return SemanticOracle(c, universe, policy, fuel)


def knowledge(
    attacker: Attacker,
    c: Command,
    channel: str,
    trace: Trace,
    universe: Universe,
    fuel: int | None = None,
) -> KnowledgeSet:
    return _oracle(c, universe, fuel).knowledge(attacker, channel, trace)


def progress_knowledge_ac(
    attacker: Attacker,
    c: Command,
    channel: str,
    trace: Trace,
    universe: Universe,
    fuel: int | None = None,
) -> KnowledgeSet:
    return _oracle(c, universe, fuel).knowledge(attacker, channel, trace, "ac")


def progress_knowledge_full(
    attacker: Attacker,
    c: Command,
    channel: str,
    trace: Trace,
    universe: Universe,
    fuel: int | None = None,
) -> KnowledgeSet:
    return _oracle(c, universe, fuel).knowledge(attacker, channel, trace, "full")


def kb_security_check(
    c: Command,
    policy: DynamicPolicySpec,
    attacker: Attacker,
    channel: str,
    store: Store,
    universe: Universe,
    fuel: int | None = None,
) -> Verdict:
    oracle = _oracle(c, universe, fuel, policy)
    return oracle.knowledge_check(attacker, channel, store, "none")


def acpi_check(
    c: Command,
    policy: DynamicPolicySpec,
    attacker: Attacker,
    channel: str,
    store: Store,
    universe: Universe,
    fuel: int | None = None,
) -> Verdict:
    oracle = _oracle(c, universe, fuel, policy)
    return oracle.knowledge_check(attacker, channel, store, "ac")


def pi_check(
    c: Command,
    policy: DynamicPolicySpec,
    attacker: Attacker,
    channel: str,
    store: Store,
    universe: Universe,
    fuel: int | None = None,
) -> Verdict:
    oracle = _oracle(c, universe, fuel, policy)
    return oracle.knowledge_check(attacker, channel, store, "full")


def two_run_pi_check(
    c: Command,
    policy: DynamicPolicySpec,
    channel: str,
    universe: Universe,
    fuel: int | None = None,
    oracle: SemanticOracle | None = None,
) -> Verdict:
    oracle = oracle or _oracle(c, universe, fuel, policy)
    return oracle.for_all_stores(
        "two-run", lambda store: oracle.two_run_check(channel, store)
    )


def typing_soundness_check(
    c: Command,
    g: DepEnv,
    universe: Universe,
    fuel: int | None = None,
    oracle: SemanticOracle | None = None,
) -> Verdict:
    """Stores agreeing on a point's dependencies output the same value there."""
    oracle = oracle or _oracle(c, universe, fuel)
    return combine(
        "soundness",
        oracle.fuel,
        (
            oracle.soundness_check(g, channel, store)
            for channel in sorted(channels(c))
            for store in universe
        ),
    )


def is_quasi_constant(
    c: Command, channel: str, universe: Universe, fuel: int | None = None
) -> bool | None:
    return _oracle(c, universe, fuel).is_quasi_constant(channel)


class Disagreement(BaseModel):
    sigma: dict[str, int]
    two_run: VerdictKind
    attackers: VerdictKind
    attacker: str | None = None


class CrosscheckReport(BaseModel):
    """Two-run security against PI security for a whole attacker family."""

    channel: str
    attackers: int
    stores: int
    skipped: int
    two_run_insecure: int
    disagreements: list[Disagreement]

    @property
    def agrees(self) -> bool:
        return not self.disagreements


def attacker_family(
    attackers: Iterable[Attacker], oracle: SemanticOracle, channel: str
) -> list[Attacker]:
    """The given attackers plus the length-only attacker and one splitting
    attacker per examined output index."""
    horizon, _ = oracle.horizon(channel)
    return [*attackers, LengthOnly(), *(SplitAttacker(i) for i in range(horizon))]


def theorem1_crosscheck(
    c: Command,
    policy: DynamicPolicySpec,
    channel: str,
    universe: Universe,
    attackers: Iterable[Attacker],
    fuel: int | None = None,
) -> CrosscheckReport:
    """For every store: two-run secure iff PI secure against every attacker.

    Stores where either side is bounded are skipped.
    """
    oracle = _oracle(c, universe, fuel, policy)
    family = attacker_family(attackers, oracle, channel)
    disagreements: list[Disagreement] = []
    skipped = insecure = 0
    for store in universe:
        two_run = oracle.two_run_check(channel, store)
        if two_run.kind is VerdictKind.BOUNDED:
            skipped += 1
            continue
        insecure += two_run.insecure
        against = VerdictKind.SECURE
        breaker: str | None = None
        for attacker in family:
            verdict = oracle.knowledge_check(attacker, channel, store, "full")
            if verdict.insecure:
                against, breaker = VerdictKind.INSECURE, attacker.name
                break
            if verdict.kind is VerdictKind.BOUNDED:
                against = VerdictKind.BOUNDED
        if against is VerdictKind.BOUNDED:
            skipped += 1
            continue
        if against is not two_run.kind:
            disagreements.append(
                Disagreement(
                    sigma=dict(store),
                    two_run=two_run.kind,
                    attackers=against,
                    attacker=breaker,
                )
            )
    if disagreements:
        logger.warning(f"{len(disagreements)} stores disagree on channel {channel}")
    return CrosscheckReport(
        channel=channel,
        attackers=len(family),
        stores=len(universe),
        skipped=skipped,
        two_run_insecure=insecure,
        disagreements=disagreements,
    )
