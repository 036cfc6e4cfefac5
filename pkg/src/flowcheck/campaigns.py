"""Cross-validation campaigns over seeded random programs.

Each campaign is a prefect flow that maps one plain case function over a range
of seeds, logs failures and publishes a markdown summary. The case functions
need no prefect runtime and are what the tests call directly.
"""

from __future__ import annotations

import math
import statistics
import time
from collections.abc import Callable, Sequence

from prefect import flow, get_run_logger, task, unmapped
from prefect.artifacts import create_markdown_artifact
from prefect.cache_policies import NONE
from pydantic import BaseModel, Field

from flowcheck.attackers import (
    Attacker,
    CountingAttacker,
    LengthOnly,
    PerfectRecall,
    enumerate_attackers,
)
from flowcheck.checker import PointVerdict, check_compliance
from flowcheck.generate import random_policy, random_program, straight_line_program
from flowcheck.lang import ChannelPoint, Command, channels, flatten, seq
from flowcheck.oracle import (
    SemanticOracle,
    VerdictKind,
    theorem1_crosscheck,
    two_run_pi_check,
    typing_soundness_check,
)
from flowcheck.policy import DynamicPolicySpec, approximate_policy
from flowcheck.semantics import Universe
from flowcheck.settings import settings
from flowcheck.typesystem import PC, Channel, DepEnv, infer

SOUNDNESS_FUEL = 500
LEMMA_ATTACKER_STATES = 2
KNOWLEDGE_PREFIX = 4


class CaseResult(BaseModel):
    seed: int
    outcome: str
    failures: list[str] = Field(default_factory=list)
    bounded: bool = False


class CampaignSummary(BaseModel):
    name: str
    cases: int
    failures: list[CaseResult]
    bounded: int
    notes: list[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def markdown(self) -> str:
        lines = [
            f"# {self.name}",
            "",
            f"- cases: {self.cases}",
            f"- failures: {len(self.failures)}",
            f"- bounded: {self.bounded}",
            *(f"- {note}" for note in self.notes),
        ]
        if self.failures:
            lines += ["", "| seed | outcome | detail |", "| --- | --- | --- |"]
            lines += [
                f"| {case.seed} | {case.outcome} | {'; '.join(case.failures)} |"
                for case in self.failures
            ]
        return "\n".join(lines)


def _universe(c: Command, policy: DynamicPolicySpec | None = None) -> Universe:
    extra = policy.variables if policy is not None else frozenset()
    return Universe.for_program(
        c, default=settings.default_domain, extra_variables=extra
    )


# case functions


def soundness_case(seed: int, fuel: int = SOUNDNESS_FUEL) -> CaseResult:
    """The inferred typing of a random program is never refuted by its runs."""
    c = random_program(seed)
    verdict = typing_soundness_check(c, infer(c), _universe(c), fuel)
    failures = []
    if verdict.insecure:
        assert verdict.counterexample is not None
        failures.append(verdict.counterexample.model_dump_json())
    return CaseResult(
        seed=seed,
        outcome=verdict.kind,
        failures=failures,
        bounded=verdict.kind is VerdictKind.BOUNDED,
    )


def bridge_case(seed: int, fuel: int = SOUNDNESS_FUEL) -> CaseResult:
    """A compliant program with a random directive policy is two-run secure."""
    c = random_program(seed, directives=True)
    policy = random_policy(seed)
    universe = _universe(c, policy)
    report = check_compliance(
        infer(c),
        approximate_policy(c, policy),
        "exact",
        universe,
        program=c,
        policy=policy,
        fuel=fuel,
    )
    if report.verdict is not PointVerdict.COMPLIANT:
        return CaseResult(seed=seed, outcome=report.verdict)
    oracle = SemanticOracle(c, universe, policy, fuel)
    failures, bounded = [], False
    for channel in sorted(channels(c)):
        verdict = two_run_pi_check(c, policy, channel, universe, oracle=oracle)
        bounded |= verdict.kind is VerdictKind.BOUNDED
        if verdict.insecure:
            assert verdict.counterexample is not None
            failures.append(f"{channel}: {verdict.counterexample.model_dump_json()}")
    return CaseResult(
        seed=seed, outcome=report.verdict, failures=failures, bounded=bounded
    )


def theorem1_case(
    seed: int,
    alphabet: Sequence[int] = (0, 1, 2),
    max_states: int = 3,
    fuel: int = SOUNDNESS_FUEL,
) -> CaseResult:
    """Two-run security agrees with PI security against the whole attacker family."""
    c = random_program(seed, directives=True)
    policy = random_policy(seed)
    attackers = list(enumerate_attackers(alphabet, max_states))
    failures, skipped = [], 0
    for channel in sorted(channels(c)):
        report = theorem1_crosscheck(
            c, policy, channel, _universe(c, policy), attackers, fuel
        )
        skipped += report.skipped
        failures += [
            f"{channel} {d.sigma}: two-run {d.two_run}, attackers {d.attackers}"
            for d in report.disagreements
        ]
    return CaseResult(
        seed=seed, outcome="checked", failures=failures, bounded=skipped > 0
    )


def _typing_lemmas(c: Command, g: DepEnv) -> list[str]:
    failures = []
    if g(PC) != {PC}:
        failures.append(f"pc depends on {sorted(map(str, g(PC)))}")
    for var in g.keys():
        if PC not in g(var) and g(var) != {var}:
            failures.append(f"{var} changed without depending on pc")
    items = flatten(c)
    for cut in range(1, len(items)):
        g1 = infer(seq(*items[:cut]))
        for var in g1.keys():
            if isinstance(var, (Channel, ChannelPoint)) and not g1(var) <= g(var):
                failures.append(f"{var} shrinks after statement {cut}")
    return failures


def _knowledge_lemmas(
    c: Command, oracle: SemanticOracle, attackers: list[Attacker]
) -> list[str]:
    failures = []
    for channel in sorted(channels(c)):
        quasi_constant = oracle.is_quasi_constant(channel)
        for attacker in attackers:
            lifted = CountingAttacker(attacker)
            for store in oracle.universe:
                trace = oracle.trace(store, channel)
                for length in range(min(KNOWLEDGE_PREFIX, len(trace.known)) + 1):
                    prefix = trace.known[:length]
                    base = oracle.knowledge(attacker, channel, prefix)
                    counted = oracle.knowledge(lifted, channel, prefix)
                    if not counted.members <= base.members | base.undecided:
                        failures.append(
                            f"lifted {attacker.name} knows more after {prefix}"
                        )
                    if store not in base.members | base.undecided:
                        failures.append(f"{dict(store)} outside its own knowledge")
                if quasi_constant:
                    verdict = oracle.knowledge_check(attacker, channel, store, "full")
                    if verdict.insecure:
                        failures.append(
                            f"quasi-constant channel {channel} breaks PI for "
                            f"{attacker.name}"
                        )
        for attacker in [PerfectRecall(), LengthOnly()] + [
            CountingAttacker(a) for a in attackers
        ]:
            for store in oracle.universe:
                acpi = oracle.knowledge_check(attacker, channel, store, "ac")
                pi = oracle.knowledge_check(attacker, channel, store, "full")
                if acpi.kind is not pi.kind:
                    failures.append(
                        f"{attacker.name} on {channel}: acpi {acpi.kind}, pi {pi.kind}"
                    )
    return failures


def lemma_case(
    seed: int,
    alphabet: Sequence[int] = (0, 1, 2),
    max_states: int = LEMMA_ATTACKER_STATES,
    fuel: int = SOUNDNESS_FUEL,
) -> CaseResult:
    """Typing lemmas and knowledge lemmas on one random program."""
    c = random_program(seed, directives=True)
    policy = random_policy(seed)
    oracle = SemanticOracle(c, _universe(c, policy), policy, fuel)
    attackers: list[Attacker] = list(enumerate_attackers(alphabet, max_states))
    failures = _typing_lemmas(c, infer(c)) + _knowledge_lemmas(c, oracle, attackers)
    return CaseResult(seed=seed, outcome="checked", failures=failures)


def inference_seconds(statements: int, variables: int, repeats: int = 3) -> float:
    """Best wall-clock time to infer a straight-line program's typing."""
    c = straight_line_program(statements, variables)
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        infer(c)
        best = min(best, time.perf_counter() - start)
    return best


def loglog_slope(xs: Sequence[int], seconds: Sequence[float]) -> float:
    slope, _ = statistics.linear_regression(
        [math.log(x) for x in xs], [math.log(max(s, 1e-9)) for s in seconds]
    )
    return slope


# flows


def _summarize(name: str, results: list[CaseResult]) -> CampaignSummary:
    logger = get_run_logger()
    summary = CampaignSummary(
        name=name,
        cases=len(results),
        failures=[r for r in results if r.failures],
        bounded=sum(r.bounded for r in results),
    )
    for case in summary.failures:
        logger.error(f"seed {case.seed}: {'; '.join(case.failures)}")
    logger.info(
        f"{name}: {summary.cases} cases, {len(summary.failures)} failures, "
        f"{summary.bounded} bounded"
    )
    return summary


def _publish(summary: CampaignSummary) -> CampaignSummary:
    create_markdown_artifact(
        key=summary.name.replace("_", "-"),
        markdown=summary.markdown(),
        description=f"{summary.name} summary",
    )
    return summary


def _map(case: Callable[..., CaseResult], seeds: range, **kwargs) -> list[CaseResult]:
    return task(case, cache_policy=NONE).map(list(seeds), **kwargs).result()


@flow
def soundness_campaign(
    programs: int = 500, seed: int = 0, fuel: int = SOUNDNESS_FUEL
) -> CampaignSummary:
    results = _map(soundness_case, range(seed, seed + programs), fuel=fuel)
    summary = _summarize("soundness_campaign", results)
    share = summary.bounded / max(summary.cases, 1)
    summary.notes.append(f"bounded share {share:.1%}")
    return _publish(summary)


@flow
def bridge_campaign(
    programs: int = 500, seed: int = 0, fuel: int = SOUNDNESS_FUEL
) -> CampaignSummary:
    results = _map(bridge_case, range(seed, seed + programs), fuel=fuel)
    summary = _summarize("bridge_campaign", results)
    compliant = sum(r.outcome == PointVerdict.COMPLIANT for r in results)
    summary.notes.append(f"{compliant} compliant programs checked by the oracle")
    return _publish(summary)


@flow
def theorem1_campaign(
    programs: int = 30,
    seed: int = 0,
    max_states: int = 3,
    alphabet: list[int] | None = None,
    fuel: int = SOUNDNESS_FUEL,
) -> CampaignSummary:
    results = _map(
        theorem1_case,
        range(seed, seed + programs),
        alphabet=unmapped(alphabet or settings.attacker_alphabet),
        max_states=max_states,
        fuel=fuel,
    )
    return _publish(_summarize("theorem1_campaign", results))


@flow
def lemma_campaign(
    programs: int = 100,
    seed: int = 0,
    max_states: int = LEMMA_ATTACKER_STATES,
    fuel: int = SOUNDNESS_FUEL,
) -> CampaignSummary:
    results = _map(
        lemma_case,
        range(seed, seed + programs),
        alphabet=unmapped(settings.attacker_alphabet),
        max_states=max_states,
        fuel=fuel,
    )
    return _publish(_summarize("lemma_campaign", results))


@flow
def complexity_campaign(
    fixed_statements: int = 400,
    fixed_variables: int = 8,
    variable_counts: list[int] | None = None,
    statement_counts: list[int] | None = None,
    max_variable_slope: float = 3.3,
    max_statement_slope: float = 1.3,
) -> CampaignSummary:
    logger = get_run_logger()
    variable_counts = variable_counts or [4, 8, 16, 32]
    statement_counts = statement_counts or [100, 200, 400, 800, 1600]
    by_variables = [inference_seconds(fixed_statements, v) for v in variable_counts]
    by_statements = [inference_seconds(n, fixed_variables) for n in statement_counts]
    variable_slope = loglog_slope(variable_counts, by_variables)
    statement_slope = loglog_slope(statement_counts, by_statements)
    logger.info(
        f"slope in variables {variable_slope:.2f}, in statements {statement_slope:.2f}"
    )

    failures = []
    if variable_slope > max_variable_slope:
        failures.append(f"variable slope {variable_slope:.2f} > {max_variable_slope}")
    if statement_slope > max_statement_slope:
        failures.append(f"statement slope {statement_slope:.2f} > {max_statement_slope}")
    summary = CampaignSummary(
        name="complexity_campaign",
        cases=len(variable_counts) + len(statement_counts),
        failures=[CaseResult(seed=0, outcome="timed", failures=failures)]
        if failures
        else [],
        bounded=0,
        notes=[
            f"slope in variables {variable_slope:.2f}",
            f"slope in statements {statement_slope:.2f}",
        ],
    )
    return _publish(summary)


CAMPAIGNS = {
    "soundness": soundness_campaign,
    "bridge": bridge_campaign,
    "theorem1": theorem1_campaign,
    "lemmas": lemma_campaign,
    "complexity": complexity_campaign,
}
