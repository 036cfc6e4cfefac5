import pytest
from conftest import load_policy, load_program
from hypothesis import given, settings
from strategies import commands

from flowcheck.attackers import (
    AttackerFile,
    CountingAttacker,
    PerfectRecall,
    SplitAttacker,
    enumerate_attackers,
)
from flowcheck.lang import parse_program
from flowcheck.oracle import (
    SemanticOracle,
    VerdictKind,
    acpi_check,
    is_quasi_constant,
    kb_security_check,
    knowledge,
    pi_check,
    progress_knowledge_ac,
    progress_knowledge_full,
    theorem1_crosscheck,
    two_run_pi_check,
    typing_soundness_check,
)
from flowcheck.policy import DynamicPolicySpec, PolicyState, universe_for
from flowcheck.semantics import Store, Universe
from flowcheck.typesystem import infer

X01 = Universe.of({"x": [0, 1]})
CHECKS = {"kb": "none", "acpi": "ac", "pi": "full"}


def _setup(program: str, policy: str):
    c = load_program(program)
    policy_file = load_policy(policy)
    return c, policy_file.spec(), universe_for(c, policy_file)


def test_corpus_verdicts(corpus, expected):
    for case in expected["oracle"]:
        c, spec, universe = _setup(case["program"], case["policy"])
        oracle = SemanticOracle(c, universe, spec, fuel=1000)
        if case["check"] == "two-run":
            verdict = two_run_pi_check(c, spec, "a", universe, oracle=oracle)
        else:
            attacker = AttackerFile.load(corpus / case["attacker"])
            progress = CHECKS[case["check"]]
            verdict = oracle.for_all_stores(
                case["check"],
                lambda store: oracle.knowledge_check(attacker, "a", store, progress),
            )
        assert verdict.kind == case["verdict"], case


def test_last_value_knowledge(corpus):
    last_value = AttackerFile.load(corpus / "last_value.attacker.json")
    c = load_program("constant_prefix.while")
    both = {Store({"x": 0}), Store({"x": 1})}
    assert knowledge(last_value, c, "a", (1, 1), X01).members == both
    assert knowledge(last_value, c, "a", (1, 1, 1), X01).members == both
    assert knowledge(last_value, c, "a", (1, 1, 1, 2), X01).members == {Store({"x": 0})}
    assert progress_knowledge_ac(last_value, c, "a", (1, 1, 1), X01).members == both
    full = progress_knowledge_full(last_value, c, "a", (1, 1), X01)
    assert full.members == {Store({"x": 0})}
    assert full.exclusion == {Store({"x": 1})}


def test_perfect_recall_knowledge():
    c = load_program("constant_prefix.while")
    assert len(knowledge(PerfectRecall(), c, "a", (1, 1), X01).members) == 2
    assert knowledge(PerfectRecall(), c, "a", (1, 1, 1), X01).members == {Store({"x": 0})}


def test_counting_lift_shrinks_knowledge(corpus):
    last_value = AttackerFile.load(corpus / "last_value.attacker.json")
    c = load_program("constant_prefix.while")
    for trace in [(1,), (1, 1), (1, 1, 1), (1, 1, 1, 2)]:
        lifted = knowledge(CountingAttacker(last_value), c, "a", trace, X01)
        assert lifted.members <= knowledge(last_value, c, "a", trace, X01).members


def test_progress_leak_is_tolerated():
    universe = Universe.of({"x": [4, 8]})
    c = load_program("silent_loop.while")
    spec = DynamicPolicySpec()
    for store in universe:
        assert pi_check(c, spec, PerfectRecall(), "a", store, universe).secure
    # the perfect-recall attacker does learn x from the missing second output
    assert kb_security_check(c, spec, PerfectRecall(), "a", Store({"x": 4}), universe).insecure


def test_two_run_counterexample():
    c, spec, universe = _setup("revoke_loop.while", "empty.policy")
    verdict = two_run_pi_check(c, spec, "a", universe)
    assert verdict.insecure
    example = verdict.counterexample
    assert (example.index, example.point, example.policy) == (1, "p2", [])
    assert example.value != example.other_value
    assert example.sigma["x"] == example.value


def test_acpi_against_the_last_value_attacker(corpus):
    last_value = AttackerFile.load(corpus / "last_value.attacker.json")
    c = load_program("constant_prefix.while")
    spec = DynamicPolicySpec()
    verdict = acpi_check(c, spec, last_value, "a", Store({"x": 0}), X01)
    assert verdict.insecure
    assert verdict.counterexample.index == 3
    assert verdict.counterexample.rho == {"x": 1}
    assert pi_check(c, spec, last_value, "a", Store({"x": 0}), X01).secure


def test_truncated_runs_are_bounded():
    c = parse_program("while (x < 100) { x := x + 1; out x on a }")
    universe = Universe.of({"x": [0]})
    verdict = two_run_pi_check(c, DynamicPolicySpec(), "a", universe, fuel=50)
    assert verdict.kind is VerdictKind.BOUNDED
    assert "50" in verdict.detail


def test_horizon():
    c, spec, universe = _setup("revoke_loop.while", "empty.policy")
    oracle = SemanticOracle(c, universe, spec, fuel=1000)
    assert oracle.horizon("a", rounds=3) == (4, False)
    short = SemanticOracle(c, universe, spec, fuel=50)
    assert short.horizon("a", rounds=100) == (50, True)


def test_quasi_constant():
    assert is_quasi_constant(load_program("late_output.while"), "a", Universe.of({"x": [4, 8]}))
    assert not is_quasi_constant(load_program("revoke_loop.while"), "a", X01)


def test_quasi_constant_channels_are_pi_secure():
    c = load_program("late_output.while")
    universe = Universe.of({"x": [4, 8]})
    for attacker in enumerate_attackers([1, 2], 2):
        for store in universe:
            assert pi_check(c, DynamicPolicySpec(), attacker, "a", store, universe).secure


def test_soundness_on_the_corpus():
    for name in ["grant_revoke.while", "revoke_loop.while", "revoke_on_y.while", "revoke_on_x.while", "flow_sensitive.while"]:
        c = load_program(name)
        universe = Universe.for_program(c)
        assert typing_soundness_check(c, infer(c), universe, fuel=500).secure, name


@settings(max_examples=40, deadline=None)
@given(commands(max_depth=2))
def test_typing_is_sound(c):
    verdict = typing_soundness_check(c, infer(c), Universe.for_program(c), fuel=300)
    assert not verdict.insecure, verdict.counterexample


@pytest.mark.parametrize(
    "program, policy",
    [("grant_revoke.while", "empty.policy"), ("revoke_loop.while", "empty.policy"), ("revoke_on_x.while", "grant_x.policy")],
)
def test_two_run_agrees_with_the_attacker_family(program, policy):
    c, spec, universe = _setup(program, policy)
    attackers = list(enumerate_attackers([0, 1, 2, 3], 1)) + [PerfectRecall()]
    report = theorem1_crosscheck(c, spec, "a", universe, attackers, fuel=1000)
    assert report.agrees, report.disagreements
    assert report.skipped == 0
    assert report.stores == len(universe)


def test_crosscheck_counts_insecure_stores():
    c, spec, universe = _setup("revoke_loop.while", "empty.policy")
    report = theorem1_crosscheck(c, spec, "a", universe, [SplitAttacker(1)], fuel=1000)
    assert report.two_run_insecure == 2


def test_explicit_zero_fuel_is_kept():
    oracle = SemanticOracle(parse_program("out x on a"), X01, fuel=0)
    assert oracle.fuel == 0
    verdict = oracle.two_run_check("a", Store({"x": 0}))
    assert verdict.kind is VerdictKind.BOUNDED
    assert SemanticOracle(parse_program("skip"), X01).fuel > 0


@settings(max_examples=30, deadline=None)
@given(commands(max_depth=2))
def test_perfect_recall_knowledge_only_shrinks(c):
    universe = Universe.for_program(c)
    oracle = SemanticOracle(c, universe, fuel=300)
    for store in universe:
        trace = oracle.trace(store, "a").known[:4]
        previous = oracle.knowledge(PerfectRecall(), "a", ())
        for length in range(1, len(trace) + 1):
            current = oracle.knowledge(PerfectRecall(), "a", trace[:length])
            assert current.members <= previous.members
            previous = current


@settings(max_examples=15, deadline=None)
@given(commands(max_depth=1))
def test_counting_attackers_suffice_for_progress_insensitivity(c):
    policy = DynamicPolicySpec(PolicyState.from_mapping({"a": ["x"]}))
    universe = Universe.for_program(c, extra_variables=policy.variables)
    oracle = SemanticOracle(c, universe, policy, fuel=200)
    family = list(enumerate_attackers([0, 1], 2))
    for store in universe:
        plain = {
            a: oracle.knowledge_check(a, "a", store, "full").insecure for a in family
        }
        lifted = {
            a: oracle.knowledge_check(CountingAttacker(a), "a", store, "full").insecure
            for a in family
        }
        # lifting an attacker keeps every violation it finds
        assert all(lifted[a] for a in family if plain[a])
        assert (any(plain.values()) or any(lifted.values())) == any(lifted.values())
