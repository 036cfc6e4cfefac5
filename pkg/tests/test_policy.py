import json

import pytest
from conftest import load_program
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from strategies import BOOLEAN_UNIVERSE, NAMES, commands, equiv_exprs, stores

from flowcheck.errors import ExecutionPointError, PolicyFileError
from flowcheck.lang import ChannelPoint, Seq, Var, parse_expression, parse_program
from flowcheck.policy import (
    DynamicPolicySpec,
    EquivSpec,
    PolicyApprox,
    PolicyFile,
    PolicyState,
    approximate_policy,
    coarser_exact,
    coarser_syntactic,
    coarseness_witness,
    policy_at,
    universe_for,
)
from flowcheck.semantics import Store, Universe, explore, run

XY = Universe.of({"x": [0, 1], "y": [0, 1]})


def test_equivalence_specs():
    assert EquivSpec.of("x").equivalent({"x": 1, "y": 0}, {"x": 1, "y": 1})
    assert not EquivSpec.of("x").equivalent({"x": 1}, {"x": 0})
    assert EquivSpec.of("x + y").equivalent({"x": 0, "y": 1}, {"x": 1, "y": 0})
    assert EquivSpec().equivalent({"x": 0}, {"x": 1})


def test_spec_queries():
    spec = EquivSpec.of("y", "x + 1")
    assert spec.to_json() == ["x + 1", "y"]
    assert spec.variables == {"x", "y"}
    assert not spec.is_variable_only
    assert EquivSpec.of_variables(["x"]).is_variable_only
    assert str(EquivSpec.of("x")) == "{x}"


def test_policy_state_updates():
    state = PolicyState.from_mapping({"a": ["x"]})
    granted = state.apply("allow", Var("y"), "a")
    assert granted.allowed("a").to_json() == ["x", "y"]
    assert granted.apply("revoke", Var("x"), "a").allowed("a").to_json() == ["y"]
    # revoking something never granted changes nothing
    assert state.apply("revoke", Var("x"), "b") == state
    assert state.static()["b"] == EquivSpec()


def test_policy_at_execution_points():
    c = load_program("grant_revoke.while")
    spec = DynamicPolicySpec()
    store = Store({"x": 1})
    assert policy_at(spec, c, store, 0)["a"] == EquivSpec()
    assert policy_at(spec, c, store, 1)["a"] == EquivSpec.of("x")
    assert policy_at(spec, c, store, 5)["a"] == EquivSpec()
    with pytest.raises(ExecutionPointError):
        policy_at(spec, c, store, 8)


def test_syntactic_coarseness():
    assert coarser_syntactic({"x"}, EquivSpec.of("x", "y"))
    assert coarser_syntactic(set(), EquivSpec())
    assert not coarser_syntactic({"x"}, EquivSpec.of("x + y"))


def test_exact_coarseness():
    assert not coarser_exact(EquivSpec.of("x"), EquivSpec.of("x + y"), XY)
    first, second = coarseness_witness(EquivSpec.of("x"), EquivSpec.of("x + y"), XY)
    assert first["x"] + first["y"] == second["x"] + second["y"]
    assert first["x"] != second["x"]
    assert coarser_exact(EquivSpec.of("x + y"), EquivSpec.of("x", "y"), XY)


def test_exact_check_sees_through_expressions():
    spec = EquivSpec.of("x == 1")
    assert not coarser_syntactic({"x"}, spec)
    assert coarser_exact(EquivSpec.of_variables(["x"]), spec, XY)


def test_grant_revoke_approximation():
    approx = approximate_policy(load_program("grant_revoke.while"), DynamicPolicySpec())
    assert approx.to_json() == {"a@p1": ["x"], "a@p2": []}


def test_branch_dependent_revocation_approximation():
    spec = DynamicPolicySpec(PolicyState.from_mapping({"a": ["x", "y"]}))
    approx = approximate_policy(load_program("revoke_on_y.while"), spec)
    assert approx.to_json() == {
        "a@p1": ["x", "y"],
        "a@p2": ["x", "y"],
        "a@p3": ["y"],
        "a@p4": ["y"],
    }


def test_loop_approximation_takes_every_iteration():
    c = parse_program("allow x -> a; while (y) { out x on a; revoke x -> a }")
    approx = approximate_policy(c, DynamicPolicySpec())
    assert approx[ChannelPoint("a", "p1")] == EquivSpec()


def test_overrides():
    approx = PolicyApprox({ChannelPoint("a", "p1"): EquivSpec()})
    point = ChannelPoint("a", "p1")
    replaced = approx.with_overrides({point: EquivSpec.of("x")})
    assert replaced[point] == EquivSpec.of("x")
    assert point in replaced
    assert approx[point] == EquivSpec()


@settings(max_examples=50, deadline=None)
@given(commands(max_depth=2))
def test_approximation_is_at_least_as_strict_as_every_run(c):
    initial = PolicyState.from_mapping({"a": ["x"], "b": ["y", "x + z"]})
    spec = DynamicPolicySpec(initial)
    approx = approximate_policy(c, spec)
    for store in Universe.for_program(c):
        execution = explore(spec.config(c, store), 200)
        for channel in ("a", "b"):
            for emission in execution.channel_trace(channel).stem:
                allowed = execution.policy_at(emission.step).allowed(channel)
                point = ChannelPoint(channel, emission.point)
                assert approx[point].exprs <= allowed.exprs


def test_policy_file(corpus):
    policy = PolicyFile.load(corpus / "x_4_or_8.policy")
    assert policy.universe == {"x": [4, 8]}
    assert policy.spec() == DynamicPolicySpec()


def test_policy_file_errors(tmp_path):
    bad = tmp_path / "bad.policy"
    bad.write_text(json.dumps({"initial": {}, "surprise": 1}))
    with pytest.raises(PolicyFileError):
        PolicyFile.load(bad)
    with pytest.raises(PolicyFileError):
        PolicyFile.load(tmp_path / "missing.policy")
    broken = PolicyFile(initial={"a": ["x +"]})
    with pytest.raises(PolicyFileError):
        broken.spec()
    with pytest.raises(PolicyFileError):
        PolicyFile(approx_override={"p1": ["x"]}).overrides()


def test_policy_file_overrides():
    policy = PolicyFile(approx_override={"a@p1": ["x", "y > 0"]})
    assert policy.overrides() == {
        ChannelPoint("a", "p1"): EquivSpec.of("x", parse_expression("y > 0"))
    }


def test_universe_precedence():
    c = parse_program("out x on a")
    policy = PolicyFile(initial={"a": ["w"]}, universe={"x": [4, 8]})
    universe = universe_for(c, policy, {"x": [1, 2, 3]}, default_domain=(0, 1))
    assert universe.as_dict() == {"w": [0, 1], "x": [1, 2, 3]}
    assert universe_for(c, policy).as_dict()["x"] == [4, 8]


@settings(max_examples=50, deadline=None)
@given(st.frozensets(st.sampled_from(NAMES)), equiv_exprs)
def test_syntactic_coarseness_implies_exact(winner, extra):
    spec = EquivSpec(frozenset(extra) | {Var(name) for name in winner})
    assert coarser_syntactic(winner, spec)
    assert coarser_exact(EquivSpec.of_variables(winner), spec, BOOLEAN_UNIVERSE)


@settings(max_examples=20, deadline=None)
@given(equiv_exprs)
def test_agreement_is_an_equivalence_relation(exprs):
    spec = EquivSpec(exprs)
    universe = list(BOOLEAN_UNIVERSE)
    for first in universe:
        assert spec.equivalent(first, first)
        for second in universe:
            related = spec.equivalent(first, second)
            assert related == spec.equivalent(second, first)
            if not related:
                continue
            for third in universe:
                if spec.equivalent(second, third):
                    assert spec.equivalent(first, third)


@settings(max_examples=50, deadline=None)
@given(commands(max_depth=2), commands(max_depth=2), stores)
def test_policy_at_only_sees_the_steps_taken(c1, c2, store):
    spec = DynamicPolicySpec(PolicyState.from_mapping({"a": ["x"]}))
    result = run(spec.config(c1, store), 100)
    assume(not result.exhausted)
    for n in range(len(result.labels) + 1):
        assert policy_at(spec, Seq(c1, c2), store, n) == policy_at(spec, c1, store, n)
