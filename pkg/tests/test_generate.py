import pytest

from flowcheck.generate import random_policy, random_program, straight_line_program
from flowcheck.lang import (
    Directive,
    If,
    Out,
    While,
    flatten,
    outputs,
    parse_program,
    pretty,
    statements,
)
from flowcheck.semantics import Status, Universe, explore

SEEDS = range(40)


def test_programs_are_reproducible():
    assert random_program(7) == random_program(7)
    assert random_policy(7) == random_policy(7)
    assert any(random_program(seed) != random_program(0) for seed in range(1, 5))


@pytest.mark.parametrize("seed", SEEDS)
def test_programs_print_and_parse_back(seed):
    c = random_program(seed, directives=True)
    assert parse_program(pretty(c)) == c


@pytest.mark.parametrize("seed", SEEDS)
def test_points_are_numbered_in_order(seed):
    c = random_program(seed)
    assert [out.point for out in outputs(c)] == [
        f"p{index}" for index in range(1, len(outputs(c)) + 1)
    ]


@pytest.mark.parametrize("seed", range(15))
def test_runs_over_booleans_never_run_out_of_fuel(seed):
    c = random_program(seed, directives=True)
    policy = random_policy(seed)
    for store in Universe.for_program(c):
        assert explore(policy.config(c, store), 10_000).status is not Status.EXHAUSTED


def test_directives_are_optional():
    plain = [random_program(seed) for seed in SEEDS]
    assert not any(isinstance(s, Directive) for c in plain for s in statements(c))
    mixed = [random_program(seed, directives=True) for seed in SEEDS]
    assert any(isinstance(s, Directive) for c in mixed for s in statements(c))


def test_random_policy_grants_program_variables():
    spec = random_policy(3, variables=("x", "y"), channels=("a",))
    assert spec.initial.allowed("a").variables <= {"x", "y"}
    assert spec.initial.allowed("b").exprs == frozenset()


def test_straight_line_programs():
    c = straight_line_program(30, 4)
    items = flatten(c)
    assert len(items) == 30
    assert [item.point for item in items if isinstance(item, Out)] == ["p9", "p19", "p29"]


def test_random_corpora_are_not_mostly_trivial():
    programs = [random_program(seed) for seed in range(200)]
    sizes = [len(list(statements(c))) for c in programs]
    compound = [
        c for c in programs if any(isinstance(s, (If, While)) for s in statements(c))
    ]
    assert sum(size == 1 for size in sizes) / len(programs) < 0.2
    assert len(compound) / len(programs) > 0.4
    assert any(isinstance(s, While) for c in compound for s in statements(c))
