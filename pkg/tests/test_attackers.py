import json

import pytest

from flowcheck.attackers import (
    AttackerFile,
    CountingAttacker,
    LengthOnly,
    PerfectRecall,
    SplitAttacker,
    all_traces,
    automaton_from_table,
    canonical_form,
    enumerate_attackers,
    is_counting,
)
from flowcheck.errors import AttackerFileError


@pytest.fixture
def last_value(corpus):
    return AttackerFile.load(corpus / "last_value.attacker.json")


def test_automaton_file(last_value):
    assert last_value.name == "last-value"
    assert last_value.run([]) == "q0"
    assert last_value.run([1, 2]) == "q2"
    assert last_value.run([2, 2, 1]) == "q1"
    # no edge and no default: the state is kept
    assert last_value.run([0]) == "q0"
    assert last_value.memory == 9


def test_default_edges(corpus):
    first_value = AttackerFile.load(corpus / "first_value.attacker.json")
    assert first_value.run([2, 1, 0]) == "q2"
    assert first_value.run([0, 0, 1, 2]) == "q1"


def test_invalid_attacker_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"states": ["q0"], "start": "q9"}))
    with pytest.raises(AttackerFileError):
        AttackerFile.load(path)
    path.write_text(json.dumps({"states": ["q0"], "start": "q0", "delta": {"q0": {"x": "q0"}}}))
    with pytest.raises(AttackerFileError):
        AttackerFile.load(path)
    with pytest.raises(AttackerFileError):
        AttackerFile.load(tmp_path / "missing.json")


def test_file_name_is_the_fallback(tmp_path):
    path = tmp_path / "silent.json"
    path.write_text(json.dumps({"states": ["q0"], "start": "q0"}))
    assert AttackerFile.load(path).name == "silent"


def test_counting_lift(last_value):
    lifted = CountingAttacker(last_value)
    assert lifted.counting and not last_value.counting
    assert lifted.name == "last-value^ω"
    assert lifted.run([1, 2]) == ("q2", 2)


def test_built_in_attackers():
    assert PerfectRecall().run([3, 1]) == (3, 1)
    assert LengthOnly().run([3, 1, 4]) == 3
    assert SplitAttacker(1).run([5, 6, 7]) == (3, 6)
    assert SplitAttacker(4).run([5, 6]) == (2, None)


def test_is_counting(last_value):
    traces = list(all_traces([1, 2], 3))
    assert len(traces) == 15
    assert is_counting(LengthOnly(), traces)
    assert is_counting(CountingAttacker(last_value), traces)
    assert not is_counting(last_value, traces)


def test_canonical_form(last_value):
    assert canonical_form(last_value, [2, 1]) == ((1, 2), (1, 2), (1, 2))
    rebuilt = automaton_from_table(((1, 2), (1, 2), (1, 2)), [1, 2])
    assert canonical_form(rebuilt, [1, 2]) == canonical_form(last_value, [1, 2])


def test_enumeration_counts_isomorphism_classes():
    assert len(list(enumerate_attackers([0, 1], 1))) == 1
    two_states = list(enumerate_attackers([0, 1], 2))
    assert len(two_states) == 13
    forms = {canonical_form(a, [0, 1]) for a in two_states}
    assert len(forms) == 13
