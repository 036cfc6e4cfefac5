from conftest import load_program
from hypothesis import given
from strategies import commands

from flowcheck.explain import explain_point, traced_infer
from flowcheck.lang import ChannelPoint, parse_program, points
from flowcheck.policy import EquivSpec
from flowcheck.typesystem import ProgVar, infer, restrict_to_pvars

P3 = ChannelPoint("a", "p3")


def test_chain_leads_through_the_branch():
    explanation = explain_point(load_program("revoke_on_x.while"), P3)
    [dependency] = explanation.dependencies
    assert dependency.variable == "x"
    assert dependency.chain == ["if (x > 0)", "out 1 on a @ p2", "out 2 on a @ p3"]
    assert dependency.allowed is None


def test_allowed_marks():
    c = load_program("revoke_on_x.while")
    assert explain_point(c, P3, EquivSpec.of("y")).dependencies[0].allowed is False
    assert explain_point(c, P3, EquivSpec.of("x", "y")).dependencies[0].allowed is True
    # x + y might still pin x on some universe
    assert explain_point(c, P3, EquivSpec.of("x + y")).dependencies[0].allowed is None


def test_render():
    c = load_program("revoke_on_x.while")
    text = explain_point(c, P3, EquivSpec.of("y")).render()
    assert text.startswith("a@p3 depends on:")
    assert "x (not allowed)" in text
    assert "allowed at a@p3: {y}" in text
    quiet = explain_point(parse_program("out 1 on a"), ChannelPoint("a", "p1"))
    assert quiet.render() == "a@p1 depends on no program variable"


def test_overwritten_assignments_drop_out():
    c = parse_program("y := x; z := y; z := x; out z on a")
    [dependency] = explain_point(c, ChannelPoint("a", "p1")).dependencies
    assert dependency.chain == ["z := x", "out z on a @ p1"]


@given(commands(max_depth=2))
def test_explanations_cover_the_typing(c):
    g = restrict_to_pvars(infer(c))
    for point in points(c):
        named = {dep.variable for dep in explain_point(c, point).dependencies}
        assert named == g(point)


def test_traced_loops_reach_a_fixpoint():
    env = traced_infer(parse_program("while (w) { x := y; y := z }"))
    assert set(env(ProgVar("x"))) >= {ProgVar("z"), ProgVar("w")}
