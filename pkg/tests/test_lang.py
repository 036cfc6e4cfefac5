import pytest
from hypothesis import given
from strategies import commands, expressions

from flowcheck.errors import DuplicatePointError, ParseError
from flowcheck.lang import (
    Assign,
    BinOp,
    ChannelPoint,
    Directive,
    If,
    Lit,
    Out,
    Seq,
    Skip,
    UnOp,
    Var,
    While,
    channels,
    erase_directives,
    flatten,
    fv,
    parse_expression,
    parse_program,
    points,
    pretty,
    pretty_expr,
    program_digest,
    program_variables,
    seq,
)

FLOW_SENSITIVE = "x := z + 1; z := x; if (z > 0) { y := 1 }; x := 0"


def test_skip():
    assert parse_program("skip") == Skip()


def test_explicit_points():
    c = parse_program("out x on a @ p1; out 2 on a @ p2")
    assert c == Seq(Out(Var("x"), "a", "p1"), Out(Lit(2), "a", "p2"))


def test_flow_sensitive_program_has_four_statements():
    items = flatten(parse_program(FLOW_SENSITIVE))
    assert len(items) == 4
    assert items[0] == Assign("x", BinOp("+", Var("z"), Lit(1)))
    assert items[2] == If(BinOp(">", Var("z"), Lit(0)), Assign("y", Lit(1)), Skip())


def test_points_are_numbered_in_source_order():
    c = parse_program("out 1 on a; if (x) { out 2 on b } else { out 3 on a }")
    assert [out.point for out in flatten(c)[:1]] == ["p1"]
    assert points(c) == {
        ChannelPoint("a", "p1"),
        ChannelPoint("b", "p2"),
        ChannelPoint("a", "p3"),
    }


def test_automatic_points_skip_explicit_names():
    c = parse_program("out 1 on a; out 2 on a @ p1")
    assert points(c) == {ChannelPoint("a", "p2"), ChannelPoint("a", "p1")}


def test_shared_point_on_one_channel_is_allowed():
    c = parse_program("out 1 on a @ q; out 2 on a @ q")
    assert points(c) == {ChannelPoint("a", "q")}


def test_point_on_two_channels_is_rejected():
    with pytest.raises(DuplicatePointError) as info:
        parse_program("out 1 on a @ q;\nout 2 on b @ q")
    assert info.value.line == 2


@pytest.mark.parametrize(
    "source",
    ["x := ", "if x { skip }", "out 1 a", "while (x) skip", "x := 1 +* 2", "x = 1"],
)
def test_syntax_errors(source):
    with pytest.raises(ParseError):
        parse_program(source)


def test_syntax_error_position():
    with pytest.raises(ParseError) as info:
        parse_program("skip;\nx := $")
    assert (info.value.line, info.value.column) == (2, 6)


def test_comments_and_trailing_semicolon():
    assert parse_program("// nothing\nskip; // still nothing\n") == Skip()


def test_directives():
    c = parse_program("allow x + y -> a; revoke x -> b")
    assert c == Seq(
        Directive("allow", BinOp("+", Var("x"), Var("y")), "a"),
        Directive("revoke", Var("x"), "b"),
    )


def test_booleans_are_integers():
    assert parse_expression("true") == Lit(1)
    assert parse_expression("false") == Lit(0)


@pytest.mark.parametrize(
    "text, tree",
    [
        ("1 + 2 * 3", BinOp("+", Lit(1), BinOp("*", Lit(2), Lit(3)))),
        ("1 - 2 - 3", BinOp("-", BinOp("-", Lit(1), Lit(2)), Lit(3))),
        ("x < 1 == y", BinOp("==", BinOp("<", Var("x"), Lit(1)), Var("y"))),
        ("a || b && c", BinOp("||", Var("a"), BinOp("&&", Var("b"), Var("c")))),
        ("-3", Lit(-3)),
        ("-x", UnOp("-", Var("x"))),
        ("!(x > 0)", UnOp("!", BinOp(">", Var("x"), Lit(0)))),
    ],
)
def test_precedence(text, tree):
    assert parse_expression(text) == tree


def test_fv():
    assert fv(Lit(5)) == frozenset()
    assert fv(Var("x")) == {"x"}
    assert fv(parse_expression("z + 1")) == {"z"}


@given(expressions)
def test_fv_covers_subexpressions(e):
    if isinstance(e, BinOp):
        assert fv(e.left) <= fv(e) and fv(e.right) <= fv(e)
    elif isinstance(e, UnOp):
        assert fv(e.operand) == fv(e)


@given(expressions)
def test_expression_round_trip(e):
    assert parse_expression(pretty_expr(e)) == e


@given(commands())
def test_program_round_trip(c):
    assert parse_program(pretty(c)) == c


def test_pretty_prints_left_nested_sequences_as_blocks():
    c = Seq(Seq(Skip(), Assign("x", Lit(1))), Out(Var("x"), "a", "p1"))
    text = pretty(c)
    assert text.startswith("{\n")
    assert parse_program(text) == c


def test_digest_ignores_layout():
    spaced = "x := z+1;\n\n   z := x; // copy\nif (z > 0) {y := 1} ; x := 0"
    assert program_digest(parse_program(FLOW_SENSITIVE)) == program_digest(parse_program(spaced))
    assert program_digest(parse_program(FLOW_SENSITIVE)) != program_digest(parse_program("skip"))


def test_queries():
    c = parse_program("allow w -> a; x := y; while (z) { out x on a }; out 1 on b")
    assert program_variables(c) == {"w", "x", "y", "z"}
    assert program_variables(c, include_directives=False) == {"x", "y", "z"}
    assert channels(c) == {"a", "b"}


def test_erase_directives_keeps_step_count():
    c = parse_program("allow x -> a; out x on a")
    assert erase_directives(c) == Seq(Seq(Skip(), Skip()), Out(Var("x"), "a", "p1"))


def test_seq_and_flatten():
    items = [Assign("x", Lit(i)) for i in range(4)]
    assert flatten(seq(*items)) == items
    assert seq() == Skip()


def test_long_programs_do_not_recurse():
    source = ";\n".join(f"x := x + {i}" for i in range(5000))
    c = parse_program(source)
    assert len(flatten(c)) == 5000
    assert flatten(parse_program(pretty(c))) == flatten(c)


def test_while_round_trip():
    c = parse_program("while (x > 0) { x := x - 1; out x on a }")
    assert isinstance(c, While)
    assert parse_program(pretty(c)) == c
