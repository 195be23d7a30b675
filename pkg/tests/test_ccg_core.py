import numpy as np
import pytest

from parse_effort.ccg import (
    App,
    Atom,
    Const,
    Lam,
    Rule,
    Var,
    alpha_equal,
    beta_normalize,
    build,
    bwd,
    combine,
    fwd,
    is_right_adjunct,
    leaf,
    matches,
    parse_category,
    parse_derivation,
    read_derivations,
    semantics,
    to_sexpr,
    validate,
)
from parse_effort.errors import CategorySyntaxError, EmptyCategory, InputError, RuleMismatch

from oracles import random_category, random_derivation

S, NP, N = Atom("S"), Atom("NP"), Atom("N")
VP = bwd(S, NP)
TV = fwd(VP, NP)


# -- categories --------------------------------------------------------------


@pytest.mark.parametrize("text", [r"S", r"(S\NP)/NP", r"((S\NP)\(S\NP))/NP", r"S[dcl]\NP", r"N/N"])
def test_category_round_trip(text):
    assert str(parse_category(text)) == text


def test_slashes_associate_left():
    assert parse_category(r"S\NP/NP") == TV


def test_features_kept_but_ignored_by_default():
    c = parse_category(r"S[dcl]\NP")
    assert c.result == Atom("S", "dcl")
    assert matches(c, VP)
    assert not matches(c, VP, strict=True)


def test_category_errors():
    with pytest.raises(EmptyCategory):
        parse_category("  ")
    with pytest.raises(CategorySyntaxError) as info:
        parse_category(r"(S\NP")
    assert info.value.offset == 5
    with pytest.raises(CategorySyntaxError):
        parse_category("S/")
    with pytest.raises(CategorySyntaxError):
        parse_category("S)")


def test_random_category_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(500):
        c = random_category(rng, 5)
        assert parse_category(str(c)) == c


def test_right_adjunct_shape():
    assert is_right_adjunct(bwd(VP, VP))
    assert not is_right_adjunct(fwd(VP, VP))
    assert not is_right_adjunct(VP)


# -- combinators -------------------------------------------------------------


def test_application():
    assert combine(Rule.FA, TV, NP) == VP
    assert combine(Rule.BA, NP, VP) == S


def test_composition_schemas():
    rng = np.random.default_rng(5)
    for _ in range(200):
        x, y, z = (random_category(rng, 2) for _ in range(3))
        assert combine(Rule.FC, fwd(x, y), fwd(y, z)) == fwd(x, z)
        assert combine(Rule.BC, bwd(y, z), bwd(x, y)) == bwd(x, z)
        assert combine(Rule.BX, fwd(y, z), bwd(x, y)) == fwd(x, z)
        t = random_category(rng, 1)
        raised = combine(Rule.FT, x, raise_to=t)
        assert raised == fwd(t, bwd(t, x))
        assert combine(Rule.BT, x, raise_to=t) == bwd(t, fwd(t, x))
        # raised subject composes with a functor seeking it
        assert combine(Rule.FC, raised, fwd(bwd(t, x), y)) == fwd(t, y)


def test_combinator_mismatch():
    with pytest.raises(RuleMismatch):
        combine(Rule.FA, NP, NP)
    with pytest.raises(RuleMismatch):
        combine(Rule.BA, VP, NP)
    with pytest.raises(RuleMismatch):
        combine(Rule.FA, TV)
    with pytest.raises(RuleMismatch):
        combine(Rule.FT, NP)


def test_type_change_table():
    table = {"nb": (N, NP)}
    assert combine(Rule.TC, N, tc_id="nb", type_changes=table) == NP
    with pytest.raises(RuleMismatch):
        combine(Rule.TC, N, tc_id="nb")


# -- derivations -------------------------------------------------------------


def test_figure_derivations_validate(fig_right, fig_left):
    assert validate(fig_right) is fig_right
    assert validate(fig_left) is fig_left


def test_leaf_only_validates():
    validate(leaf("Mary", "NP"))


def test_rule_mismatch_at_root():
    d = parse_derivation('(b fa "S" (lex "NP" a) (lex "NP" b))')
    with pytest.raises(RuleMismatch) as info:
        validate(d)
    assert info.value.path == ()
    assert "root" in str(info.value)


def test_rule_mismatch_path():
    d = parse_derivation(r'(b ba "S" (lex "NP" a) (b fa "S\NP" (lex "(S\NP)/NP" b) (lex "N" c)))')
    with pytest.raises(RuleMismatch) as info:
        validate(d)
    assert info.value.path == (1,)


def test_wrong_node_category():
    d = parse_derivation(r'(b ba "NP" (lex "NP" a) (lex "S\NP" b))')
    with pytest.raises(RuleMismatch):
        validate(d)


def test_strict_features():
    d = parse_derivation(r'(b ba "S" (lex "NP[nb]" a) (lex "S\NP" b))')
    validate(d)
    with pytest.raises(RuleMismatch):
        validate(d, strict=True)


def test_sexpr_round_trip(fig_left, fig_adjunct):
    for d in (fig_left, fig_adjunct):
        assert parse_derivation(to_sexpr(d)) == d


def test_sexpr_errors():
    with pytest.raises(InputError):
        parse_derivation('(b zz "S" (lex "NP" a) (lex "S\\NP" b))')
    with pytest.raises(InputError):
        parse_derivation('(lex "NP" a) extra')
    with pytest.raises(InputError):
        parse_derivation('(u fa "S" (lex "S" a))')
    with pytest.raises(InputError, match="line 2"):
        list(read_derivations(["(lex \"NP\" a)\n", "(lex \"NP\"\n"]))


def test_quoted_words_round_trip():
    d = leaf("New York", "NP")
    assert parse_derivation(to_sexpr(d)) == d


# -- semantics -----------------------------------------------------------------


def test_figure_semantics(fig_right, fig_left):
    expected = App(App(Const("reads'"), Const("mary'")), Const("papers'"))
    assert alpha_equal(semantics(fig_right), expected)
    assert alpha_equal(semantics(fig_left), expected)
    assert str(semantics(fig_left)) == "reads'(mary', papers')"


def test_adjunct_semantics(fig_adjunct):
    assert str(semantics(fig_adjunct)) == "daily'(mary', λx.reads'(x, papers'))"


def test_built_derivation_semantics():
    mary, reads, papers = leaf("Mary", NP), leaf("reads", TV), leaf("papers", NP)
    d = build("fa", build("fc", build("ft", mary, raise_to=S), reads), papers)
    assert str(d.category) == "S"
    assert str(semantics(d)) == "reads'(mary', papers')"


def test_beta_normalize_and_alpha():
    ident_x = Lam("x", Var("x"))
    ident_y = Lam("y", Var("y"))
    assert alpha_equal(ident_x, ident_y)
    assert not alpha_equal(Lam("x", Lam("y", Var("x"))), Lam("x", Lam("y", Var("y"))))
    t = App(Lam("x", App(Const("f"), Var("x"))), Const("a"))
    assert beta_normalize(t) == App(Const("f"), Const("a"))


def test_capture_avoidance():
    # (λx.λy.x) y  ->  λz.y  (the free y must not be captured)
    t = App(Lam("x", Lam("y", Var("x"))), Var("y"))
    nf = beta_normalize(t)
    assert isinstance(nf, Lam) and nf.body == Var("y") and nf.var != "y"


def test_random_derivations_validate():
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = random_derivation(rng, max_depth=int(rng.integers(1, 7)))
        validate(d)
        semantics(d)
