import numpy as np
import pytest

from parse_effort.ccg import (
    RevealConfig,
    alpha_equal,
    leaf,
    parse_derivation,
    reveal_simulation,
    rotate_to_right,
    semantics,
    steps_ccg,
    to_left_branching,
    validate,
)
from parse_effort.ccg.strategies import count_nodes, is_adjunction
from parse_effort.synth import sample_sentences

from oracles import random_derivation


def counts(traces):
    return [t.count for t in traces]


def corpus(n, seed):
    rng = np.random.default_rng(seed)
    return [random_derivation(rng, max_depth=int(rng.integers(2, 7))) for _ in range(n)]


@pytest.fixture(scope="module")
def generated():
    return corpus(400, 2024)


# -- figure traces -------------------------------------------------------------


def test_right_branching_counts(fig_right):
    tr = steps_ccg(fig_right, "right")
    assert counts(tr) == [1, 1, 3]
    assert tr[2].ops == ("SHIFT", "APPLY", "APPLY")


def test_left_branching_counts(fig_right):
    tr = steps_ccg(fig_right, "left")
    assert counts(tr) == [2, 2, 2]
    assert [t.ops for t in tr] == [
        ("SHIFT", "TYPERAISE"),
        ("SHIFT", "COMPOSE"),
        ("SHIFT", "APPLY"),
    ]


def test_revealing_trace(fig_adjunct):
    tr = steps_ccg(fig_adjunct, "revealing")
    assert counts(tr) == [2, 2, 3, 2]
    assert [t.ops for t in tr] == [
        ("SHIFT", "TYPERAISE"),
        ("SHIFT", "COMPOSE"),
        ("SHIFT", "APPLY", "ROTATE"),
        ("SHIFT", "REVEAL"),
    ]


def test_revealing_without_rotation_steps(fig_adjunct):
    tr = steps_ccg(fig_adjunct, "revealing", RevealConfig(count_rotation_as_step=False))
    assert counts(tr) == [2, 2, 2, 2]


def test_reveal_attaches_to_reads_papers(fig_adjunct):
    _, stack = reveal_simulation(fig_adjunct)
    assert len(stack) == 1
    final = stack[0]
    validate(final)
    # daily modifies the constituent spanning "reads papers"
    host = [n for n in final.nodes() if n.rule.value == "ba" and n.right.word == "daily"]
    assert len(host) == 1
    assert host[0].left.words() == ["reads", "papers"]
    assert alpha_equal(semantics(final), semantics(fig_adjunct))


def test_left_form_of_right_figure_is_left_figure(fig_right, fig_left):
    assert to_left_branching(fig_right) == fig_left


def test_right_form_of_left_figure_is_right_figure(fig_right, fig_left):
    assert rotate_to_right(fig_left) == fig_right


def test_adjunct_sentence_left_form(fig_adjunct):
    out = to_left_branching(fig_adjunct)
    validate(out)
    assert is_adjunction(out.right) or is_adjunction(out)
    assert alpha_equal(semantics(out), semantics(fig_adjunct))


@pytest.mark.parametrize("strategy", ["right", "left", "revealing"])
def test_one_word_sentence(strategy):
    assert counts(steps_ccg(leaf("Hello", "S"), strategy)) == [1]


def test_leaf_rotations_are_identity():
    w = leaf("Mary", "NP")
    assert rotate_to_right(w) is w
    assert to_left_branching(w) is w


def test_unknown_strategy(fig_right):
    with pytest.raises(ValueError, match="revealing"):
        steps_ccg(fig_right, "sideways")


def test_composition_chain_rotates_right():
    d = parse_derivation(
        r'(b fa "S" (b fc "S/NP" (b fc "S/(S\NP)" (lex "S/S" a) (lex "S/(S\NP)" b))'
        r' (lex "(S\NP)/NP" c)) (lex "NP" d))'
    )
    validate(d)
    r = rotate_to_right(d)
    validate(r)
    assert counts(steps_ccg(d, "right")) == [1, 1, 1, 4]
    assert alpha_equal(semantics(r), semantics(d))


# -- properties on generated derivations ---------------------------------------


def test_semantic_preservation(generated):
    for d in generated:
        s = semantics(d)
        left, right = to_left_branching(d), rotate_to_right(d)
        assert alpha_equal(semantics(left), s), str(d)
        assert alpha_equal(semantics(right), s), str(d)


def test_transforms_preserve_leaves(generated):
    for d in generated:
        want = [(l.word, l.category) for l in d.leaves()]
        for out in (to_left_branching(d), rotate_to_right(d)):
            assert [(l.word, l.category) for l in out.leaves()] == want


def test_idempotence(generated):
    for d in generated:
        left = to_left_branching(d)
        assert to_left_branching(left) == left
        right = rotate_to_right(d)
        assert rotate_to_right(right) == right


def test_count_conservation(generated):
    for d in generated:
        n = len(d.words())
        assert sum(counts(steps_ccg(d, "right"))) == n + count_nodes(rotate_to_right(d))
        assert sum(counts(steps_ccg(d, "left"))) == n + count_nodes(to_left_branching(d))


def test_revealing_matches_left_without_adjuncts(generated):
    seen = 0
    for d in generated:
        if any(is_adjunction(x) for x in d.nodes()):
            continue
        seen += 1
        rev = [tuple(o for o in t.ops if o != "ROTATE") for t in steps_ccg(d, "revealing")]
        assert rev == [t.ops for t in steps_ccg(d, "left")]
    assert seen > 50


def test_revealing_at_least_left(generated):
    with_adjuncts = 0
    for d in generated:
        if any(is_adjunction(x) for x in d.nodes()):
            with_adjuncts += 1
        rev = sum(counts(steps_ccg(d, "revealing")))
        assert rev >= sum(counts(steps_ccg(d, "left")))
    assert with_adjuncts > 50


def test_revealed_structure_is_a_valid_derivation(generated):
    for d in generated:
        tr, stack = reveal_simulation(d)
        assert len(stack) == 1
        validate(stack[0])
        assert stack[0].words() == d.words()
        assert len(tr) == len(d.words())


def test_sample_sentences_reveal_gold_structure():
    trees, ders = sample_sentences()
    assert [t.leaves() for t in trees] == [d.words() for d in ders]
    for d in ders:
        _, stack = reveal_simulation(d)
        assert alpha_equal(semantics(stack[0]), semantics(d))


def test_highest_attachment_option():
    # S\S may attach to the embedded or the matrix S
    d = load_derivations_text(
        r'(b ba "S" (b fa "S" (lex "S/S" that) (lex "S" it)) (lex "S\S" too))'
    )
    low = reveal_simulation(d)[1][0]
    high = reveal_simulation(d, RevealConfig(attach="highest"))[1][0]
    assert alpha_equal(semantics(high), semantics(d))
    assert not alpha_equal(semantics(low), semantics(d))


def load_derivations_text(text):
    d = parse_derivation(text)
    validate(d)
    return d
