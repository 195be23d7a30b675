from pathlib import Path

import pytest

from parse_effort.ccg import parse_derivation
from parse_effort.cfg_trees import parse_penn_bracketed

DATA = Path(__file__).parent / "data"

FIG_TREE = "(S (NP Mary) (VP (VP (V reads) (NP papers)) (ADVP daily)))"
FIG_RIGHT = r'(b ba "S" (lex "NP" Mary) (b fa "S\NP" (lex "(S\NP)/NP" reads) (lex "NP" papers)))'
FIG_LEFT = (
    r'(b fa "S" (b fc "S/NP" (u ft "S/(S\NP)" (lex "NP" Mary)) (lex "(S\NP)/NP" reads)) (lex "NP" papers))'
)
FIG_ADJUNCT = (
    r'(b ba "S" (lex "NP" Mary) (b ba "S\NP" (b fa "S\NP" (lex "(S\NP)/NP" reads) (lex "NP" papers))'
    r' (lex "(S\NP)\(S\NP)" daily)))'
)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def fig_tree():
    return parse_penn_bracketed(FIG_TREE)


@pytest.fixture
def fig_right():
    return parse_derivation(FIG_RIGHT)


@pytest.fixture
def fig_left():
    return parse_derivation(FIG_LEFT)


@pytest.fixture
def fig_adjunct():
    return parse_derivation(FIG_ADJUNCT)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    log = config.stash.get(ACCEPTANCE_KEY, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        ok, detail = log[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
