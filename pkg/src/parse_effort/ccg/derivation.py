"""CCG derivation trees: validation, semantics and the s-expression format.

File format, one derivation per line::

    (lex "CAT" word)
    (u RULE "CAT" child)
    (b RULE "CAT" left right)

with RULE one of fa, ba, fc, bc, bx, ft, bt, tc:<id>.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from ..errors import InputError, RuleMismatch
from .categories import (
    Category,
    Rule,
    TypeChangeTable,
    arity,
    combine,
    matches,
    parse_category,
    raise_target,
)
from .lambdas import App, Const, Lam, Term, Var, apply, beta_normalize


@dataclass(frozen=True)
class Derivation:
    category: Category
    rule: Rule = Rule.LEX
    children: tuple["Derivation", ...] = ()
    word: str | None = None
    tc_id: str | None = None

    def __post_init__(self):
        if self.rule is Rule.LEX:
            if self.children or self.word is None:
                raise ValueError("a lexical node has a word and no children")
        elif len(self.children) != (2 if self.rule.is_binary else 1):
            raise ValueError(f"{self.rule.value} node with {len(self.children)} children")

    @property
    def is_leaf(self) -> bool:
        return self.rule is Rule.LEX

    @property
    def left(self) -> "Derivation":
        return self.children[0]

    @property
    def right(self) -> "Derivation":
        return self.children[-1]

    def words(self) -> list[str]:
        return [leaf.word for leaf in self.leaves()]

    def leaves(self) -> Iterator["Derivation"]:
        if self.is_leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()

    def nodes(self) -> Iterator["Derivation"]:
        """Internal (non-lexical) nodes in postorder."""
        for c in self.children:
            yield from c.nodes()
        if not self.is_leaf:
            yield self

    def __str__(self) -> str:
        return to_sexpr(self)


def leaf(word: str, category: Category | str) -> Derivation:
    if isinstance(category, str):
        category = parse_category(category)
    return Derivation(category, Rule.LEX, (), word)


def build(
    rule: Rule | str,
    *children: Derivation,
    raise_to: Category | str | None = None,
    tc_id: str | None = None,
    type_changes: TypeChangeTable | None = None,
) -> Derivation:
    """Create an internal node whose category is computed by the combinator."""
    rule = Rule(rule)
    if isinstance(raise_to, str):
        raise_to = parse_category(raise_to)
    cats = [c.category for c in children]
    cat = combine(rule, *cats, raise_to=raise_to, tc_id=tc_id, type_changes=type_changes)
    return Derivation(cat, rule, tuple(children), None, tc_id)


def type_raise(child: Derivation, target: Category, rule: Rule = Rule.FT) -> Derivation:
    return build(rule, child, raise_to=target)


def validate(
    d: Derivation,
    *,
    strict: bool = False,
    type_changes: TypeChangeTable | None = None,
) -> Derivation:
    """Check every internal node against its combinator.

    Returns ``d`` unchanged. Raises RuleMismatch naming the first offending
    node path (child indices from the root) in preorder.
    """

    def check(node: Derivation, path: tuple[int, ...]):
        if node.is_leaf:
            return
        raise_to = None
        if node.rule in (Rule.FT, Rule.BT):
            raise_to = raise_target(node.rule, node.category)
            if raise_to is None:
                raise RuleMismatch("type-raised category", str(node.category), path)
        try:
            out = combine(
                node.rule,
                *(c.category for c in node.children),
                raise_to=raise_to,
                tc_id=node.tc_id,
                type_changes=type_changes,
                strict=strict,
            )
        except RuleMismatch as exc:
            raise RuleMismatch(exc.expected, exc.got, path) from None
        if not matches(out, node.category, strict):
            raise RuleMismatch(str(out), str(node.category), path)
        for i, c in enumerate(node.children):
            check(c, path + (i,))

    check(d, ())
    return d


# ---------------------------------------------------------------------------
# semantics


def lexical_term(word: str, category: Category) -> Term:
    """λa1...λan. word'(an, ..., a1) for a category taking n arguments.

    For ``reads := (S\\NP)/NP`` this gives λx.λy.reads'(y, x).
    """
    n = arity(category)
    names = [f"a{i}" for i in range(n)]
    body = apply(Const(word.lower() + "'"), *(Var(v) for v in reversed(names)))
    for v in reversed(names):
        body = Lam(v, body)
    return body


def _compose(f: Term, g: Term) -> Term:
    return Lam("c", App(f, App(g, Var("c"))))


def _node_term(node: Derivation, kids: list[Term]) -> Term:
    r = node.rule
    if r is Rule.FA:
        return App(kids[0], kids[1])
    if r is Rule.BA:
        return App(kids[1], kids[0])
    if r is Rule.FC:
        return _compose(kids[0], kids[1])
    if r in (Rule.BC, Rule.BX):
        return _compose(kids[1], kids[0])
    if r in (Rule.FT, Rule.BT):
        return Lam("p", App(Var("p"), kids[0]))
    if r is Rule.TC:
        return App(Const(f"tc:{node.tc_id}"), kids[0])
    raise AssertionError(r)


def semantics(d: Derivation, *, validated: bool = False, **validate_kw) -> Term:
    """Beta-normal lambda term for the derivation."""
    if not validated:
        validate(d, **validate_kw)

    def term(node: Derivation) -> Term:
        if node.is_leaf:
            return lexical_term(node.word, node.category)
        return beta_normalize(_node_term(node, [term(c) for c in node.children]))

    return beta_normalize(term(d))


# ---------------------------------------------------------------------------
# s-expression I/O

_SEXP_RE = re.compile(r'\s*(?:(\()|(\))|"([^"]*)"|([^\s()"]+))')


def _sexp_tokens(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _SEXP_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise InputError(f"unreadable derivation text at offset {pos}")
        if m.group(1):
            out.append(("(", "(", m.start(1)))
        elif m.group(2):
            out.append((")", ")", m.start(2)))
        elif m.group(3) is not None:
            out.append(("str", m.group(3), m.start(3)))
        elif m.group(4):
            out.append(("sym", m.group(4), m.start(4)))
        pos = m.end()
    return out


def _parse_rule(sym: str) -> tuple[Rule, str | None]:
    if sym.startswith("tc:"):
        return Rule.TC, sym[3:]
    try:
        rule = Rule(sym)
    except ValueError:
        raise InputError(f"unknown rule {sym!r}") from None
    if rule in (Rule.LEX, Rule.TC):
        raise InputError(f"rule {sym!r} not allowed here")
    return rule, None


def parse_derivation(text: str) -> Derivation:
    """Read one derivation in the s-expression format (not validated)."""
    toks = _sexp_tokens(text)
    pos = 0

    def expect(kind: str):
        nonlocal pos
        if pos >= len(toks):
            raise InputError(f"derivation ends early, expected {kind}")
        tok = toks[pos]
        if tok[0] != kind and not (kind == "word" and tok[0] in ("sym", "str")):
            raise InputError(f"expected {kind} at offset {tok[2]}, got {tok[1]!r}")
        pos += 1
        return tok[1]

    def node() -> Derivation:
        expect("(")
        head = expect("sym")
        if head == "lex":
            cat = parse_category(expect("str"))
            word = expect("word")
            expect(")")
            return Derivation(cat, Rule.LEX, (), word)
        if head not in ("u", "b"):
            raise InputError(f"unknown node type {head!r}")
        rule, tc_id = _parse_rule(expect("sym"))
        cat = parse_category(expect("str"))
        n = 2 if head == "b" else 1
        if (n == 2) != rule.is_binary:
            raise InputError(f"rule {rule.value} cannot head a {'binary' if n == 2 else 'unary'} node")
        kids = tuple(node() for _ in range(n))
        expect(")")
        return Derivation(cat, rule, kids, None, tc_id)

    d = node()
    if pos != len(toks):
        raise InputError(f"trailing input at offset {toks[pos][2]}")
    return d


def _word_text(word: str) -> str:
    if re.search(r'[\s()"]', word) or not word:
        if '"' in word:
            raise InputError(f"word {word!r} cannot be written")
        return f'"{word}"'
    return word


def to_sexpr(d: Derivation) -> str:
    if d.is_leaf:
        return f'(lex "{d.category}" {_word_text(d.word)})'
    rule = f"tc:{d.tc_id}" if d.rule is Rule.TC else d.rule.value
    kind = "b" if d.rule.is_binary else "u"
    kids = " ".join(to_sexpr(c) for c in d.children)
    return f'({kind} {rule} "{d.category}" {kids})'


def read_derivations(lines) -> Iterator[tuple[int, Derivation]]:
    """Yield (line number, derivation) for non-blank, non-comment lines."""
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            yield lineno, parse_derivation(s)
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
