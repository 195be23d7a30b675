"""CCG categories: parsing, printing and combinator schemas."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Union

from ..errors import CategorySyntaxError, EmptyCategory, RuleMismatch

FORWARD = "/"
BACKWARD = "\\"


@dataclass(frozen=True)
class Atom:
    name: str
    feature: str | None = None

    def __str__(self) -> str:
        return self.name if self.feature is None else f"{self.name}[{self.feature}]"


@dataclass(frozen=True)
class Functor:
    result: "Category"
    slash: str
    argument: "Category"

    def __post_init__(self):
        if self.slash not in (FORWARD, BACKWARD):
            raise ValueError(f"bad slash {self.slash!r}")

    def __str__(self) -> str:
        return f"{_wrap(self.result)}{self.slash}{_wrap(self.argument)}"


Category = Union[Atom, Functor]


def _wrap(cat: Category) -> str:
    return f"({cat})" if isinstance(cat, Functor) else str(cat)


def fwd(result: Category, argument: Category) -> Functor:
    return Functor(result, FORWARD, argument)


def bwd(result: Category, argument: Category) -> Functor:
    return Functor(result, BACKWARD, argument)


def strip_features(cat: Category) -> Category:
    if isinstance(cat, Atom):
        return Atom(cat.name)
    return Functor(strip_features(cat.result), cat.slash, strip_features(cat.argument))


def matches(a: Category, b: Category, strict: bool = False) -> bool:
    """Category equality used by the combinators.

    Features are ignored unless ``strict`` is set.
    """
    if strict:
        return a == b
    if isinstance(a, Atom):
        return isinstance(b, Atom) and a.name == b.name
    return (
        isinstance(b, Functor)
        and a.slash == b.slash
        and matches(a.result, b.result)
        and matches(a.argument, b.argument)
    )


def is_right_adjunct(cat: Category, strict: bool = False) -> bool:
    """True for backward functors of shape X\\X."""
    return isinstance(cat, Functor) and cat.slash == BACKWARD and matches(cat.result, cat.argument, strict)


def arity(cat: Category) -> int:
    n = 0
    while isinstance(cat, Functor):
        n += 1
        cat = cat.result
    return n


# ---------------------------------------------------------------------------
# parsing

_SPECIAL = set("()/\\[]")


def parse_category(s: str) -> Category:
    """Parse a category string like ``(S\\NP)/NP`` or ``S[dcl]``.

    Slashes without parentheses associate to the left, so ``S\\NP/NP`` is read
    as ``(S\\NP)/NP``.
    """
    if not s or not s.strip():
        raise EmptyCategory(0)
    pos = 0
    n = len(s)

    def skip_ws():
        nonlocal pos
        while pos < n and s[pos].isspace():
            pos += 1

    def primary() -> Category:
        nonlocal pos
        skip_ws()
        if pos >= n:
            raise CategorySyntaxError("category expected", pos)
        if s[pos] == "(":
            pos += 1
            inner = expr()
            skip_ws()
            if pos >= n or s[pos] != ")":
                raise CategorySyntaxError("')' expected", pos)
            pos += 1
            return inner
        start = pos
        while pos < n and s[pos] not in _SPECIAL and not s[pos].isspace():
            pos += 1
        if pos == start:
            raise CategorySyntaxError(f"unexpected {s[pos]!r}", pos)
        name = s[start:pos]
        feature = None
        if pos < n and s[pos] == "[":
            close = s.find("]", pos)
            if close < 0:
                raise CategorySyntaxError("']' expected", pos)
            feature = s[pos + 1 : close]
            if not feature:
                raise CategorySyntaxError("empty feature", pos)
            pos = close + 1
        return Atom(name, feature)

    def expr() -> Category:
        nonlocal pos
        left = primary()
        while True:
            skip_ws()
            if pos < n and s[pos] in (FORWARD, BACKWARD):
                slash = s[pos]
                pos += 1
                left = Functor(left, slash, primary())
            else:
                return left

    cat = expr()
    skip_ws()
    if pos != n:
        raise CategorySyntaxError(f"unexpected {s[pos]!r}", pos)
    return cat


# ---------------------------------------------------------------------------
# combinators


class Rule(str, enum.Enum):
    LEX = "lex"
    FA = "fa"
    BA = "ba"
    FC = "fc"
    BC = "bc"
    BX = "bx"
    FT = "ft"
    BT = "bt"
    TC = "tc"

    @property
    def is_binary(self) -> bool:
        return self in _BINARY

    @property
    def is_unary(self) -> bool:
        return self in (Rule.FT, Rule.BT, Rule.TC)

    @property
    def op(self) -> str:
        """Operation tag used in step traces."""
        return _OPS[self]


_BINARY = frozenset({Rule.FA, Rule.BA, Rule.FC, Rule.BC, Rule.BX})
_OPS = {
    Rule.LEX: "SHIFT",
    Rule.FA: "APPLY",
    Rule.BA: "APPLY",
    Rule.FC: "COMPOSE",
    Rule.BC: "COMPOSE",
    Rule.BX: "COMPOSE",
    Rule.FT: "TYPERAISE",
    Rule.BT: "TYPERAISE",
    Rule.TC: "TYPECHANGE",
}

RULE_NAMES = {
    Rule.FA: "FwdApply",
    Rule.BA: "BwdApply",
    Rule.FC: "FwdCompose",
    Rule.BC: "BwdCompose",
    Rule.BX: "BwdCrossCompose",
    Rule.FT: "FwdTypeRaise",
    Rule.BT: "BwdTypeRaise",
    Rule.TC: "TypeChange",
}

# unary type-changing table: rule id -> (input, output)
TypeChangeTable = Mapping[str, tuple[Category, Category]]


def _need(ok: bool, expected: str, got: str):
    if not ok:
        raise RuleMismatch(expected, got)


def combine(
    rule: Rule,
    left: Category,
    right: Category | None = None,
    *,
    raise_to: Category | None = None,
    tc_id: str | None = None,
    type_changes: TypeChangeTable | None = None,
    strict: bool = False,
) -> Category:
    """Apply one combinator schema and return the output category.

    Type-raising needs the target ``raise_to`` (the T in T/(T\\X)); type
    changing looks ``tc_id`` up in ``type_changes``.

    Raises:
        RuleMismatch: the inputs do not fit the schema.
    """
    rule = Rule(rule)
    if rule.is_binary:
        if right is None:
            raise RuleMismatch(f"two inputs for {RULE_NAMES[rule]}", "one")
    elif right is not None:
        raise RuleMismatch(f"one input for {RULE_NAMES[rule]}", "two")

    m = lambda a, b: matches(a, b, strict)  # noqa: E731
    got = f"{left} + {right}" if right is not None else str(left)

    if rule is Rule.FA:
        _need(isinstance(left, Functor) and left.slash == FORWARD and m(left.argument, right), "X/Y + Y", got)
        return left.result
    if rule is Rule.BA:
        _need(isinstance(right, Functor) and right.slash == BACKWARD and m(right.argument, left), "Y + X\\Y", got)
        return right.result
    if rule is Rule.FC:
        _need(
            isinstance(left, Functor) and left.slash == FORWARD
            and isinstance(right, Functor) and right.slash == FORWARD
            and m(left.argument, right.result),
            "X/Y + Y/Z", got,
        )
        return fwd(left.result, right.argument)
    if rule is Rule.BC:
        _need(
            isinstance(left, Functor) and left.slash == BACKWARD
            and isinstance(right, Functor) and right.slash == BACKWARD
            and m(right.argument, left.result),
            "Y\\Z + X\\Y", got,
        )
        return bwd(right.result, left.argument)
    if rule is Rule.BX:
        _need(
            isinstance(left, Functor) and left.slash == FORWARD
            and isinstance(right, Functor) and right.slash == BACKWARD
            and m(right.argument, left.result),
            "Y/Z + X\\Y", got,
        )
        return fwd(right.result, left.argument)
    if rule in (Rule.FT, Rule.BT):
        if raise_to is None:
            raise RuleMismatch("type-raise target T", "none")
        if rule is Rule.FT:
            return fwd(raise_to, bwd(raise_to, left))
        return bwd(raise_to, fwd(raise_to, left))
    if rule is Rule.TC:
        table = type_changes or {}
        if tc_id not in table:
            raise RuleMismatch(f"configured type-change rule, one of {sorted(table)}", str(tc_id))
        src, dst = table[tc_id]
        _need(m(src, left), str(src), got)
        return dst
    raise RuleMismatch("a combinator", rule.value)


def raise_target(rule: Rule, raised: Category) -> Category | None:
    """Recover T from a type-raised category T/(T\\X) or T\\(T/X)."""
    want_outer, want_inner = (FORWARD, BACKWARD) if rule is Rule.FT else (BACKWARD, FORWARD)
    if (
        isinstance(raised, Functor)
        and raised.slash == want_outer
        and isinstance(raised.argument, Functor)
        and raised.argument.slash == want_inner
    ):
        return raised.result
    return None
