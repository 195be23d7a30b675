"""Untyped lambda terms with beta normalization and alpha-equivalence.

Terms are built with named variables. Normalization converts to de Bruijn
indices, reduces in normal order, and converts back with canonical variable
names, so two alpha-equivalent inputs normalize to identical objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Lam:
    var: str
    body: "Term"

    def __str__(self) -> str:
        return f"λ{self.var}.{self.body}"


@dataclass(frozen=True)
class App:
    fun: "Term"
    arg: "Term"

    def __str__(self) -> str:
        head, args = _spine(self)
        h = f"({head})" if isinstance(head, Lam) else str(head)
        return f"{h}({', '.join(str(a) for a in args)})"


Term = Union[Var, Const, Lam, App]


def _spine(t: Term) -> tuple[Term, list[Term]]:
    args = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fun
    return t, args[::-1]


def apply(f: Term, *args: Term) -> Term:
    for a in args:
        f = App(f, a)
    return f


# ---------------------------------------------------------------------------
# de Bruijn representation


@dataclass(frozen=True)
class _Idx:
    i: int


@dataclass(frozen=True)
class _Free:
    name: str


@dataclass(frozen=True)
class _DLam:
    body: object


@dataclass(frozen=True)
class _DApp:
    fun: object
    arg: object


def _to_db(t: Term, env: tuple[str, ...] = ()):
    if isinstance(t, Var):
        for depth, name in enumerate(reversed(env)):
            if name == t.name:
                return _Idx(depth)
        return _Free(t.name)
    if isinstance(t, Const):
        return t
    if isinstance(t, Lam):
        return _DLam(_to_db(t.body, env + (t.var,)))
    return _DApp(_to_db(t.fun, env), _to_db(t.arg, env))


def _shift(t, d: int, cutoff: int = 0):
    if isinstance(t, _Idx):
        return _Idx(t.i + d) if t.i >= cutoff else t
    if isinstance(t, _DLam):
        return _DLam(_shift(t.body, d, cutoff + 1))
    if isinstance(t, _DApp):
        return _DApp(_shift(t.fun, d, cutoff), _shift(t.arg, d, cutoff))
    return t


def _subst(t, j: int, s):
    if isinstance(t, _Idx):
        return s if t.i == j else t
    if isinstance(t, _DLam):
        return _DLam(_subst(t.body, j + 1, _shift(s, 1)))
    if isinstance(t, _DApp):
        return _DApp(_subst(t.fun, j, s), _subst(t.arg, j, s))
    return t


def _beta(body, arg):
    return _shift(_subst(body, 0, _shift(arg, 1)), -1)


def _whnf(t):
    while isinstance(t, _DApp):
        f = _whnf(t.fun)
        if isinstance(f, _DLam):
            t = _beta(f.body, t.arg)
            continue
        return _DApp(f, t.arg)
    return t


def _nf(t):
    t = _whnf(t)
    if isinstance(t, _DLam):
        return _DLam(_nf(t.body))
    if isinstance(t, _DApp):
        return _DApp(_nf(t.fun), _nf(t.arg))
    return t


_NAMES = "xyzpqrstuvw"


def _free_names(t, acc: set[str]) -> set[str]:
    if isinstance(t, _Free):
        acc.add(t.name)
    elif isinstance(t, _DLam):
        _free_names(t.body, acc)
    elif isinstance(t, _DApp):
        _free_names(t.fun, acc)
        _free_names(t.arg, acc)
    return acc


def _fresh(k: int) -> str:
    base = _NAMES[k % len(_NAMES)]
    return base if k < len(_NAMES) else f"{base}{k // len(_NAMES)}"


def _from_db(t, env: tuple[str, ...] = (), avoid: frozenset[str] = frozenset()) -> Term:
    if isinstance(t, _Idx):
        return Var(env[-1 - t.i])
    if isinstance(t, _Free):
        return Var(t.name)
    if isinstance(t, Const):
        return t
    if isinstance(t, _DLam):
        k = len(env)
        while _fresh(k) in avoid:
            k += 1
        name = _fresh(k)
        return Lam(name, _from_db(t.body, env + (name,), avoid | {name}))
    return App(_from_db(t.fun, env, avoid), _from_db(t.arg, env, avoid))


def beta_normalize(t: Term) -> Term:
    """Return the beta-normal form with canonically named bound variables.

    Terms produced from CCG derivations are simply typed, so this terminates.
    """
    nf = _nf(_to_db(t))
    return _from_db(nf, (), frozenset(_free_names(nf, set())))


def alpha_equal(a: Term, b: Term) -> bool:
    return _to_db(a) == _to_db(b)
