"""Aggregate token log-probabilities from a causal language model into
word-level surprisal (in bits).

A word split into k tokens starting at token f gets

    surprisal = -sum(log2 p(token_j | token_<j) for j in f .. f+k-1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import AlignmentMismatch, InputError

BASES = {"2": 1.0, "e": 1.0 / math.log(2.0), "10": math.log2(10.0)}

# leading word-boundary markers used by SentencePiece and byte-level BPE
DEFAULT_MARKERS = ("▁", "Ġ", "Ċ")


@dataclass(frozen=True)
class TokenLogProb:
    token: str
    logprob: float
    base: str = "2"


@dataclass(frozen=True)
class WordAlignment:
    """Per word, the first token index and the number of tokens."""

    spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.spans)

    @property
    def n_tokens(self) -> int:
        return sum(k for _, k in self.spans)


def default_normalizer(token: str, markers: Sequence[str] = DEFAULT_MARKERS) -> str:
    t = token
    while True:
        for m in markers:
            if t.startswith(m):
                t = t[len(m):]
                break
        else:
            break
    return t.strip()


def align(
    words: Sequence[str],
    tokens: Sequence[str],
    normalizer: Callable[[str], str] = default_normalizer,
) -> WordAlignment:
    """Assign contiguous token spans to words, greedily left to right.

    Tokens that normalize to the empty string are absorbed into the word
    that is being built (or the last word, at the end of the stream).
    """
    spans = []
    t = 0
    n = len(tokens)
    for wi, word in enumerate(words):
        target = word.strip()
        start = t
        built = ""
        while built != target:
            if t >= n:
                raise AlignmentMismatch(wi, target[len(built):] if target.startswith(built) else built)
            piece = normalizer(tokens[t])
            t += 1
            built += piece
            if not target.startswith(built):
                raise AlignmentMismatch(wi, built[len(_common_prefix(built, target)):])
        # trailing empty tokens (markers only) stay with this word
        while t < n and normalizer(tokens[t]) == "" and (wi == len(words) - 1):
            t += 1
        if t == start:
            raise AlignmentMismatch(wi, target)
        spans.append((start, t - start))
    if t != n:
        rest = "".join(normalizer(x) for x in tokens[t:])
        raise AlignmentMismatch(max(len(words) - 1, 0), rest)
    return WordAlignment(tuple(spans))


def _common_prefix(a: str, b: str) -> str:
    k = 0
    while k < min(len(a), len(b)) and a[k] == b[k]:
        k += 1
    return a[:k]


def to_bits(items: Iterable[TokenLogProb], declared_base: str) -> list[TokenLogProb]:
    """Convert log-probabilities from ``declared_base`` into bits.

    Items must still carry the declared base; converting an already converted
    stream again is rejected.
    """
    if declared_base not in BASES:
        raise InputError(f"unknown log base {declared_base!r}; expected one of {sorted(BASES)}")
    factor = BASES[declared_base]
    out = []
    for i, it in enumerate(items):
        if it.base != declared_base:
            raise InputError(
                f"token {i} is already in base {it.base}; refusing to convert from base {declared_base}"
            )
        _check_logprob(i, it.logprob)
        out.append(TokenLogProb(it.token, it.logprob * factor, "2"))
    return out


def _check_logprob(i: int, lp: float):
    if math.isnan(lp) or lp > 0.0:
        raise InputError(f"token {i}: log-probability {lp} is not <= 0")
    if math.isinf(lp):
        raise InputError(f"token {i}: zero probability")


def word_surprisal(logprobs: Sequence[TokenLogProb], alignment: WordAlignment) -> list[float]:
    if alignment.n_tokens != len(logprobs):
        raise InputError(
            f"alignment covers {alignment.n_tokens} tokens but {len(logprobs)} were given"
        )
    out = []
    for f, k in alignment.spans:
        span = logprobs[f : f + k]
        for j, it in enumerate(span, f):
            if it.base != "2":
                raise InputError(f"token {j} is in base {it.base}; convert to bits first")
            _check_logprob(j, it.logprob)
        out.append(-math.fsum(it.logprob for it in span) + 0.0)
    return out


# ---------------------------------------------------------------------------
# files


def read_token_logprobs(lines: Iterable[str]) -> list[TokenLogProb]:
    """Read ``#base=<e|2|10>`` followed by ``token<TAB>logprob`` lines.

    The result is converted to bits.
    """
    it = iter(lines)
    base = None
    raw = []
    for lineno, line in enumerate(it, 1):
        line = line.rstrip("\n")
        if base is None:
            if not line.strip():
                continue
            if not line.startswith("#base="):
                raise InputError("token file must start with a '#base=' header")
            base = line[len("#base="):].strip()
            if base not in BASES:
                raise InputError(f"unknown log base {base!r}")
            continue
        if not line.strip():
            continue
        token, sep, value = line.rpartition("\t")
        if not sep:
            raise InputError(f"line {lineno}: expected token<TAB>logprob")
        try:
            lp = float(value)
        except ValueError:
            raise InputError(f"line {lineno}: bad log-probability {value!r}") from None
        raw.append(TokenLogProb(token, lp, base))
    if base is None:
        raise InputError("token file is empty")
    return to_bits(raw, base)


def read_words(lines: Iterable[str]) -> list[str]:
    """Read a word list: one word per line, or a word-events TSV."""
    rows = [ln.rstrip("\n") for ln in lines if ln.strip()]
    if rows and "\t" in rows[0]:
        header = rows[0].split("\t")
        body = rows[1:] if header[0] == "word" else rows
        return [r.split("\t")[0] for r in body]
    return rows
