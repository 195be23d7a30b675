"""Exception types shared across the package.

Every error raised for bad input derives from :class:`InputError` so the CLI
can map it to exit code 2; numerical failures derive from
:class:`NumericalError` (exit code 3).
"""

from __future__ import annotations


class ParseEffortError(Exception):
    """Base class for all package errors."""


class InputError(ParseEffortError):
    """Malformed or inconsistent input."""


class NumericalError(ParseEffortError):
    """A computation could not be completed numerically."""


class TreeSyntaxError(InputError):
    """Bracketed-tree text could not be parsed.

    ``offset`` is the 0-based character position where the problem was found.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnbalancedBrackets(TreeSyntaxError):
    pass


class EmptyNode(TreeSyntaxError):
    pass


class TrailingInput(TreeSyntaxError):
    pass


class CategorySyntaxError(InputError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EmptyCategory(CategorySyntaxError):
    def __init__(self, offset: int = 0):
        super().__init__("empty category", offset)


class RuleMismatch(InputError):
    """A combinator was applied to categories that do not fit its schema."""

    def __init__(self, expected: str, got: str, path: tuple[int, ...] = ()):
        where = "root" if not path else "/".join(map(str, path))
        super().__init__(f"rule mismatch at {where}: expected {expected}, got {got}")
        self.expected = expected
        self.got = got
        self.path = path


class NotRotatable(InputError):
    def __init__(self, path: tuple[int, ...]):
        super().__init__(f"no rewrite available at node {'/'.join(map(str, path)) or 'root'}")
        self.path = path


class RevealTargetMissing(InputError):
    def __init__(self, word_index: int, category: str):
        super().__init__(
            f"word {word_index}: no right-edge constituent of category {category} to reveal"
        )
        self.word_index = word_index


class AlignmentMismatch(InputError):
    def __init__(self, word_index: int, residual: str):
        super().__init__(f"cannot align word {word_index}: residual text {residual!r}")
        self.word_index = word_index
        self.residual = residual


class LengthMismatch(InputError):
    pass


class InvalidParams(InputError):
    pass


class EmptyKernel(InputError):
    pass


class ZeroVariance(NumericalError):
    def __init__(self, where: str):
        super().__init__(f"zero variance in {where}")
        self.where = where


class RankDeficientBasis(NumericalError):
    pass


class SingularDesign(NumericalError):
    pass


class DimensionMismatch(InputError):
    pass


class UnknownTerm(InputError):
    def __init__(self, term: str):
        super().__init__(f"unknown term {term!r}")
        self.term = term


class DrawCountMismatch(InputError):
    pass


class CollinearityError(InputError):
    """A flagged high-correlation pair has no configured resolution."""

    def __init__(self, a: str, b: str, r: float):
        super().__init__(
            f"columns {a!r} and {b!r} correlate at r={r:.4f}; "
            "add one of them to the drop priority list"
        )
        self.pair = (a, b)
        self.r = r
