"""Combinatory categorial grammar: categories, derivations and strategies."""

from .categories import (
    BACKWARD,
    FORWARD,
    Atom,
    Category,
    Functor,
    Rule,
    bwd,
    combine,
    fwd,
    is_right_adjunct,
    matches,
    parse_category,
    strip_features,
)
from .derivation import (
    Derivation,
    build,
    leaf,
    parse_derivation,
    read_derivations,
    semantics,
    to_sexpr,
    type_raise,
    validate,
)
from .lambdas import App, Const, Lam, Var, alpha_equal, beta_normalize
from .strategies import (
    STRATEGIES,
    RevealConfig,
    reveal_simulation,
    rotate_to_right,
    steps_ccg,
    to_left_branching,
)
