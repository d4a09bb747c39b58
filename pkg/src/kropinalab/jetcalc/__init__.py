"""Expression DSL and truncated Taylor-jet automatic differentiation."""

from .expr import (FUNCTIONS, Call, DomainError, Expr, Neg, Num, ParseError, Pow,
                   Product, Sum, Var, as_expr, depth, eval_jet, evaluate, parse,
                   to_source, variables)
from .jet import Jet, JetSpace, make_space, x_space

__all__ = [
    "FUNCTIONS", "Call", "DomainError", "Expr", "Jet", "JetSpace", "Neg", "Num",
    "ParseError", "Pow", "Product", "Sum", "Var", "as_expr", "depth", "eval_jet",
    "evaluate", "make_space", "parse", "to_source", "variables", "x_space",
]
