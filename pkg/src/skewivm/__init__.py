"""Skew-aware incremental view maintenance for hierarchical conjunctive
queries, with a preprocessing/update/delay trade-off parameterized by
epsilon."""

from .engine import EngineState, preprocess
from .enumeration import ResultIterator
from .metrics import Counters
from .oracle import brute_force_eval, brute_force_widths
from .query import (
    Atom,
    ConjunctiveQuery,
    connected_components,
    delta_index,
    is_free_connex,
    is_hierarchical,
    is_q_hierarchical,
    parse_query,
)
from .vorder import (
    VariableOrder,
    canonical_vo,
    dynamic_width,
    free_top,
    integral_edge_cover,
    kappa_measure,
    static_width,
    xi_measure,
)

__all__ = [
    "Atom",
    "ConjunctiveQuery",
    "Counters",
    "EngineState",
    "ResultIterator",
    "VariableOrder",
    "brute_force_eval",
    "brute_force_widths",
    "canonical_vo",
    "connected_components",
    "delta_index",
    "dynamic_width",
    "free_top",
    "integral_edge_cover",
    "is_free_connex",
    "is_hierarchical",
    "is_q_hierarchical",
    "kappa_measure",
    "parse_query",
    "preprocess",
    "static_width",
    "xi_measure",
]
