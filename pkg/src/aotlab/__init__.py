"""Arrow-of-time correlations: extreme points, symmetries, minimal dimensions and bounds."""

from .core import CorrelationTable, Scenario, StrategyTree, check_aot, tree_to_correlations
from .errors import (
    AotError,
    DomainError,
    ParseError,
    ResourceLimitError,
    StructureError,
    UnsupportedScenarioError,
)
from .mindim import minimal_dimension, synthesize_realization

__all__ = [
    "AotError",
    "CorrelationTable",
    "DomainError",
    "ParseError",
    "ResourceLimitError",
    "Scenario",
    "StrategyTree",
    "StructureError",
    "UnsupportedScenarioError",
    "check_aot",
    "minimal_dimension",
    "synthesize_realization",
    "tree_to_correlations",
]
