"""Numerical toolkit for Bergman projections on radial trees."""

from .tree import (
    BranchingError,
    BranchingSpec,
    MeasureVector,
    RadialTree,
    TreeSizeError,
    build_measure,
    build_tree,
    nu,
    sector_measure,
    sector_measures,
)
from .filtration import DyadicSystem, SimpleAtomicBlock, enumerate_cubes

__version__ = "0.1.0"
