"""Structure-aware superquadric shape abstraction.

Convert a watertight mesh or signed-distance grid into a compact set of
superquadric primitives, evaluate the result, and refine regions on demand.
"""

from .errors import (
    DegenerateRegion,
    DegenerateWeights,
    EmptyMesh,
    EmptyNeighborhood,
    EmptyUnion,
    LightSqError,
    MalformedFile,
    NonWatertightMesh,
    NotAdjacent,
    ResolutionMismatch,
    UnknownPrimitive,
)
from .fitter import FitConfig, FitResult, fit_one
from .grid import TsdfGrid, UpdateHistory, VoxelComponent, carve, load_grid, save_grid
from .metrics import MetricReport, evaluate
from .pipeline import (
    Abstraction,
    LabeledSuperquadric,
    PruneConfig,
    multiscale_refine,
    run,
)
from .superquadric import Superquadric

__all__ = [
    "Abstraction",
    "DegenerateRegion",
    "DegenerateWeights",
    "EmptyMesh",
    "EmptyNeighborhood",
    "EmptyUnion",
    "FitConfig",
    "FitResult",
    "LabeledSuperquadric",
    "LightSqError",
    "MalformedFile",
    "MetricReport",
    "NonWatertightMesh",
    "NotAdjacent",
    "PruneConfig",
    "ResolutionMismatch",
    "Superquadric",
    "TsdfGrid",
    "UnknownPrimitive",
    "UpdateHistory",
    "VoxelComponent",
    "carve",
    "evaluate",
    "fit_one",
    "load_grid",
    "multiscale_refine",
    "run",
    "save_grid",
]
__version__ = "0.1.0"
