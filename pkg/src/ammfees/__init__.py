"""Dynamic-fee competition between constant-function market makers.

Closed-form equilibrium fee schedules on discrete inventory grids, plus a
seeded Monte Carlo order-flow simulator and the analytics used to compare
fee rules across market structures.
"""

__version__ = "0.1.0"

from .pools import PoolSpec, InventoryGrid, FeeAdjustedQuote, build_grid
from .market import FlowParams, OracleSpec, intensity, sample_oracle
from .solver import GeneratorMatrix, WSurface, build_generator, solve_w

__all__ = [
    "PoolSpec",
    "InventoryGrid",
    "FeeAdjustedQuote",
    "build_grid",
    "FlowParams",
    "OracleSpec",
    "intensity",
    "sample_oracle",
    "GeneratorMatrix",
    "WSurface",
    "build_generator",
    "solve_w",
    "__version__",
]
