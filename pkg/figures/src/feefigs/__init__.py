"""Figure rendering for fee-competition experiment CSVs."""

__version__ = "0.1.0"

from .render import FIGURES, render

__all__ = ["FIGURES", "render", "__version__"]
