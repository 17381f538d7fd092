"""Variable-cell-length traffic signal control workbench."""

from .partition import CellLayout, PartitionSpec, cell_index_of, cell_lengths, rounded_layout, solve_coefficients

__version__ = "0.1.0"

__all__ = [
    "CellLayout",
    "PartitionSpec",
    "cell_index_of",
    "cell_lengths",
    "rounded_layout",
    "solve_coefficients",
]
