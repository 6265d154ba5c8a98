"""Headless batch rendering of voxlab analysis CSV exports."""

from .csvio import CSVContractError, Table, read_table, require_columns
from .render import (CONTRACTS, DEFAULT_INPUTS, KINDS, FigureSpec,
                     build_figure, render, render_all)

__all__ = [
    "CONTRACTS",
    "CSVContractError",
    "DEFAULT_INPUTS",
    "FigureSpec",
    "KINDS",
    "Table",
    "build_figure",
    "read_table",
    "render",
    "render_all",
    "require_columns",
]
