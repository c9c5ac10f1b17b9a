"""Finite-difference laboratory for partial-data inverse Schrodinger problems."""

from .grid import BoxDomain, Grid, build_grid, carve_regions, make_patch, smooth_window

__version__ = "0.1.0"

__all__ = ["BoxDomain", "Grid", "build_grid", "carve_regions", "make_patch", "smooth_window"]
