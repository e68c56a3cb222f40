"""Geometric multigrid for the lowest-order virtual element method on
polygonal meshes, with agglomeration-based coarsening and Krylov baselines."""

__version__ = "0.1.0"
