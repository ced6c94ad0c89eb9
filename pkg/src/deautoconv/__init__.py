"""Deautoconvolution by tensorial lifting: forward maps, source certificates,
regularized solvers, and convergence-rate diagnostics."""

__version__ = "0.1.0"
