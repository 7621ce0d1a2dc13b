"""Simulation and estimation toolkit for a N00N-state rotation sensor built from opposed spiral phase plates."""

__version__ = "0.1.0"
