"""Uniform T-sparse correlated equilibria: constructions, dynamics,
verification, and lemma validators for two-player normal-form games."""

__version__ = "0.1.0"
