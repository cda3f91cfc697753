"""Distribution equivalence and l0-penalized structure learning for linear
Gaussian directed graphs, cyclic or acyclic."""

__version__ = "0.1.0"
