"""Random forests with subsampling and leaf-budget pruning, median forests,
and the risk-bound calculator that goes with them."""

__version__ = "0.1.0"
