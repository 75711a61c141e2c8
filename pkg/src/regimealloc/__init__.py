"""Regime-switching asset allocation: jump-model regime labels, boosted-tree
regime forecasts, and cost-aware mean-variance portfolio construction."""

from regimealloc.errors import ConfigError, DataError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericalError", "__version__"]
