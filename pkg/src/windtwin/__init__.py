"""Wind-farm power forecasting: physics-based and data-driven models scored per lead time."""

__version__ = "0.1.0"
