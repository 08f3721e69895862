"""Size-controlling critical values for heteroskedasticity-robust tests."""

__version__ = "0.1.0"
