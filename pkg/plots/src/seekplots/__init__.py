"""Figure rendering for gridseek metrics CSVs."""

from .plot import (KINDS, SchemaError, read_rows, recovery_vs_cost,
                   recovery_vs_measurements, render, timing_summary)

__version__ = "0.1.0"
