"""Free-boundary geodesics via discrete curve shortening and min-max sweepouts."""

__version__ = "0.1.0"
