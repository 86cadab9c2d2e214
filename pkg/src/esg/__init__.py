"""Versioned submit/poll/fetch web services for long-running forecasting code."""

__version__ = "0.1.0"
