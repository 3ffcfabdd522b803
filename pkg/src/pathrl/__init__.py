"""Verifiable rewards, GRPO and evaluation statistics for structured-output models."""

__version__ = "0.1.0"
