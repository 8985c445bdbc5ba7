"""Continual-learning suite for task-incremental chest X-ray screening."""

__version__ = "0.1.0"
