"""Desk-scale laboratory for backdoor trigger-intensity experiments."""

from . import analysis, data, defenses, engine, pipeline, poisoning, seeds, triggers

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "data",
    "defenses",
    "engine",
    "pipeline",
    "poisoning",
    "seeds",
    "triggers",
    "__version__",
]
