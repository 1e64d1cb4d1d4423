"""Per-level learner abandonment prediction: ingestion, features, models, reports."""

__version__ = "0.1.0"
