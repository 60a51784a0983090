"""Clinical-note topic modeling pipeline: ingest, keyword filtering, LDA, analysis."""

__version__ = "0.1.0"
