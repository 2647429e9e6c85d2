"""Signpost shared library: data, text preprocessing, model, retrieval and metrics."""
