"""Exact bound checks on single-state tabular softmax games."""
