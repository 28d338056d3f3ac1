"""Pushing domain, datasets, metrics and experiment services."""
