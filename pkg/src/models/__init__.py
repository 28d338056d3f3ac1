"""Domain schemas and regression models."""
