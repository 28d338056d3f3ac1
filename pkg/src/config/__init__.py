"""Configuration package for push-vhgp."""
