"""Version information for push-vhgp."""

__version__ = "0.1.0"
