"""Shared numerical utilities and exceptions."""
