"""Utilities and helper modules."""
