"""Mapping phases of the V1Model RMT backend."""
