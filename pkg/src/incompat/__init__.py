"""Robustness of incompatibility, discrimination games and steering."""
