"""Datasets, noise, experiment protocols and run records."""
