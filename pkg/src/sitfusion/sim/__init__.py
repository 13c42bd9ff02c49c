"""Deterministic scenario simulation."""
