"""Calculus of two-input, two-output nonsignaling boxes."""
