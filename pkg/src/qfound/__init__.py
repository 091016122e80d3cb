"""Numerics for quantum foundations: channel calculus, conditional independence,
causal models, time-travel circuits, ontological overlaps and communication bounds."""

__version__ = "0.1.0"
