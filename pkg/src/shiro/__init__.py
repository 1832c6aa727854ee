"""Entropy-augmented two-level goal-conditioned RL with off-policy sub-goal correction."""

__version__ = "0.1.0"
