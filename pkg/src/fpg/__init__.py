"""f-divergence policy gradients for goal-conditioned RL."""

__version__ = "0.1.0"
