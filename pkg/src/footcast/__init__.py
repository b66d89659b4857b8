"""Task-conditioned foothold uncertainty and uncertainty-aware MPPI planning
for a simulated quadruped."""

__version__ = "0.1.0"
