"""Voxel Q-learning planning bridged to task-priority DLS execution on a 7-DoF arm."""

__version__ = "0.1.0"
