"""Reinforcement-learning placement of a 3D UI panel around a simulated user."""

__version__ = "0.1.0"
