"""Guided actor-critic learning for homogeneous 2D swarms."""

__version__ = "0.1.0"
