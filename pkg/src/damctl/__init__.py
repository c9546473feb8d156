"""Boundary control of a viscoelastic damage model on triangle meshes."""

__version__ = "0.1.0"
