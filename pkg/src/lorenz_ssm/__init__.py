"""Time-varying Lorenz curves from grouped income shares via a Dirichlet
state-space model."""

__version__ = "0.1.0"
