"""Distributed Laplacian solving by simulated random-walk queueing networks."""

__version__ = "0.1.0"
