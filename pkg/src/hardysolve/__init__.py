"""Variational solver for semilinear Dirichlet problems with Hardy potentials
singular at the origin and at the boundary."""

__version__ = "0.1.0"
