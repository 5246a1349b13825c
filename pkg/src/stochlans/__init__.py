"""Finite-element simulator for stochastic LANS-alpha flow on 2D polygons.

Taylor-Hood (P2 velocity, P1 pressure) spatial discretization with a
semi-implicit Euler time stepper for the Lagrangian-averaged Navier-Stokes
alpha model driven by truncated Q-Wiener noise, plus a matching reference
Navier-Stokes stepper, Monte Carlo experiment drivers, and a small CLI.
"""

from .mesh import Mesh, QuadratureRule, refine_uniform, triangle_quadrature, triangulate_unit_square

__all__ = [
    "Mesh",
    "QuadratureRule",
    "refine_uniform",
    "triangle_quadrature",
    "triangulate_unit_square",
]

__version__ = "0.1.0"
