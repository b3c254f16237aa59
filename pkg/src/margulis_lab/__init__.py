"""Numerical laboratory for averaging operators on spaces of lattices.

The package verifies, at desk scale, a family of drift inequalities:
weight-contraction averages for diagonal flows, Margulis inequalities for
height functions on SL(n,Z)-quotients, exponential decay under
horospherical averaging, sheet-count bounds near closed orbits, orbit
isolation and counting, and the resulting avoidance dichotomy.
"""

__version__ = "0.1.0"
