"""Nonlocal reaction-diffusion on closed surfaces with a conserved pool.

Simulates membrane-bound activator/substrate kinetics coupled to a spatially
constant cytosolic pool on triangulated closed surfaces (P1 surface finite
elements, semi-implicit time stepping) and analyzes the homogeneous steady
states for diffusion-driven instabilities.
"""

__version__ = "0.1.0"

from .kinetics import DimensionalParameters, Parameters, nondimensionalize
from .mesh import SurfaceMesh, icosphere, load_off

__all__ = [
    "__version__",
    "Parameters",
    "DimensionalParameters",
    "nondimensionalize",
    "SurfaceMesh",
    "icosphere",
    "load_off",
]
