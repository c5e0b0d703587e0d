"""Reaction-diffusion particle model: simulation, hydrodynamic limit, rate
functionals, stationary profiles and Freidlin-Wentzell static weights."""

__version__ = "0.1.0"

from . import driver, elliptic, fwgraph, ldp, model, pde, quasipotential, reaction  # noqa: E402,F401
from .model import LatticeConfig, CylinderRate, build_rate_table, kmc_run  # noqa: E402,F401
from .reaction import bd_polynomials, chafee_infante_params  # noqa: E402,F401
