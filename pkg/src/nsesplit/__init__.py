"""Lie-Trotter splitting for the stochastic 2D Navier-Stokes equations on the torus."""
from .spectral import *  # noqa: F401,F403
from .noise import *  # noqa: F401,F403
from .scheme import *  # noqa: F401,F403
from .harness import *  # noqa: F401,F403
from . import harness, noise, scheme, spectral  # noqa: F401

__version__ = "0.1.0"
