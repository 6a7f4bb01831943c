"""Desk-scale laboratory for symmetrised time delay in potential scattering.

Modules
-------
geometry    star-shaped domains and their shape functions G
dilation    anisotropic dilation fields F and their flows
spectral    periodic grids, wavefunctions, Fourier multiplier operators
scattering  split-step propagation, wave operators, scattering operator
timedelay   sojourn times, radius extrapolation, commutator and virial forms
identities  machine-readable invariant suites
config      experiment configuration and bundled scenarios
cli         command-line entry points
"""

from . import geometry, dilation, spectral, scattering, timedelay  # noqa: F401

__version__ = "0.1.0"
