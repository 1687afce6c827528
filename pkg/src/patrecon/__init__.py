"""Finite-time filtered backprojection for photoacoustic tomography.

Modules: ``grid`` (sampling), ``phantom`` (initial pressures), ``wavesim`` (spectral
forward model), ``sphmeans`` (spherical means and Abel relations), ``kernels``
(time filters), ``recon2d`` / ``recon3d`` (inversion) and ``cli``.
"""
from .exceptions import PatReconError
from .grid import build_detectors, build_grid, build_timegrid
from .phantom import PhantomSpec, gaussian_phantom, head_phantom, rasterize
from .recon2d import (FilteredBackprojection, l2_error, range_condition_residual,
                      reconstruct_dirichlet, reconstruct_mixed, reconstruct_neumann)
from .wavesim import WaveSimulator, add_noise, combine_mixed, simulate

__version__ = "0.1.0"
