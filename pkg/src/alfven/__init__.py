"""Pseudo-spectral incompressible MHD in Elsasser variables on a periodic box.

Modules
-------
grid          periodic grids, spectral operators, Leray projector, wedge product
solver        Elsasser state, pressure, right-hand side, IF-RK4 stepping, dispersion
initial_data  data families and the no-wrap run contract
geometry      characteristic coordinates, marker flow maps, weights, geometry monitors
diagnostics   weighted energies, diffusions, characteristic fluxes, div-curl check
scattering    along-line accumulators, characteristic identities, scattering fields
io            checkpoint files
experiments   configuration, drivers, studies, verification suite and CLI
"""
from .grid import Grid3, set_threads
from .initial_data import InitialDataSpec, make_initial_data
from .kernels import BACKEND as KERNEL_BACKEND
from .solver import ElsasserState, SolverConfig, Stepper, dispersion, linearized_mode_fit, step

__version__ = "0.1.0"

__all__ = ["Grid3", "set_threads", "InitialDataSpec", "make_initial_data", "ElsasserState", "SolverConfig",
           "Stepper", "step", "dispersion", "linearized_mode_fit", "KERNEL_BACKEND", "__version__"]
