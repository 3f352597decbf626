"""Real-space lattice electronic structure with a Mott-mediated screened
electron-electron interaction."""

from latticechem._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
