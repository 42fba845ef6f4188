"""quenchlab: finite-volume numerics for disordered lattice models."""

__version__ = "0.1.0"

from ._kernels import HAVE_COMPILED, IMPL as KERNEL_IMPL  # noqa: F401
