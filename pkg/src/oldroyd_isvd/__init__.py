"""Crank-Nicolson finite element solver for Oldroyd flows with compressed memory.

The velocity history that feeds the memory integral is held in an incremental
truncated SVD instead of as a dense snapshot matrix.
"""
__version__ = "0.1.0"

from .isvd import SvdState, compress
from .kernels import TemperedFractional, cq_build, exponential_kernel, log_kernel
from .mesh import DomainSpec, build_mesh
from .fespace import build_mini_space
from .stepper import SchemeConfig, StepError, TimeGrid, run

__all__ = [
    "DomainSpec", "SchemeConfig", "StepError", "SvdState", "TemperedFractional", "TimeGrid",
    "build_mesh", "build_mini_space", "compress", "cq_build", "exponential_kernel",
    "log_kernel", "run",
]
