"""Terminal cost synthesis for short-horizon nonlinear MPC with
scenario-based descent certificates, on the CSTR benchmark."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]
