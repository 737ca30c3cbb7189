"""Black-box waveform synthesis: a TD3 agent designs constrained complex FIR
taps so that a frozen, mismatched receiver classifier recovers its accuracy."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
