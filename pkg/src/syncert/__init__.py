"""Synchronization certificates for diffusively coupled ODE networks and 1D reaction-diffusion."""

from .errors import (ConditionViolated, DivergenceError, InputError, StateError,
                     SyncertError)

__version__ = "0.1.0"

__all__ = ["ConditionViolated", "DivergenceError", "InputError", "StateError",
           "SyncertError", "__version__"]
