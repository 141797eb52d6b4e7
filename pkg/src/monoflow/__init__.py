"""Eigenphase flow, crossing counts and stability for monotone unitary families."""
from .errors import MonoflowError
from .family import (BoundEstimates, compute_D, estimate_bounds, generator_path, load_family, model_linear,
                     model_phase, sampled, two_param)

__version__ = "0.1.0"

__all__ = [
    "BoundEstimates", "MonoflowError", "compute_D", "estimate_bounds", "generator_path", "load_family",
    "model_linear", "model_phase", "sampled", "two_param", "__version__",
]
