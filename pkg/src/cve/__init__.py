"""Conditional variance estimation for sufficient dimension reduction."""

__version__ = "0.1.0"

from .bandwidth import BandwidthRule, bandwidth_nobs, bandwidth_rot
from .dimension import CvCurve, cv_curve
from .errors import CVEError, DegenerateSliceError, InvalidArgumentError, InvalidDimensionError
from .manifold import random_stiefel, subspace_error
from .objective import DataSet, KernelSpec, Objective, objective_Ln, objective_Ln_weighted
from .optimizer import FitResult, OptimConfig, fit_cve

__all__ = [
    "BandwidthRule", "CVEError", "CvCurve", "DataSet", "DegenerateSliceError", "FitResult",
    "InvalidArgumentError", "InvalidDimensionError", "KernelSpec", "Objective", "OptimConfig",
    "bandwidth_nobs", "bandwidth_rot", "cv_curve", "fit_cve", "objective_Ln",
    "objective_Ln_weighted", "random_stiefel", "subspace_error",
]
