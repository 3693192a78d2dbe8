"""Structured-light pattern-flow toolkit.

Tracks projected dot trajectories across frames, estimates each ray's
projector coordinate with a scalar Kalman filter, converts matched
trajectories into sparse pseudo-ground-truth disparity with confidence
weights, and uses the resulting self-supervised loss to adapt a dense
disparity estimator online.  A bundled analytic scene simulator provides
exact ground truth for every stage.
"""

from .core import (DisparityMap, EstimatorParams, GrayImage, Pattern, Point2,
                   disparity_from_correspondence, estimator_predict,
                   sample_bilinear)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "DisparityMap", "EstimatorParams", "GrayImage", "Pattern", "Point2",
    "disparity_from_correspondence", "estimator_predict", "sample_bilinear",
    "KERNEL_BACKEND", "__version__",
]
