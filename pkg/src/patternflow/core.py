"""Shared types for a rectified camera-projector rig.

The system is assumed rectified: camera row y and projector row v coincide,
so all disparity arithmetic is horizontal.  A camera pixel (x, y) observing
the ray projected from (u, v) has disparity x - u, and y == v.  Everything
here is value data; nothing mutates after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels


class Point2(NamedTuple):
    """Subpixel coordinate in camera or projector space."""

    x: float
    y: float


@dataclass
class GrayImage:
    """Single-channel image, intensities normalized to [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.size == 0:
            raise ValueError(f"expected a non-empty 2-D image, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image intensities must be finite")
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image intensities must lie in [0, 1], got [{lo}, {hi}]")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class Pattern:
    """Projected dot pattern: the rendered image plus the dot centers it encodes.

    `dots` is an (M, 2) array of (u, v) centers in projector pixels; the row
    order is the dot id used everywhere downstream.  `min_spacing` records
    the Poisson-disk radius the generator guaranteed, when known.
    """

    image: GrayImage
    dots: np.ndarray
    min_spacing: float | None = None

    def __post_init__(self):
        self.dots = np.asarray(self.dots, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(self.dots)):
            raise ValueError("dot centers must be finite")
        w, h = self.image.width, self.image.height
        u, v = self.dots[:, 0], self.dots[:, 1]
        if len(self.dots) and not (
            (u >= 0).all() and (u <= w - 1).all() and (v >= 0).all() and (v <= h - 1).all()
        ):
            raise ValueError("dot centers must lie inside the pattern image")

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height

    def dot(self, idx: int) -> Point2:
        return Point2(float(self.dots[idx, 0]), float(self.dots[idx, 1]))


@dataclass
class DisparityMap:
    """Dense per-pixel disparity (px) with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise ValueError("disparity values and validity mask must share a 2-D shape")
        if self.valid.any() and not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("valid disparity values must be finite")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class EstimatorParams:
    """Surrogate disparity estimator: a dense per-pixel parameter grid.

    Stands in for a learned network; the grid is read out as the prediction
    and adapted in place of network weights.  `smoothness` is the total
    variation regularizer weight used during adaptation.
    """

    grid: np.ndarray
    smoothness: float = 0.1

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2:
            raise ValueError("estimator grid must be 2-D")
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("estimator grid must be finite")


def disparity_from_correspondence(x: Point2, u: Point2) -> float:
    """Disparity of a camera pixel x matched to projector pixel u: x.x - u.x."""
    return x.x - u.x


def sample_bilinear(img: GrayImage, p: Point2) -> tuple[float, bool]:
    """Bilinear interpolation of the four surrounding pixels.

    Out-of-bounds points return (0.0, False).
    """
    vals, ok = kernels.bilinear_sample(
        img.data, np.array([p.x], dtype=np.float64), np.array([p.y], dtype=np.float64))
    return float(vals[0]), bool(ok[0])


def estimator_predict(params: EstimatorParams) -> DisparityMap:
    """Read out the current dense disparity field; every pixel is valid."""
    return DisparityMap(values=params.grid.copy(),
                        valid=np.ones(params.grid.shape, dtype=bool))
