"""Subpixel dot detection by thresholded connected components.

Pixels at or above the threshold are grouped with 8-connectivity; components
whose area falls inside the configured bounds emit an intensity-weighted
centroid.  Components touching the image border are kept but flagged.
Centroids closer than 1 px are merged (response-weighted) so no two centers
can seed duplicate trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import GrayImage, Point2
from .io import fmt

_EIGHT = np.ones((3, 3), dtype=int)


@dataclass
class DetectionConfig:
    threshold: float = 0.25
    area_min: int = 3
    area_max: int = 100

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if not 0 < self.area_min <= self.area_max:
            raise ValueError("need 0 < area_min <= area_max")


@dataclass
class DotSet:
    """Detected dot centers of one frame, sorted by (y, x)."""

    frame: int
    xs: np.ndarray = field(default_factory=lambda: np.empty(0))
    ys: np.ndarray = field(default_factory=lambda: np.empty(0))
    response: np.ndarray = field(default_factory=lambda: np.empty(0))
    on_border: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    def __len__(self) -> int:
        return len(self.xs)

    def point(self, idx: int) -> Point2:
        return Point2(float(self.xs[idx]), float(self.ys[idx]))


def _merge_close(xs, ys, resp, border, radius: float = 1.0):
    """Response-weighted merge of centers closer than `radius`, to a fixed point."""
    while len(xs) > 1:
        pairs = cKDTree(np.column_stack([xs, ys])).query_pairs(radius)
        if not pairs:
            break
        parent = np.arange(len(xs))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i, j in pairs:
            parent[find(i)] = find(j)
        roots = np.array([find(i) for i in range(len(xs))])
        nx, ny, nr, nb = [], [], [], []
        for r in np.unique(roots):
            m = roots == r
            w = resp[m]
            nx.append(float(np.average(xs[m], weights=w)))
            ny.append(float(np.average(ys[m], weights=w)))
            nr.append(float(w.sum()))
            nb.append(bool(border[m].any()))
        xs, ys = np.array(nx), np.array(ny)
        resp, border = np.array(nr), np.array(nb, dtype=bool)
    return xs, ys, resp, border


def detect_dots(img: GrayImage, cfg: DetectionConfig, frame: int = 0) -> DotSet:
    """Detect subpixel dot centers in one frame. Deterministic; empty-safe."""
    data = img.data
    mask = data >= cfg.threshold
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return DotSet(frame=frame)
    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(mask, labels, idx)
    keep = (areas >= cfg.area_min) & (areas <= cfg.area_max)
    if not keep.any():
        return DotSet(frame=frame)
    idx = idx[keep]
    centers = ndimage.center_of_mass(data, labels, idx)
    resp = ndimage.sum_labels(data, labels, idx)
    h, w = data.shape
    border = np.zeros(len(idx), dtype=bool)
    for k, slc in enumerate(ndimage.find_objects(labels)):
        if slc is None:
            continue
        lab = k + 1
        if lab in idx:
            touches = (slc[0].start == 0 or slc[0].stop == h
                       or slc[1].start == 0 or slc[1].stop == w)
            border[np.searchsorted(idx, lab)] = touches
    ys = np.array([c[0] for c in centers])
    xs = np.array([c[1] for c in centers])
    xs, ys, resp, border = _merge_close(xs, ys, np.asarray(resp, float), border)
    order = np.lexsort((xs, ys))
    return DotSet(frame=frame, xs=xs[order], ys=ys[order],
                  response=resp[order], on_border=border[order])


def dump_dots(dots: DotSet, path: Path | str) -> None:
    """Write one frame's detections as CSV with header x,y,response."""
    with open(path, "w", encoding="ascii") as f:
        f.write("x,y,response\n")
        for x, y, r in zip(dots.xs, dots.ys, dots.response):
            f.write(f"{fmt(x)},{fmt(y)},{fmt(r)}\n")
