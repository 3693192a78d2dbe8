"""Per-trajectory ray estimation and pattern-dot correspondence.

Every accepted trajectory point is warped into projector space using the
current disparity estimate (z = x - D(x, y)); along one trajectory that
quantity is the constant horizontal coordinate of the generating ray, so a
constant-state scalar Kalman filter (identity process model) tracks its
expectation mu and variance P.  The matched pattern dot is the
row-compatible dot nearest to mu, rejected if mu sits further than half the
local same-row dot gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DisparityMap, Pattern, Point2
from .io import fmt
from .kernels import bilinear_sample


@dataclass
class MatcherConfig:
    process_noise: float = 0.0   # Q, px^2
    measurement_noise: float = 1.0  # R, px^2

    def __post_init__(self):
        if self.measurement_noise <= 0 or self.process_noise < 0:
            raise ValueError("need R > 0 and Q >= 0")


@dataclass(frozen=True)
class KalmanState:
    """Scalar constant-state filter over the ray's projector x-coordinate."""

    mu: float = 0.0
    var: float = 0.0  # P, px^2
    n_meas: int = 0

    @property
    def sigma(self) -> float:
        return math.sqrt(self.var)


@dataclass(frozen=True)
class Correspondence:
    traj_id: int
    dot_id: int
    mu: float
    sigma: float
    n_meas: int


def measure(c: Point2, disp: DisparityMap) -> float | None:
    """Projector x-coordinate of a trajectory point under `disp`: x - D(c).

    Returns None when the bilinear support of c touches an invalid or
    out-of-bounds disparity pixel.
    """
    h, w = disp.values.shape
    if not (0.0 <= c.x <= w - 1 and 0.0 <= c.y <= h - 1):
        return None
    x0 = min(int(math.floor(c.x)), max(w - 2, 0))
    y0 = min(int(math.floor(c.y)), max(h - 2, 0))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    if not (disp.valid[y0, x0] and disp.valid[y0, x1]
            and disp.valid[y1, x0] and disp.valid[y1, x1]):
        return None
    val, ok = bilinear_sample(disp.values, np.array([c.x]), np.array([c.y]))
    if not ok[0]:
        return None
    return c.x - float(val[0])


def kf_update(state: KalmanState, z: float, q: float, r: float) -> KalmanState:
    """One predict/update cycle; the first measurement initializes (z, R).

    Non-finite measurements are rejected and leave the state unchanged.
    """
    if r <= 0 or q < 0:
        raise ValueError("need R > 0 and Q >= 0")
    if not math.isfinite(z):
        return state
    if state.n_meas == 0:
        return KalmanState(mu=z, var=r, n_meas=1)
    p_pred = state.var + q
    gain = p_pred / (p_pred + r)
    return KalmanState(mu=state.mu + gain * (z - state.mu),
                       var=(1.0 - gain) * p_pred,
                       n_meas=state.n_meas + 1)


def match_pattern(state: KalmanState, row: float, pattern: Pattern,
                  row_tol: float, traj_id: int = -1) -> Correspondence | None:
    """Pattern dot nearest to mu among dots on the trajectory's row.

    Rejected (None) when no dot is row-compatible or when |mu - u| exceeds
    half the gap to the next same-row dot, so an estimate sitting between
    two dots never produces a correspondence.
    """
    if state.n_meas < 1:
        raise ValueError("match_pattern needs at least one measurement")
    dots = pattern.dots
    cand = np.nonzero(np.abs(dots[:, 1] - row) <= row_tol)[0]
    if len(cand) == 0:
        return None
    dist = np.abs(dots[cand, 0] - state.mu)
    best = cand[int(np.argmin(dist))]
    d_best = float(np.abs(dots[best, 0] - state.mu))
    others = cand[cand != best]
    if len(others):
        gap = float(np.min(np.abs(dots[others, 0] - dots[best, 0])))
        if d_best >= gap / 2.0:  # midway between two dots is ambiguous
            return None
    return Correspondence(traj_id=traj_id, dot_id=int(best), mu=state.mu,
                          sigma=state.sigma, n_meas=state.n_meas)


def dump_matches(correspondences: list[Correspondence], path: Path | str) -> None:
    """CSV dump with header traj_id,dot_id,mu,sigma,n_meas."""
    with open(path, "w", encoding="ascii") as f:
        f.write("traj_id,dot_id,mu,sigma,n_meas\n")
        for c in sorted(correspondences, key=lambda c: c.traj_id):
            f.write(f"{c.traj_id},{c.dot_id},{fmt(c.mu)},{fmt(c.sigma)},{c.n_meas}\n")
