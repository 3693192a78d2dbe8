"""Sparse pseudo-ground-truth disparity with confidence weights.

A matched trajectory (ray u, camera points c^t) yields the pseudo ground
truth d_pgt = x - u_x at every window point, exact whenever the match is
right.  Its weight combines two reliability cues: the Kalman variance decay
exp(-sigma^2 / beta), and the fraction S of the matched dot's pattern-space
neighbors whose own trajectories preserve the camera/projector distance
(wrong correspondences break that consistency for nearly every neighbor, so
they are masked out rather than filtered by heuristics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import Pattern, Point2
from .io import fmt
from .matcher import Correspondence
from .tracker import Trajectory


@dataclass
class SupervisionConfig:
    epsilon: float = 2.0     # distance-consistency threshold, px
    neighbors: int = 8       # k for the pattern kNN graph
    beta: float = 1.0        # confidence temperature
    min_length: int = 3      # trajectory length before supervision is emitted

    def __post_init__(self):
        if self.epsilon <= 0 or self.neighbors < 1 or self.beta <= 0 or self.min_length < 1:
            raise ValueError("bad supervision config")


@dataclass
class NeighborGraph:
    """Symmetrized k-nearest-neighbor graph over pattern dots."""

    neighbors: list[np.ndarray]

    def z(self, dot_id: int) -> int:
        return len(self.neighbors[dot_id])


def build_neighbor_graph(pattern: Pattern, k: int) -> NeighborGraph:
    """kNN by Euclidean distance in projector space, symmetrized by union."""
    dots = pattern.dots
    m = len(dots)
    if k < 1 or m <= k:
        raise ValueError(f"need 1 <= k < dot count, got k={k}, dots={m}")
    _, idx = cKDTree(dots).query(dots, k=k + 1)
    sets: list[set[int]] = [set() for _ in range(m)]
    for i in range(m):
        for j in idx[i, 1:]:  # first hit is the dot itself
            sets[i].add(int(j))
            sets[int(j)].add(i)
    return NeighborGraph([np.array(sorted(s), dtype=np.int64) for s in sets])


def delta_check(c_n: Point2, c_m: Point2, b_n: Point2, b_m: Point2,
                eps: float) -> int:
    """1 iff camera and projector Euclidean gaps agree within eps, else 0."""
    dc = math.hypot(c_n.x - c_m.x, c_n.y - c_m.y)
    db = math.hypot(b_n.x - b_m.x, b_n.y - b_m.y)
    return 1 if abs(dc - db) < eps else 0


@dataclass
class FramePoints:
    """Supervision points for one frame."""

    frame: int
    xs: np.ndarray
    ys: np.ndarray
    d_pgt: np.ndarray
    w: np.ndarray
    traj_ids: np.ndarray


@dataclass
class SparseSupervision:
    frames: dict[int, FramePoints] = field(default_factory=dict)
    s_values: dict[int, float] = field(default_factory=dict)  # per-trajectory S

    @property
    def n_points(self) -> int:
        return sum(len(fp.xs) for fp in self.frames.values())

    @property
    def mean_w(self) -> float:
        if self.n_points == 0:
            return 0.0
        return float(np.concatenate([fp.w for fp in self.frames.values()]).mean())


def compute_supervision(trajectories: dict[int, Trajectory],
                        correspondences: dict[int, Correspondence],
                        graph: NeighborGraph, window: list[int],
                        pattern: Pattern, cfg: SupervisionConfig,
                        use_mask: bool = True) -> SparseSupervision:
    """Turn matched trajectories into weighted sparse disparity labels.

    For each matched trajectory of length >= min_length, every point inside
    the window gets d_pgt = x - u_x of the matched dot.  The weight is
    S * exp(-sigma^2/beta), computed at the window's last frame; neighbors
    of the matched dot whose trajectory is absent at that frame count toward
    Z but contribute nothing.  With use_mask False all weights are 1 (the
    raw, unmasked variant used in ablations).
    """
    t_last = window[-1]
    dot_to_traj: dict[int, int] = {}
    for tid, corr in correspondences.items():
        tr = trajectories.get(tid)
        if tr is None:
            continue
        prev = dot_to_traj.get(corr.dot_id)
        if prev is None or len(trajectories[prev]) < len(tr):
            dot_to_traj[corr.dot_id] = tid

    def point_at(tr: Trajectory, t: int) -> Point2 | None:
        off = t - tr.points[-1].t
        if off > 0 or -off >= len(tr.points):
            return None
        p = tr.points[len(tr.points) - 1 + off]
        return Point2(p.x, p.y) if p.t == t else None

    rows: dict[int, list[tuple[float, float, float, float, int]]] = {}
    s_values: dict[int, float] = {}
    for tid, corr in correspondences.items():
        tr = trajectories.get(tid)
        if tr is None or len(tr) < cfg.min_length:
            continue
        c_here = point_at(tr, t_last)
        if c_here is None:
            continue
        b_n = pattern.dot(corr.dot_id)
        neigh = graph.neighbors[corr.dot_id]
        hits = 0
        for m_dot in neigh:
            other_id = dot_to_traj.get(int(m_dot))
            if other_id is None or other_id == tid:
                continue
            c_other = point_at(trajectories[other_id], t_last)
            if c_other is None:
                continue
            hits += delta_check(c_here, c_other, b_n, pattern.dot(int(m_dot)),
                                cfg.epsilon)
        s = hits / len(neigh) if len(neigh) else 0.0
        s_values[tid] = s
        w = s * math.exp(-corr.sigma ** 2 / cfg.beta) if use_mask else 1.0
        for p in tr.points:
            if window[0] <= p.t <= t_last:
                rows.setdefault(p.t, []).append((p.x, p.y, p.x - b_n.x, w, tid))

    frames = {}
    for t, entries in rows.items():
        arr = np.array(entries, dtype=np.float64)
        frames[t] = FramePoints(frame=t, xs=arr[:, 0], ys=arr[:, 1],
                                d_pgt=arr[:, 2], w=arr[:, 3],
                                traj_ids=arr[:, 4].astype(np.int64))
    return SparseSupervision(frames=frames, s_values=s_values)


def dump_supervision(sup: SparseSupervision, out_dir: Path | str) -> None:
    """Per-frame CSV dumps pgt_%05d.csv with header x,y,d_pgt,w."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, fp in sorted(sup.frames.items()):
        with open(out / f"pgt_{t:05d}.csv", "w", encoding="ascii") as f:
            f.write("x,y,d_pgt,w\n")
            for x, y, d, w in zip(fp.xs, fp.ys, fp.d_pgt, fp.w):
                f.write(f"{fmt(x)},{fmt(y)},{fmt(d)},{fmt(w)}\n")
