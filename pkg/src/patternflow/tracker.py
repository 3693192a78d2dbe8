"""Multi-frame pattern-flow tracking by gated nearest matching.

A trajectory is the per-frame camera position of one projected ray; in a
rectified system it never leaves its row.  Each frame, every live trajectory
proposes the row-compatible detection nearest in x (within gate_x); the
proposal survives only if the backward nearest match returns the
trajectory's own tail (forward-backward consistency).  Conflicting claims
are discarded, unextended trajectories terminate immediately, and every
unclaimed detection seeds a new trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import io
from .core import Point2
from .detection import DotSet


@dataclass
class TrackerConfig:
    row_tol: float = 1.5
    gate_x: float = 6.0

    def __post_init__(self):
        if self.row_tol < 0 or self.gate_x <= 0:
            raise ValueError("need row_tol >= 0 and gate_x > 0")


class TrackPoint(NamedTuple):
    t: int
    x: float
    y: float


@dataclass
class Trajectory:
    id: int
    points: list[TrackPoint]
    alive: bool = True
    tail_idx: int = -1  # detection index of the tail in the latest DotSet

    @property
    def tail(self) -> Point2:
        p = self.points[-1]
        return Point2(p.x, p.y)

    @property
    def row(self) -> float:
        return float(np.mean([p.y for p in self.points]))

    def __len__(self) -> int:
        return len(self.points)


class StepEvents(NamedTuple):
    extended: list[int]
    terminated: list[int]
    spawned: list[int]


def nearest_match(query: Point2, dots: DotSet, row_tol: float,
                  gate_x: float) -> int | None:
    """Index of the row-compatible detection nearest in x, or None.

    Candidates must satisfy |y - query.y| <= row_tol; the winner minimizes
    |x - query.x|, loses if that distance exceeds gate_x, and ties break
    toward the smaller detection index.
    """
    if len(dots) == 0:
        return None
    ok = np.abs(dots.ys - query.y) <= row_tol
    if not ok.any():
        return None
    cand = np.nonzero(ok)[0]
    dx = np.abs(dots.xs[cand] - query.x)
    best = cand[int(np.argmin(dx))]  # argmin returns the first minimum
    if abs(dots.xs[best] - query.x) > gate_x:
        return None
    return int(best)


@dataclass
class TrackerState:
    cfg: TrackerConfig = field(default_factory=TrackerConfig)
    trajectories: dict[int, Trajectory] = field(default_factory=dict)
    next_id: int = 0
    frame: int = -1
    last_dots: DotSet | None = None

    def live(self) -> list[Trajectory]:
        return [tr for tr in self.trajectories.values() if tr.alive]

    def _spawn(self, dots: DotSet, det_idx: int) -> int:
        tid = self.next_id
        self.next_id += 1
        self.trajectories[tid] = Trajectory(
            id=tid,
            points=[TrackPoint(dots.frame, float(dots.xs[det_idx]), float(dots.ys[det_idx]))],
            tail_idx=det_idx)
        return tid

    def step(self, dots: DotSet) -> StepEvents:
        """Advance one frame; frames must arrive consecutively."""
        if self.last_dots is not None and dots.frame != self.frame + 1:
            raise ValueError(
                f"frame discontinuity: got {dots.frame} after {self.frame}")

        extended: list[int] = []
        terminated: list[int] = []
        claims: dict[int, int] = {}  # trajectory id -> claimed detection index

        if self.last_dots is not None:
            for tr in self.live():
                fwd = nearest_match(tr.tail, dots, self.cfg.row_tol, self.cfg.gate_x)
                if fwd is None:
                    continue
                bwd = nearest_match(dots.point(fwd), self.last_dots,
                                    self.cfg.row_tol, self.cfg.gate_x)
                if bwd == tr.tail_idx:
                    claims[tr.id] = fwd

            counts: dict[int, int] = {}
            for det in claims.values():
                counts[det] = counts.get(det, 0) + 1
            claims = {tid: det for tid, det in claims.items() if counts[det] == 1}

            for tr in self.live():
                det = claims.get(tr.id)
                if det is None:
                    tr.alive = False
                    terminated.append(tr.id)
                else:
                    tr.points.append(TrackPoint(dots.frame, float(dots.xs[det]),
                                                float(dots.ys[det])))
                    tr.tail_idx = det
                    extended.append(tr.id)

        claimed = set(claims.values())
        spawned = [self._spawn(dots, det) for det in range(len(dots))
                   if det not in claimed]

        self.frame = dots.frame
        self.last_dots = dots
        return StepEvents(extended, terminated, spawned)


def dump_tracks(state: TrackerState, path: Path | str) -> None:
    """tracks.jsonl: the flow.jsonl schema plus an "alive" flag per trajectory."""
    flows = {tid: [(p.t, p.x, p.y) for p in tr.points]
             for tid, tr in state.trajectories.items()}
    alive = {tid: tr.alive for tid, tr in state.trajectories.items()}
    io.write_flow_jsonl(path, flows, alive=alive)
