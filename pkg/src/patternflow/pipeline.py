"""The online loop: detect, track, filter, match, supervise, adapt.

Frames stream in order.  Every frame is predicted with the current grid
(metrics are logged against ground truth when present), detections extend
the trajectories, and each live trajectory's Kalman filter absorbs the
warped tail coordinate.  Every T-th frame the window is converted into
sparse supervision and one adaptation step updates the grid, which then
predicts the next window (temporal warm start).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .adaptation import (AdaptationConfig, GridOptimizer, LossReport,
                         MetricsRow, WindowBuffer, adapt_step, compute_metrics)
from .config import Config, InitConfig
from .core import DisparityMap, EstimatorParams, estimator_predict
from .detection import detect_dots, dump_dots
from .io import Dataset, load_dataset
from .matcher import (Correspondence, KalmanState, dump_matches, kf_update,
                      match_pattern, measure)
from .supervision import build_neighbor_graph, compute_supervision, dump_supervision
from .tracker import TrackerState, dump_tracks

log = logging.getLogger(__name__)


@dataclass
class WindowLossRow:
    window: int
    loss: float
    loss_d: float
    loss_p: float
    n_points: int
    mean_w: float


@dataclass
class OnlineResult:
    seed: int
    metrics: list[MetricsRow]
    losses: list[WindowLossRow]
    params: EstimatorParams
    tracker: TrackerState
    summary: dict = field(default_factory=dict)

    def final_prediction(self) -> DisparityMap:
        return estimator_predict(self.params)


def initial_grid(init: InitConfig, cfg: Config, dataset: Dataset,
                 start_frame: int, rng: np.random.Generator) -> np.ndarray:
    shape = None
    gt0 = dataset.gt(start_frame) if dataset.gt_paths else None
    if gt0 is not None:
        shape = gt0.values.shape
    else:
        img = dataset.frame(start_frame)
        shape = img.data.shape
    mid = 0.5 * (cfg.adaptation.d_min + cfg.adaptation.d_max)
    if init.mode == "constant":
        value = mid if init.value is None else init.value
        return np.full(shape, float(value))
    if init.mode == "file":
        if init.path is None:
            raise io.DataError("init mode 'file' needs init.path")
        disp = io.read_pfm(init.path)
        return np.where(disp.valid, disp.values, mid)
    # gt-offset: ground truth plus a bias and gaussian corruption
    if gt0 is None:
        raise io.DataError(
            f"{dataset.root}: init mode 'gt-offset' needs ground truth")
    values = gt0.values
    if not gt0.valid.all():
        if gt0.valid.any():
            # fill uncovered pixels from the nearest covered one so the
            # corrupted start has no artificial walls at coverage borders
            from scipy import ndimage
            _, (iy, ix) = ndimage.distance_transform_edt(
                ~gt0.valid, return_indices=True)
            values = values[iy, ix]
        else:
            values = np.full(shape, mid)
    base = values + init.offset
    if init.noise > 0.0:
        base = base + rng.normal(0.0, init.noise, shape)
    return base


def _summarize(metrics: list[MetricsRow]) -> dict:
    if not metrics:
        return {"n_metric_frames": 0}
    quarter = max(1, len(metrics) // 4)
    tail = metrics[-quarter:]
    return {
        "n_metric_frames": len(metrics),
        "o1_mean": float(np.mean([m.o1 for m in metrics])),
        "o2_mean": float(np.mean([m.o2 for m in metrics])),
        "o5_mean": float(np.mean([m.o5 for m in metrics])),
        "avg_l1_mean": float(np.mean([m.avg_l1 for m in metrics])),
        "o1_final_quarter": float(np.mean([m.o1 for m in tail])),
        "o2_final_quarter": float(np.mean([m.o2 for m in tail])),
        "o5_final_quarter": float(np.mean([m.o5 for m in tail])),
        "avg_l1_final_quarter": float(np.mean([m.avg_l1 for m in tail])),
        "o1_final": metrics[-1].o1,
        "avg_l1_final": metrics[-1].avg_l1,
    }


def run_online(dataset: Dataset | Path | str, cfg: Config,
               seed: int | None = None, out_dir: Path | None = None,
               dump_intermediate: bool = False) -> OnlineResult:
    """Run the full online-adaptation loop over one dataset.

    `seed` overrides cfg.seed (used by replication); it only drives the
    estimator initialization and the optional match-corruption draws, the
    pipeline itself is deterministic.
    """
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    acfg = cfg.adaptation
    t0 = cfg.start_frame
    t1 = dataset.n_frames if cfg.max_frames is None else min(
        dataset.n_frames, t0 + cfg.max_frames)
    if t0 < 0 or t0 >= t1:
        raise io.DataError(f"{dataset.root}: empty frame range [{t0}, {t1})")

    pattern = dataset.pattern
    graph = build_neighbor_graph(pattern, cfg.supervision.neighbors)
    params = EstimatorParams(grid=initial_grid(cfg.init, cfg, dataset, t0, rng),
                             smoothness=acfg.lam)
    optimizer = GridOptimizer(acfg.optimizer)
    tracker = TrackerState(cfg.tracker)
    filters: dict[int, KalmanState] = {}
    buffer = WindowBuffer(capacity=acfg.window)
    metrics: list[MetricsRow] = []
    losses: list[WindowLossRow] = []
    corrs: dict[int, Correspondence] = {}
    sup = None
    window_idx = 0

    dots_dir = None
    if out_dir is not None and dump_intermediate:
        dots_dir = Path(out_dir) / "dots"
        dots_dir.mkdir(parents=True, exist_ok=True)

    for step, t in enumerate(range(t0, t1)):
        frame = dataset.frame(t)
        pred = estimator_predict(params)
        gt = dataset.gt(t)
        if gt is not None:
            row = compute_metrics(pred, gt, t)
            if row is not None:
                metrics.append(row)

        dots = detect_dots(frame, cfg.detection, frame=t)
        if dots_dir is not None:
            dump_dots(dots, dots_dir / f"{t:05d}.csv")
        events = tracker.step(dots)
        for tid in events.terminated:
            filters.pop(tid, None)
        for tid in events.spawned:
            filters[tid] = KalmanState()
        for tr in tracker.live():
            z = measure(tr.tail, pred)
            if z is not None:
                filters[tr.id] = kf_update(filters[tr.id], z,
                                           cfg.matcher.process_noise,
                                           cfg.matcher.measurement_noise)

        buffer.push(t, frame, dots, prediction=pred)
        if buffer.full and (step + 1) % acfg.window == 0:
            corrs = {}
            for tr in tracker.live():
                st = filters.get(tr.id)
                if st is None or st.n_meas < 1:
                    continue
                c = match_pattern(st, tr.row, pattern, cfg.tracker.row_tol,
                                  traj_id=tr.id)
                if c is not None:
                    corrs[tr.id] = c
            if acfg.corrupt_match_frac > 0.0:
                corrs = _corrupt_matches(corrs, graph, acfg.corrupt_match_frac, rng)
            sup = compute_supervision(tracker.trajectories, corrs, graph,
                                      buffer.frame_ids, pattern,
                                      cfg.supervision, use_mask=acfg.use_mask)
            buffer.supervision = sup
            report: LossReport | None = None
            for _ in range(max(1, acfg.steps_per_window)):
                params, report = adapt_step(params, buffer, acfg, pattern,
                                            optimizer)
            losses.append(WindowLossRow(window=window_idx, loss=report.loss,
                                        loss_d=report.loss_d,
                                        loss_p=report.loss_p,
                                        n_points=report.n_points,
                                        mean_w=report.mean_w))
            window_idx += 1

    result = OnlineResult(seed=seed, metrics=metrics, losses=losses,
                          params=params, tracker=tracker,
                          summary=_summarize(metrics))
    if out_dir is not None:
        _write_outputs(Path(out_dir), cfg, [result], dump_intermediate,
                       corrs, sup)
    return result


def _corrupt_matches(corrs: dict[int, Correspondence], graph,
                     frac: float, rng: np.random.Generator) -> dict:
    """Shift a seeded fraction of matches to a random pattern-space neighbor."""
    out = {}
    for tid in sorted(corrs):
        c = corrs[tid]
        if rng.random() < frac:
            neigh = graph.neighbors[c.dot_id]
            wrong = int(neigh[rng.integers(len(neigh))])
            c = dataclasses.replace(c, dot_id=wrong)
        out[tid] = c
    return out


def run_replicated(dataset: Dataset | Path | str, cfg: Config,
                   out_dir: Path | None = None,
                   dump_intermediate: bool = False) -> tuple[list[OnlineResult], dict]:
    """Run `cfg.adaptation.seeds` replicates (seed, seed+1, ...) and average.

    Returns the per-replicate results and the aggregate report written to
    report.json when an output directory is given.
    """
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    n = cfg.adaptation.seeds
    results = [run_online(dataset, cfg, seed=cfg.seed + i) for i in range(n)]
    report = {
        "config": cfg.to_dict(),
        "seeds": [r.seed for r in results],
        "per_seed": [r.summary for r in results],
        "mean": _mean_summary([r.summary for r in results]),
    }
    if out_dir is not None:
        _write_outputs(Path(out_dir), cfg, results, dump_intermediate)
    return results, report


def _mean_summary(summaries: list[dict]) -> dict:
    keys = [k for k in summaries[0] if k != "n_metric_frames"]
    out = {k: float(np.mean([s[k] for s in summaries if k in s])) for k in keys}
    out["n_metric_frames"] = summaries[0].get("n_metric_frames", 0)
    return out


def _avg_rows(per_seed_rows: list[list], fields: list[str]):
    """Average dataclass rows position-wise across seeds (frames align)."""
    n_rows = min(len(rows) for rows in per_seed_rows)
    out = []
    for i in range(n_rows):
        avg = {f: float(np.mean([getattr(rows[i], f) for rows in per_seed_rows]))
               for f in fields}
        out.append(avg)
    return out


def _write_outputs(out: Path, cfg: Config, results: list[OnlineResult],
                   dump_intermediate: bool,
                   corrs: dict | None = None, sup=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", encoding="ascii") as f:
        f.write("frame,o1,o2,o5,avg_l1\n")
        if results[0].metrics:
            frames = [m.frame for m in results[0].metrics]
            avgs = _avg_rows([r.metrics for r in results],
                             ["o1", "o2", "o5", "avg_l1"])
            for frame, a in zip(frames, avgs):
                f.write(f"{frame},{io.fmt(a['o1'])},{io.fmt(a['o2'])},"
                        f"{io.fmt(a['o5'])},{io.fmt(a['avg_l1'])}\n")
    with open(out / "loss.csv", "w", encoding="ascii") as f:
        f.write("window,L,L_D,L_P,n_points,mean_w\n")
        if results[0].losses:
            windows = [l.window for l in results[0].losses]
            avgs = _avg_rows([r.losses for r in results],
                             ["loss", "loss_d", "loss_p", "n_points", "mean_w"])
            for w, a in zip(windows, avgs):
                f.write(f"{w},{io.fmt(a['loss'])},{io.fmt(a['loss_d'])},"
                        f"{io.fmt(a['loss_p'])},{io.fmt(a['n_points'])},"
                        f"{io.fmt(a['mean_w'])}\n")
    io.write_pfm(out / "disp_final.pfm", results[0].final_prediction())
    report = {
        "config": cfg.to_dict(),
        "seeds": [r.seed for r in results],
        "per_seed": [r.summary for r in results],
        "mean": _mean_summary([r.summary for r in results]),
    }
    io.write_json(out / "report.json", report)
    if dump_intermediate:
        dump_tracks(results[0].tracker, out / "tracks.jsonl")
        if corrs:
            dump_matches(list(corrs.values()), out / "matches.csv")
        if sup is not None:
            dump_supervision(sup, out / "pgt")
