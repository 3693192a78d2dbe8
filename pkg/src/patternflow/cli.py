"""Command-line entry point.

Subcommands: simulate, detect, track, adapt, evaluate, report.  Config
resolution is defaults <- --config JSON <- explicit flags; every flag below
maps onto one config field.  Exit codes: 0 success, 1 usage error, 2 data
error.  stdout carries human-readable progress only; machine-readable
artifacts go to files, and identical invocations produce byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .adaptation import compute_metrics
from .config import Config, resolve_config
from .detection import detect_dots, dump_dots
from .pipeline import run_online, run_replicated
from .simulator import generate_pattern, render_sequence, scene_preset, write_dataset
from .tracker import TrackerState, dump_tracks


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _add_common(p: _Parser):
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file (overridden by explicit flags)")
    p.add_argument("--seed", type=int, default=None, help="master random seed")


def _build_parser() -> _Parser:
    parser = _Parser(prog="patternflow",
                     description="structured-light pattern-flow toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", parents=[], help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--scene", type=str, default=None,
                   help="default | static | layered | brisk")
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--dots", type=int, default=None)
    p.add_argument("--min-spacing", type=float, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)

    p = sub.add_parser("detect", help="dump per-frame dot detections")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("track", help="recover multi-frame pattern flow")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("adapt", help="run the online adaptation loop")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--steps-per-window", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None,
                   help="number of replicates averaged in the report")
    p.add_argument("--start-frame", type=int, default=None)
    p.add_argument("--frames", type=int, default=None,
                   help="cap on the number of frames to process")
    p.add_argument("--init-mode", type=str, default=None,
                   choices=["constant", "gt-offset", "file"])
    p.add_argument("--init-value", type=float, default=None)
    p.add_argument("--init-offset", type=float, default=None)
    p.add_argument("--init-noise", type=float, default=None)
    p.add_argument("--init-path", type=str, default=None)
    p.add_argument("--no-photometric", action="store_true",
                   help="ablation: drop the photometric term")
    p.add_argument("--no-disparity", action="store_true",
                   help="ablation: drop the pseudo-GT term")
    p.add_argument("--no-mask", action="store_true",
                   help="ablation: raw pseudo-GT loss with all weights 1")
    p.add_argument("--corrupt-frac", type=float, default=None,
                   help="ablation: fraction of matches shifted to a neighbor")
    p.add_argument("--dump-intermediate", action="store_true",
                   help="also write dots/, tracks.jsonl, matches.csv, pgt/")

    p = sub.add_parser("evaluate", help="compare a disparity map against GT")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None,
                   help="optional directory for metrics + report.json")

    p = sub.add_parser("report", help="summarize a finished run directory")
    _add_common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None, help="optional summary JSON path")
    return parser


def _overrides(args, mapping: dict[str, tuple[str, ...]]) -> dict:
    """Nested override dict from flags the user explicitly set."""
    out: dict = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    for flag, path in mapping.items():
        value = getattr(args, flag)
        if value is None or value is False:
            continue
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    return out


def _cmd_simulate(args) -> int:
    cfg = resolve_config(args.config, _overrides(args, {
        "frames": ("simulator", "frames"), "scene": ("simulator", "scene"),
        "noise": ("simulator", "noise"), "dropout": ("simulator", "dropout"),
        "dots": ("simulator", "dot_count"),
        "min_spacing": ("simulator", "min_spacing"),
        "width": ("simulator", "width"), "height": ("simulator", "height"),
    }))
    sim = cfg.simulator
    pattern = generate_pattern(cfg.seed, sim.dot_count, sim.min_spacing,
                               sim.width, sim.height, sim.sigma_psf)
    patches = scene_preset(sim.scene, sim.width, sim.height,
                           cfg.adaptation.d_min, cfg.adaptation.d_max)
    bundle = render_sequence(pattern, patches, sim.frames, noise=sim.noise,
                             dropout=sim.dropout, seed=cfg.seed,
                             sigma_psf=sim.sigma_psf,
                             d_min=cfg.adaptation.d_min,
                             d_max=cfg.adaptation.d_max, v_max=sim.v_max,
                             merge_radius=sim.merge_radius,
                             border_margin=sim.border_margin)
    bundle.meta["scene"] = sim.scene
    out = write_dataset(bundle, args.out)
    io.write_json(out / "report.json", {"config": cfg.to_dict()})
    print(f"simulate: wrote {sim.frames} frames, "
          f"{len(pattern.dots)} dots to {out}")
    return 0


def _cmd_detect(args) -> int:
    cfg = resolve_config(args.config, _overrides(args, {
        "threshold": ("detection", "threshold"),
    }))
    ds = io.load_dataset(args.data)
    out = Path(args.out)
    dots_dir = out / "dots"
    dots_dir.mkdir(parents=True, exist_ok=True)
    total = 0
    for t in range(ds.n_frames):
        dots = detect_dots(ds.frame(t), cfg.detection, frame=t)
        dump_dots(dots, dots_dir / f"{t:05d}.csv")
        total += len(dots)
    io.write_json(out / "report.json",
                  {"config": cfg.to_dict(), "frames": ds.n_frames,
                   "detections": total})
    print(f"detect: {total} detections over {ds.n_frames} frames -> {dots_dir}")
    return 0


def _cmd_track(args) -> int:
    cfg = resolve_config(args.config, {})
    ds = io.load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = TrackerState(cfg.tracker)
    for t in range(ds.n_frames):
        state.step(detect_dots(ds.frame(t), cfg.detection, frame=t))
    dump_tracks(state, out / "tracks.jsonl")
    io.write_json(out / "report.json",
                  {"config": cfg.to_dict(),
                   "trajectories": len(state.trajectories),
                   "alive": len(state.live())})
    print(f"track: {len(state.trajectories)} trajectories "
          f"({len(state.live())} alive) -> {out / 'tracks.jsonl'}")
    return 0


def _cmd_adapt(args) -> int:
    overrides = _overrides(args, {
        "lr": ("adaptation", "lr"), "alpha": ("adaptation", "alpha"),
        "lam": ("adaptation", "lam"), "window": ("adaptation", "window"),
        "steps_per_window": ("adaptation", "steps_per_window"),
        "seeds": ("adaptation", "seeds"),
        "corrupt_frac": ("adaptation", "corrupt_match_frac"),
        "start_frame": ("start_frame",), "frames": ("max_frames",),
        "init_mode": ("init", "mode"), "init_value": ("init", "value"),
        "init_offset": ("init", "offset"), "init_noise": ("init", "noise"),
        "init_path": ("init", "path"),
    })
    # store_true ablation flags: only force the value when given
    if args.no_photometric:
        overrides.setdefault("adaptation", {})["use_photometric_loss"] = False
    if args.no_disparity:
        overrides.setdefault("adaptation", {})["use_disparity_loss"] = False
    if args.no_mask:
        overrides.setdefault("adaptation", {})["use_mask"] = False
    cfg = resolve_config(args.config, overrides)
    ds = io.load_dataset(args.data)
    out = Path(args.out)
    if cfg.adaptation.seeds > 1:
        results, _ = run_replicated(ds, cfg, out_dir=out,
                                    dump_intermediate=args.dump_intermediate)
        summary = results[0].summary
        n_runs = len(results)
    else:
        result = run_online(ds, cfg, out_dir=out,
                            dump_intermediate=args.dump_intermediate)
        summary = result.summary
        n_runs = 1
    line = f"adapt: {n_runs} run(s) -> {out}"
    if summary.get("n_metric_frames"):
        line += (f"  (final-quarter o1 {summary['o1_final_quarter']:.2f}%, "
                 f"avg L1 {summary['avg_l1_final_quarter']:.3f} px)")
    print(line)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = resolve_config(args.config, {})
    pred = io.read_pfm(args.pred)
    gt = io.read_pfm(args.gt)
    row = compute_metrics(pred, gt, frame=0)
    if row is None:
        raise io.DataError(f"{args.pred}: no jointly valid pixels against {args.gt}")
    print(f"o1={io.fmt(row.o1)},o2={io.fmt(row.o2)},o5={io.fmt(row.o5)},"
          f"avg_l1={io.fmt(row.avg_l1)}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "report.json",
                      {"config": cfg.to_dict(), "pred": str(args.pred),
                       "gt": str(args.gt),
                       "metrics": {"o1": row.o1, "o2": row.o2, "o5": row.o5,
                                   "avg_l1": row.avg_l1}})
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise io.DataError(f"{metrics_path}: not found")
    rows = []
    lines = metrics_path.read_text(encoding="ascii").splitlines()
    for line in lines[1:]:
        frame, o1, o2, o5, avg_l1 = line.split(",")
        rows.append((int(frame), float(o1), float(o2), float(o5), float(avg_l1)))
    if not rows:
        raise io.DataError(f"{metrics_path}: no metric rows")
    quarter = max(1, len(rows) // 4)
    tail = rows[-quarter:]
    summary = {
        "frames": len(rows),
        "o1_mean": sum(r[1] for r in rows) / len(rows),
        "avg_l1_mean": sum(r[4] for r in rows) / len(rows),
        "o1_final_quarter": sum(r[1] for r in tail) / len(tail),
        "avg_l1_final_quarter": sum(r[4] for r in tail) / len(tail),
        "o1_final": rows[-1][1],
        "avg_l1_final": rows[-1][4],
    }
    for key, value in summary.items():
        print(f"{key}: {io.fmt(value) if isinstance(value, float) else value}")
    if args.out is not None:
        io.write_json(args.out, {"run": str(run_dir), "summary": summary})
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "detect": _cmd_detect,
    "track": _cmd_track,
    "adapt": _cmd_adapt,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ValueError as e:  # config/flag validation
        print(f"error: {e}", file=sys.stderr)
        return 1
    except io.DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
