"""File formats and dataset-directory layout.

Images travel as binary PGM (P5, 8- or 16-bit big-endian samples, normalized
to [0, 1] on load).  Disparity maps travel as single-channel PFM with scale
header -1.0 (little-endian), invalid pixels stored as NaN.  Dot lists are
CSV, trajectories are JSON lines.  All floating-point text output uses 6
significant digits.

A simulator dataset directory looks like:

    pattern.pgm
    pattern_dots.csv          id,u,v
    frames/00000.pgm ...
    gt/disp_00000.pfm ...     (optional for real captures)
    gt/flow.jsonl             (optional) one trajectory per line
    meta.json
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DisparityMap, GrayImage, Pattern


class DataError(Exception):
    """A dataset file is missing or malformed; the message names the path."""


def fmt(x: float) -> str:
    """Format a float with 6 significant digits."""
    return f"{x:.6g}"


def round6(obj):
    """Recursively round floats in a JSON-ready structure to 6 significant digits."""
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round6(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path: Path | str, img: GrayImage, maxval: int = 65535) -> None:
    """Write a binary PGM; 16-bit big-endian by default to keep subpixel splats."""
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in [1, 65535]")
    quant = np.rint(img.data * maxval)
    data = quant.astype(">u2") if maxval > 255 else quant.astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii"))
        f.write(data.tobytes())


def _pgm_tokens(raw: bytes, path):
    """Yield header tokens, skipping '#' comments, then the payload offset."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        if pos >= len(raw):
            raise DataError(f"{path}: truncated PGM header")
        c = raw[pos:pos + 1]
        if c == b"#":
            pos = raw.find(b"\n", pos)
            if pos < 0:
                raise DataError(f"{path}: truncated PGM comment")
            pos += 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    return tokens, pos + 1  # single whitespace byte separates header and payload


def read_pgm(path: Path | str) -> GrayImage:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    tokens, offset = _pgm_tokens(raw, path)
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise DataError(f"{path}: bad PGM header") from e
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = w * h
    if len(raw) - offset < count * dtype.itemsize:
        raise DataError(f"{path}: truncated PGM payload")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    return GrayImage(data.reshape(h, w).astype(np.float64) / maxval)


# ---------------------------------------------------------------------------
# PFM


def write_pfm(path: Path | str, disp: DisparityMap) -> None:
    """Single-channel PFM, scale -1.0 (little-endian); invalid pixels as NaN."""
    values = np.where(disp.valid, disp.values, np.nan).astype("<f4")
    with open(path, "wb") as f:
        f.write(f"Pf\n{disp.width} {disp.height}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(values).tobytes())  # PFM rows run bottom to top


def read_pfm(path: Path | str) -> DisparityMap:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    tokens, offset = _pgm_tokens(raw, path)
    if tokens[0] != b"Pf":
        raise DataError(f"{path}: not a single-channel PFM (magic {tokens[0]!r})")
    try:
        w, h, scale = int(tokens[1]), int(tokens[2]), float(tokens[3])
    except ValueError as e:
        raise DataError(f"{path}: bad PFM header") from e
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    if len(raw) - offset < w * h * dtype.itemsize:
        raise DataError(f"{path}: truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=offset)
    values = np.flipud(data.reshape(h, w)).astype(np.float64)
    valid = np.isfinite(values)
    return DisparityMap(values=np.where(valid, values, 0.0), valid=valid)


# ---------------------------------------------------------------------------
# CSV / JSONL


def write_dots_csv(path: Path | str, dots: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("id,u,v\n")
        for i, (u, v) in enumerate(np.asarray(dots, dtype=np.float64)):
            f.write(f"{i},{fmt(u)},{fmt(v)}\n")


def read_dots_csv(path: Path | str) -> np.ndarray:
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    if not lines or lines[0].strip() != "id,u,v":
        raise DataError(f"{path}: expected header 'id,u,v'")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            _, u, v = line.split(",")
            out.append((float(u), float(v)))
        except ValueError as e:
            raise DataError(f"{path}: bad dot row {line!r}") from e
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def write_flow_jsonl(path: Path | str, flows: dict[int, list[tuple[int, float, float]]],
                     alive: dict[int, bool] | None = None) -> None:
    """One JSON object per trajectory: {"dot_id": id, "points": [[t, x, y], ...]}.

    Tracker dumps reuse the same schema with the trajectory id in "dot_id"
    plus an "alive" flag, so simulator truth and recovered tracks diff
    directly.
    """
    with open(path, "w", encoding="ascii") as f:
        for key in sorted(flows):
            obj = {"dot_id": int(key),
                   "points": [[int(t), float(x), float(y)] for t, x, y in flows[key]]}
            if alive is not None:
                obj["alive"] = bool(alive[key])
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def read_flow_jsonl(path: Path | str) -> dict[int, list[tuple[int, float, float]]]:
    path = Path(path)
    flows: dict[int, list[tuple[int, float, float]]] = {}
    try:
        text = path.read_text(encoding="ascii")
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            flows[int(obj["dot_id"])] = [(int(t), float(x), float(y))
                                         for t, x, y in obj["points"]]
        except (ValueError, KeyError, TypeError) as e:
            raise DataError(f"{path}: bad trajectory line {line!r}") from e
    return flows


def write_json(path: Path | str, obj: dict) -> None:
    with open(path, "w", encoding="ascii") as f:
        json.dump(round6(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Path | str) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="ascii"))
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e


# ---------------------------------------------------------------------------
# Dataset directory


@dataclass
class Dataset:
    """Lazy view of a dataset directory (ground truth optional)."""

    root: Path
    meta: dict
    pattern: Pattern
    frame_paths: list[Path]
    gt_paths: list[Path] | None

    @property
    def n_frames(self) -> int:
        return len(self.frame_paths)

    def frame(self, t: int) -> GrayImage:
        return read_pgm(self.frame_paths[t])

    def gt(self, t: int) -> DisparityMap | None:
        if self.gt_paths is None:
            return None
        return read_pfm(self.gt_paths[t])

    def flows(self) -> dict[int, list[tuple[int, float, float]]] | None:
        p = self.root / "gt" / "flow.jsonl"
        return read_flow_jsonl(p) if p.exists() else None


def load_dataset(root: Path | str) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset directory not found")
    meta = read_json(root / "meta.json")
    pattern_img = read_pgm(root / "pattern.pgm")
    dots = read_dots_csv(root / "pattern_dots.csv")
    pattern = Pattern(image=pattern_img, dots=dots,
                      min_spacing=meta.get("min_spacing"))
    frames_dir = root / "frames"
    frame_paths = sorted(frames_dir.glob("*.pgm"))
    if not frame_paths:
        raise DataError(f"{frames_dir}: no frames found")
    gt_paths = sorted((root / "gt").glob("disp_*.pfm"))
    if gt_paths and len(gt_paths) != len(frame_paths):
        raise DataError(f"{root / 'gt'}: {len(gt_paths)} disparity maps for "
                        f"{len(frame_paths)} frames")
    return Dataset(root=root, meta=meta, pattern=pattern,
                   frame_paths=frame_paths, gt_paths=gt_paths or None)
