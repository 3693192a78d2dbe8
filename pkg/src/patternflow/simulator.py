"""Synthetic rectified structured-light sequences with exact ground truth.

Scenes are defined in projector space: each patch carries an analytic
disparity field d(u, v, t) (affine plus a drifting sinusoid), so the camera
position of a dot projected from (u, v) is closed-form, x = u + d(u, v, t).
Dense camera-space ground truth comes from inverting the monotone forward
map u -> u + d(u, v, t) row by row on a fine grid; no per-pixel iteration.

Occlusion: where patches overlap, the larger disparity (nearer surface)
wins, both for ray ownership and for camera-space coverage.  To keep the
truth/detection correspondence exact at desk scale, the renderer omits dots
that would blend into a single blob (closer than `merge_radius` in camera
space) or whose center sits within `border_margin` of the frame edge; such
dots appear neither in the frames nor in the emitted flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, kernels
from .core import DisparityMap, GrayImage, Pattern

_FINE_STEP = 0.0625  # projector-space sampling step for the row inverse


@dataclass
class ScenePatch:
    """Axis-aligned projector-space rectangle with an analytic disparity field.

    d(u, v, t) = base + base_vel*t + slope_u*(u - uc) + slope_v*(v - vc)
                 + bump_amp * sin(2*pi*(u - uc - drift_u*t)/bump_wavelength)
                            * sin(2*pi*(v - vc - drift_v*t)/bump_wavelength)

    with (uc, vc) the rectangle center.  The drifting product sinusoid makes
    the field non-rigid: different pixels change disparity at different rates.
    """

    region: tuple[float, float, float, float]  # (u0, v0, u1, v1), closed
    base: float
    slope_u: float = 0.0
    slope_v: float = 0.0
    bump_amp: float = 0.0
    bump_wavelength: float = 32.0
    base_vel: float = 0.0
    drift_u: float = 0.0
    drift_v: float = 0.0

    def center(self) -> tuple[float, float]:
        u0, v0, u1, v1 = self.region
        return (u0 + u1) / 2.0, (v0 + v1) / 2.0

    def contains(self, u, v):
        u0, v0, u1, v1 = self.region
        return (u >= u0) & (u <= u1) & (v >= v0) & (v <= v1)

    def disparity(self, u, v, t: float):
        uc, vc = self.center()
        du = np.asarray(u, dtype=np.float64) - uc
        dv = np.asarray(v, dtype=np.float64) - vc
        k = 2.0 * math.pi / self.bump_wavelength
        bump = self.bump_amp * np.sin(k * (du - self.drift_u * t)) * np.sin(
            k * (dv - self.drift_v * t))
        return (self.base + self.base_vel * t
                + self.slope_u * du + self.slope_v * dv + bump)

    # conservative analytic bounds used by validation
    def _spatial_excursion(self) -> float:
        u0, v0, u1, v1 = self.region
        return (abs(self.slope_u) * (u1 - u0) / 2.0
                + abs(self.slope_v) * (v1 - v0) / 2.0 + abs(self.bump_amp))

    def max_du(self) -> float:
        """Bound on |dd/du|; must stay < 1 for an invertible forward map."""
        return abs(self.slope_u) + abs(self.bump_amp) * 2.0 * math.pi / self.bump_wavelength

    def max_step(self) -> float:
        """Bound on |d(u,v,t+1) - d(u,v,t)| anywhere in the patch."""
        k = 2.0 * math.pi / self.bump_wavelength
        return abs(self.base_vel) + abs(self.bump_amp) * k * (
            abs(self.drift_u) + abs(self.drift_v))


def validate_patches(patches: list[ScenePatch], n_frames: int,
                     d_min: float, d_max: float, v_max: float) -> None:
    """Check the scene invariants with conservative analytic bounds."""
    for i, p in enumerate(patches):
        exc = p._spatial_excursion()
        lo = p.base + min(0.0, p.base_vel * (n_frames - 1)) - exc
        hi = p.base + max(0.0, p.base_vel * (n_frames - 1)) + exc
        if lo < d_min or hi > d_max:
            raise ValueError(
                f"patch {i}: disparity range [{lo:.2f}, {hi:.2f}] exceeds "
                f"[{d_min}, {d_max}]")
        if p.max_step() > v_max:
            raise ValueError(
                f"patch {i}: per-frame disparity step {p.max_step():.3f} "
                f"exceeds v_max={v_max}")
        if p.max_du() >= 0.5:
            raise ValueError(
                f"patch {i}: |dd/du| bound {p.max_du():.3f} >= 0.5, forward "
                "map too steep to invert reliably")


def scene_preset(name: str, width: int = 128, height: int = 128,
                 d_min: float = 20.0, d_max: float = 80.0) -> list[ScenePatch]:
    """Built-in scenes.

    default  one full-frame non-rigid patch (drifting sinusoid), gentle motion
    static   the default shape, frozen in time
    layered  background plus a nearer foreground rectangle (occlusion)
    brisk    single patch with fast disparity sweep for tracker stress
    """
    full = (0.0, 0.0, float(width - 1), float(height - 1))
    if name in ("default", "static"):
        # Non-rigid but non-secular: the sinusoid drifts through the scene
        # (one full cycle every ~140 frames) while the mean level barely
        # moves, so an online estimator has to track shape, not a runaway.
        moving = name == "default"
        return [ScenePatch(region=full, base=d_min + 12.0,
                           slope_u=0.03, slope_v=0.02,
                           bump_amp=0.8, bump_wavelength=64.0,
                           drift_u=0.35 if moving else 0.0,
                           drift_v=0.2 if moving else 0.0)]
    if name == "layered":
        fg = (0.3 * (width - 1), 0.3 * (height - 1),
              0.7 * (width - 1), 0.7 * (height - 1))
        return [
            ScenePatch(region=full, base=d_min + 10.0, slope_u=0.02,
                       slope_v=0.01, bump_amp=0.5, bump_wavelength=48.0,
                       base_vel=0.01, drift_u=0.1),
            ScenePatch(region=fg, base=d_min + 25.0, slope_u=-0.02,
                       slope_v=0.02, bump_amp=0.6, bump_wavelength=32.0,
                       base_vel=-0.03, drift_u=0.3),
        ]
    if name == "brisk":
        return [ScenePatch(region=full, base=d_max - 5.0, slope_u=0.02,
                           slope_v=0.01, bump_amp=0.8, bump_wavelength=48.0,
                           base_vel=-0.8, drift_u=0.5)]
    raise ValueError(f"unknown scene preset {name!r}")


# ---------------------------------------------------------------------------
# Pattern generation


def _poisson_disk(rng: np.random.Generator, width: float, height: float,
                  radius: float, k: int = 60, fill_budget: int = 4000,
                  enough: int | None = None) -> np.ndarray:
    """Poisson-disk sampling on [0,width]x[0,height], packed near-maximally.

    Bridson growth with a tight candidate annulus [r, 1.1r] (tight annuli
    pack much denser than the classic [r, 2r]), then a dart-throwing pass
    that fills leftover gaps until `fill_budget` consecutive darts miss.
    """
    cell = radius / math.sqrt(2.0)
    gw = int(math.ceil(width / cell)) + 1
    gh = int(math.ceil(height / cell)) + 1
    grid = np.full((gh, gw), -1, dtype=np.int64)
    points: list[tuple[float, float]] = []

    def grid_idx(p):
        return int(p[1] / cell), int(p[0] / cell)

    def fits(p):
        gy, gx = grid_idx(p)
        for yy in range(max(gy - 2, 0), min(gy + 3, gh)):
            for xx in range(max(gx - 2, 0), min(gx + 3, gw)):
                j = grid[yy, xx]
                if j >= 0:
                    q = points[j]
                    if (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < radius * radius:
                        return False
        return True

    def push(p):
        points.append(p)
        gy, gx = grid_idx(p)
        grid[gy, gx] = len(points) - 1

    push((rng.uniform(0.0, width), rng.uniform(0.0, height)))
    active = [0]
    while active:
        pick = int(rng.integers(len(active)))
        base = points[active[pick]]
        for _ in range(k):
            ang = rng.uniform(0.0, 2.0 * math.pi)
            rad = radius * math.sqrt(rng.uniform(1.0, 1.21))
            cand = (base[0] + rad * math.cos(ang), base[1] + rad * math.sin(ang))
            if 0.0 <= cand[0] <= width and 0.0 <= cand[1] <= height and fits(cand):
                push(cand)
                active.append(len(points) - 1)
                break
        else:
            active[pick] = active[-1]
            active.pop()

    misses = 0
    while misses < fill_budget and (enough is None or len(points) < enough):
        cand = (rng.uniform(0.0, width), rng.uniform(0.0, height))
        if fits(cand):
            push(cand)
            misses = 0
        else:
            misses += 1
    return np.array(points, dtype=np.float64)


def render_pattern_image(dots: np.ndarray, width: int, height: int,
                         sigma_psf: float) -> GrayImage:
    """Render dot centers as clipped Gaussian splats (peak 1, truncated at 4 sigma)."""
    img = np.zeros((height, width), dtype=np.float64)
    if len(dots):
        kernels.splat_add(img, dots[:, 0], dots[:, 1], 1.0, sigma_psf,
                          4.0 * sigma_psf)
    return GrayImage(np.clip(img, 0.0, 1.0))


def generate_pattern(seed: int, dot_count: int, min_spacing: float,
                     width: int = 128, height: int = 128,
                     sigma_psf: float = 1.2) -> Pattern:
    """Poisson-disk dot layout rendered as Gaussian splats; deterministic per seed."""
    if dot_count < 1:
        raise ValueError("dot_count must be >= 1")
    if min_spacing <= 0:
        raise ValueError("min_spacing must be positive")
    rng = np.random.default_rng(seed)
    margin = 1.0
    best: np.ndarray | None = None
    for _ in range(8):  # bounded rejection: repack until the count fits
        pts = _poisson_disk(rng, width - 1 - 2 * margin,
                            height - 1 - 2 * margin, min_spacing,
                            enough=dot_count)
        if best is None or len(pts) > len(best):
            best = pts
        if len(best) >= dot_count:
            break
    if best is None or len(best) < dot_count:
        raise ValueError(
            f"cannot pack {dot_count} dots at spacing {min_spacing} in "
            f"{width}x{height}; achieved {len(best) if best is not None else 0}")
    pts = best + margin
    dots = pts[rng.permutation(len(pts))[:dot_count]]
    image = render_pattern_image(dots, width, height, sigma_psf)
    return Pattern(image=image, dots=dots, min_spacing=min_spacing)


# ---------------------------------------------------------------------------
# Sequence rendering


@dataclass
class GroundTruthBundle:
    """Frames, dense GT disparity, and the true multi-frame pattern flow.

    `flows` maps dot id to its visible camera positions [(t, x, y), ...];
    entries exist only for frames where that dot was actually rendered, so a
    mid-sequence gap splits the trajectory.
    """

    pattern: Pattern
    frames: list[GrayImage]
    disparity: list[DisparityMap]
    flows: dict[int, list[tuple[int, float, float]]]
    meta: dict = field(default_factory=dict)

    def visible_count(self, t: int) -> int:
        return sum(1 for pts in self.flows.values() for tk, _, _ in pts if tk == t)

    def links(self) -> list[tuple[int, int, tuple[float, float], tuple[float, float]]]:
        """All consecutive-frame links (dot_id, t, (x0, y0), (x1, y1))."""
        out = []
        for dot_id, pts in self.flows.items():
            for (t0, x0, y0), (t1, x1, y1) in zip(pts, pts[1:]):
                if t1 == t0 + 1:
                    out.append((dot_id, t0, (x0, y0), (x1, y1)))
        return out


def _row_inverse(patch: ScenePatch, v: float, t: float):
    """Fine forward map of one projector row: (camera x samples, projector u samples)."""
    u0, _, u1, _ = patch.region
    n = max(2, int(math.ceil((u1 - u0) / _FINE_STEP)) + 1)
    u_fine = np.linspace(u0, u1, n)
    x_fine = u_fine + patch.disparity(u_fine, v, t)
    return x_fine, u_fine


def _camera_disparity(patch: ScenePatch, x: float, v: float, t: float) -> float | None:
    """Disparity patch would produce at camera point (x, v), or None if uncovered."""
    u0, v0, u1, v1 = patch.region
    if not (v0 <= v <= v1):
        return None
    x_fine, u_fine = _row_inverse(patch, v, t)
    if not (x_fine[0] <= x <= x_fine[-1]):
        return None
    u = float(np.interp(x, x_fine, u_fine))
    return x - u


def _dense_gt(patches: list[ScenePatch], width: int, height: int,
              t: float) -> DisparityMap:
    gt = np.full((height, width), -np.inf)
    for patch in patches:
        u0, v0, u1, v1 = patch.region
        rows = np.arange(max(0, math.ceil(v0)), min(height - 1, math.floor(v1)) + 1)
        if rows.size == 0:
            continue
        n = max(2, int(math.ceil((u1 - u0) / _FINE_STEP)) + 1)
        u_fine = np.linspace(u0, u1, n)
        d_all = patch.disparity(u_fine[None, :], rows[:, None].astype(float), t)
        x_all = u_fine[None, :] + d_all
        for i, v in enumerate(rows):
            x_fine = x_all[i]
            lo = max(0, int(math.ceil(x_fine[0] - 1e-9)))
            hi = min(width - 1, int(math.floor(x_fine[-1] + 1e-9)))
            if lo > hi:
                continue
            xs = np.arange(lo, hi + 1)
            u_at = np.interp(xs, x_fine, u_fine)
            row = gt[v, lo:hi + 1]  # contiguous view, writable
            np.maximum(row, xs - u_at, out=row)
    valid = np.isfinite(gt)
    return DisparityMap(values=np.where(valid, gt, 0.0), valid=valid)


def render_sequence(pattern: Pattern, patches: list[ScenePatch], n_frames: int,
                    noise: float = 0.0, dropout: float = 0.0, seed: int = 0,
                    width: int | None = None, height: int | None = None,
                    sigma_psf: float = 1.2, d_min: float = 20.0,
                    d_max: float = 80.0, v_max: float = 3.0,
                    merge_radius: float = 5.0,
                    border_margin: float = 2.5) -> GroundTruthBundle:
    """Render a sequence and its exact ground truth.

    Per frame: every pattern dot owned by a patch (larger disparity wins on
    overlap) lands at x = u + d(u, v, t); dots that are occluded by a nearer
    patch at that camera position, fall too close to the frame border or to
    another visible dot, or are dropped out, are omitted from both the frame
    and the flow.  Dense GT evaluates the owning patch at each covered
    camera pixel.  Gaussian pixel noise of the given sigma is added last.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    validate_patches(patches, n_frames, d_min, d_max, v_max)
    width = pattern.width if width is None else width
    height = pattern.height if height is None else height
    rng = np.random.default_rng(seed)

    frames: list[GrayImage] = []
    disparity: list[DisparityMap] = []
    flows: dict[int, list[tuple[int, float, float]]] = {}

    dots = pattern.dots
    for t in range(n_frames):
        disparity.append(_dense_gt(patches, width, height, float(t)))

        # ray ownership and camera positions
        vis_ids: list[int] = []
        vis_xy: list[tuple[float, float]] = []
        for m in range(len(dots)):
            u, v = dots[m]
            best = None
            for pi, patch in enumerate(patches):
                if patch.contains(u, v):
                    d = float(patch.disparity(u, v, float(t)))
                    if best is None or d > best[1]:
                        best = (pi, d)
            if best is None:
                continue
            owner, d_own = best
            x = u + d_own
            if not (border_margin <= x <= width - 1 - border_margin
                    and border_margin <= v <= height - 1 - border_margin):
                continue
            occluded = False
            for pi, patch in enumerate(patches):
                if pi == owner:
                    continue
                dq = _camera_disparity(patch, x, v, float(t))
                if dq is not None and dq > d_own + 1e-9:
                    occluded = True
                    break
            if not occluded:
                vis_ids.append(m)
                vis_xy.append((x, v))

        # cull pairs that would merge into one blob
        keep = np.ones(len(vis_ids), dtype=bool)
        pos = np.array(vis_xy, dtype=np.float64).reshape(-1, 2)
        for i in range(len(vis_ids)):
            for j in range(i + 1, len(vis_ids)):
                if ((pos[i, 0] - pos[j, 0]) ** 2 + (pos[i, 1] - pos[j, 1]) ** 2
                        < merge_radius * merge_radius):
                    keep[i] = keep[j] = False

        if dropout > 0.0 and len(vis_ids):
            keep &= rng.random(len(vis_ids)) >= dropout

        img = np.zeros((height, width), dtype=np.float64)
        kept_xy = pos[keep]
        if len(kept_xy):
            kernels.splat_add(img, kept_xy[:, 0], kept_xy[:, 1], 1.0,
                              sigma_psf, 4.0 * sigma_psf)
        np.clip(img, 0.0, 1.0, out=img)
        if noise > 0.0:
            img = np.clip(img + rng.normal(0.0, noise, img.shape), 0.0, 1.0)
        frames.append(GrayImage(img))

        for m, (x, y) in ((vis_ids[i], vis_xy[i]) for i in range(len(vis_ids))
                          if keep[i]):
            flows.setdefault(m, []).append((t, float(x), float(y)))

    meta = {"width": width, "height": height, "frames": n_frames, "seed": seed,
            "noise": noise, "dropout": dropout, "d_min": d_min, "d_max": d_max,
            "v_max": v_max, "sigma_psf": sigma_psf,
            "merge_radius": merge_radius, "border_margin": border_margin,
            "dot_count": len(dots), "min_spacing": pattern.min_spacing}
    return GroundTruthBundle(pattern=pattern, frames=frames,
                             disparity=disparity, flows=flows, meta=meta)


def write_dataset(bundle: GroundTruthBundle, out_dir: Path | str) -> Path:
    """Emit the dataset directory layout described in `patternflow.io`."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    io.write_pgm(out / "pattern.pgm", bundle.pattern.image)
    io.write_dots_csv(out / "pattern_dots.csv", bundle.pattern.dots)
    for t, frame in enumerate(bundle.frames):
        io.write_pgm(out / "frames" / f"{t:05d}.pgm", frame)
    for t, disp in enumerate(bundle.disparity):
        io.write_pfm(out / "gt" / f"disp_{t:05d}.pfm", disp)
    io.write_flow_jsonl(out / "gt" / "flow.jsonl", bundle.flows)
    io.write_json(out / "meta.json", bundle.meta)
    return out
