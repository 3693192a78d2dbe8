"""Composite self-supervised loss and the surrogate estimator's update rule.

The online loss is  L = L_D + alpha * L_P  where L_D is the confidence-
weighted mean L1 residual against the sparse pseudo ground truth and L_P is
the mean L1 photometric residual between each captured frame and the pattern
warped by the estimated disparity.  Both gradients are analytic (chain rule
through bilinear sampling, sign(0) = 0 at L1 kinks) and are checked against
central finite differences in the test suite.  One adaptation step descends
L plus a total-variation smoothness term on the parameter grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import DisparityMap, EstimatorParams, GrayImage, Pattern
from .detection import DotSet
from .supervision import SparseSupervision

log = logging.getLogger(__name__)


@dataclass
class AdaptationConfig:
    window: int = 8            # sliding-window length T
    lr: float = 1e-3           # paper default; px-scale (~0.5) suits the grid estimator
    alpha: float = 0.1         # photometric scale factor
    lam: float = 0.1           # total-variation smoothness weight
    d_min: float = 20.0
    d_max: float = 80.0
    seeds: int = 8
    steps_per_window: int = 1
    optimizer: str = "adam"    # "adam", "sgd" or "sign"
    smoothness_mode: str = "quadratic"  # "quadratic" (diffusing) or "tv"
    precond_levels: int = 5    # average-pyramid depth; 1 = raw gradient
    use_disparity_loss: bool = True
    use_photometric_loss: bool = True
    use_mask: bool = True
    corrupt_match_frac: float = 0.0  # ablation: fraction of matches shifted to a neighbor

    def __post_init__(self):
        if self.window < 1 or self.d_min >= self.d_max or self.seeds < 1:
            raise ValueError("bad adaptation config")
        if self.optimizer not in ("adam", "sgd", "sign"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.smoothness_mode not in ("quadratic", "tv"):
            raise ValueError(f"unknown smoothness mode {self.smoothness_mode!r}")


@dataclass
class WindowBuffer:
    """The last T frames with their detections and window supervision."""

    capacity: int
    frames: list[tuple[int, GrayImage, DotSet]] = field(default_factory=list)
    supervision: SparseSupervision | None = None
    predictions: dict[int, DisparityMap] = field(default_factory=dict)

    def push(self, t: int, img: GrayImage, dots: DotSet,
             prediction: DisparityMap | None = None) -> None:
        self.frames.append((t, img, dots))
        if prediction is not None:
            self.predictions[t] = prediction
        while len(self.frames) > self.capacity:
            old_t = self.frames.pop(0)[0]
            self.predictions.pop(old_t, None)

    @property
    def full(self) -> bool:
        return len(self.frames) == self.capacity

    @property
    def frame_ids(self) -> list[int]:
        return [t for t, _, _ in self.frames]


@dataclass
class LossReport:
    loss: float          # combined W*L_D + alpha*L_P
    loss_d: float
    loss_p: float
    grad: np.ndarray     # d(step objective)/d(grid), smoothness included
    n_points: int = 0
    mean_w: float = 0.0
    aborted: bool = False


def warp(pattern: Pattern, disp: DisparityMap) -> tuple[GrayImage, np.ndarray]:
    """Warp the pattern into camera space; returns (image, validity mask).

    out(x, y) samples the pattern at (x - d(x, y), y); pixels with invalid
    disparity or an out-of-bounds source are flagged invalid and excluded
    from the photometric loss.
    """
    out, valid = kernels.warp_pattern(pattern.image.data, disp.values, disp.valid)
    return GrayImage(out), valid


def loss_photometric(pattern: Pattern, frames: list[GrayImage],
                     disps: list[DisparityMap]) -> tuple[float, list[np.ndarray]]:
    """Sum over the window of mean-|I - warp(P, D)| plus per-frame gradients."""
    if len(frames) != len(disps):
        raise ValueError("frames and disparities must align")
    total = 0.0
    grads = []
    for img, disp in zip(frames, disps):
        s, n, g = kernels.photometric_term(img.data, pattern.image.data,
                                           disp.values, disp.valid)
        if n > 0:
            total += s / n
            g = g / n
        grads.append(g)
    return total, grads


def loss_disparity(disps: list[DisparityMap], sup: SparseSupervision,
                   frame_ids: list[int]) -> tuple[float, list[np.ndarray], float]:
    """Confidence-weighted mean L1 against the sparse pseudo ground truth.

    Normalized by the window's total weight so the step size is insensitive
    to dot density; returns (value, per-frame gradients, weight sum).
    """
    if len(disps) != len(frame_ids):
        raise ValueError("disparities and frame ids must align")
    num = 0.0
    wsum = 0.0
    raw = []
    for disp, t in zip(disps, frame_ids):
        fp = sup.frames.get(t)
        if fp is None or len(fp.xs) == 0:
            raw.append(np.zeros_like(disp.values))
            continue
        ws, wt, g, _ = kernels.sparse_l1_term(disp.values, fp.xs, fp.ys,
                                              fp.d_pgt, fp.w)
        num += ws
        wsum += wt
        raw.append(g)
    if wsum <= 0.0:
        return 0.0, [np.zeros_like(g) for g in raw], 0.0
    return num / wsum, [g / wsum for g in raw], wsum


def smoothness(grid: np.ndarray, mode: str = "quadratic") -> tuple[float, np.ndarray]:
    """Spatial regularizer on the grid: mean squared or mean absolute diffs.

    "quadratic" (default) gives a Laplacian gradient that diffuses sparse
    corrections across untextured regions; "tv" is the anisotropic total
    variation subgradient, which preserves plateaus instead of moving them.
    """
    if mode == "tv":
        total, n_terms, grad = kernels.tv_term(grid)
    else:
        total, n_terms, grad = kernels.quad_smooth_term(grid)
    if n_terms == 0:
        return 0.0, grad
    return total / n_terms, grad / n_terms


def pyramid_precondition(grad: np.ndarray, levels: int) -> np.ndarray:
    """Multiscale preconditioning: add box-averaged copies of the gradient.

    Sparse residual gradients cannot move the untextured pixels between dots
    on their own (the photometric basin is narrow and smoothness only acts
    locally), so the update direction is summed over an average pyramid:
    coarse levels move whole regions coherently, the way a convolutional
    estimator's shared weights would.  The operator is a sum of terms
    down_k^T down_k, hence positive semi-definite: preconditioned steps are
    still descent steps.
    """
    out = grad.copy()
    cur = grad
    for _ in range(max(0, levels - 1)):
        h, w = cur.shape
        if h < 2 or w < 2:
            break
        ph, pw = h + (h & 1), w + (w & 1)
        if (ph, pw) != (h, w):
            cur = np.pad(cur, ((0, ph - h), (0, pw - w)), mode="edge")
        cur = cur.reshape(ph // 2, 2, pw // 2, 2).mean(axis=(1, 3))
        full = cur
        while full.shape[0] < out.shape[0] or full.shape[1] < out.shape[1]:
            full = np.repeat(np.repeat(full, 2, axis=0), 2, axis=1)
        out += full[:out.shape[0], :out.shape[1]]
    return out


class GridOptimizer:
    """One-step first-order updates for the parameter grid.

    "sgd" takes the raw subgradient step lr * g.  "sign" moves every pixel
    with a nonzero gradient by exactly lr in the descent direction (the
    fixed-step-length subgradient method, natural for piecewise-linear L1
    objectives whose parameters are pixel disparities).  "adam" rescales per
    parameter with moment estimates.
    """

    def __init__(self, mode: str = "adam", beta1: float = 0.8,
                 beta2: float = 0.95, eps: float = 1e-8):
        self.mode = mode
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, grid: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if self.mode == "sgd":
            return grid - lr * grad
        if self.mode == "sign":
            return grid - lr * np.sign(grad)
        if self.m is None:
            self.m = np.zeros_like(grid)
            self.v = np.zeros_like(grid)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return grid - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adapt_step(params: EstimatorParams, buffer: WindowBuffer,
               cfg: AdaptationConfig, pattern: Pattern,
               optimizer: GridOptimizer | None = None
               ) -> tuple[EstimatorParams, LossReport]:
    """One gradient step on the window objective, applied to the grid.

    The same current grid predicts every window frame (the surrogate has no
    per-frame state), so the per-frame gradients accumulate onto it.  A
    non-finite loss or gradient aborts the step and leaves the parameters
    unchanged.
    """
    if not buffer.full:
        raise ValueError("adapt_step needs a full window buffer")
    if optimizer is None:
        optimizer = GridOptimizer(cfg.optimizer)
    grid = params.grid
    pred = DisparityMap(values=grid, valid=np.ones(grid.shape, dtype=bool))
    disps = [pred] * len(buffer.frames)
    frame_ids = buffer.frame_ids

    l_d, n_pts, mean_w, wsum = 0.0, 0, 0.0, 0.0
    grad = np.zeros_like(grid)
    sup = buffer.supervision
    if cfg.use_disparity_loss and sup is not None and sup.n_points > 0:
        l_d, grads_d, wsum = loss_disparity(disps, sup, frame_ids)
        for g in grads_d:
            grad += g
        n_pts = sup.n_points
        mean_w = sup.mean_w

    l_p = 0.0
    if cfg.use_photometric_loss and cfg.alpha != 0.0:
        imgs = [img for _, img, _ in buffer.frames]
        l_p, grads_p = loss_photometric(pattern, imgs, disps)
        for g in grads_p:
            grad += cfg.alpha * g

    smooth_val, g_smooth = smoothness(grid, cfg.smoothness_mode)
    grad += params.smoothness * g_smooth

    loss = l_d + cfg.alpha * l_p
    if not (np.isfinite(loss) and np.isfinite(smooth_val)
            and np.all(np.isfinite(grad))):
        log.warning("non-finite loss at window ending %d; step aborted",
                    frame_ids[-1] if frame_ids else -1)
        return params, LossReport(loss=float(loss), loss_d=l_d, loss_p=l_p,
                                  grad=grad, n_points=n_pts, mean_w=mean_w,
                                  aborted=True)

    new_params = params
    if cfg.lr != 0.0:  # lr == 0 means frozen: never touch the grid
        direction = pyramid_precondition(grad, cfg.precond_levels)
        new_grid = optimizer.step(grid, direction, cfg.lr)
        np.clip(new_grid, cfg.d_min, cfg.d_max, out=new_grid)
        new_params = EstimatorParams(grid=new_grid, smoothness=params.smoothness)
    return new_params, LossReport(loss=loss, loss_d=l_d, loss_p=l_p, grad=grad,
                                  n_points=n_pts, mean_w=mean_w)


# ---------------------------------------------------------------------------
# Evaluation metrics


@dataclass
class MetricsRow:
    frame: int
    o1: float      # % of pixels with |error| > 1 px
    o2: float
    o5: float
    avg_l1: float


def compute_metrics(pred: DisparityMap, gt: DisparityMap,
                    frame: int) -> MetricsRow | None:
    """o(t) percentages and mean L1 over pixels valid in both maps."""
    mask = pred.valid & gt.valid
    if not mask.any():
        return None
    err = np.abs(pred.values[mask] - gt.values[mask])
    return MetricsRow(frame=frame,
                      o1=100.0 * float((err > 1.0).mean()),
                      o2=100.0 * float((err > 2.0).mean()),
                      o5=100.0 * float((err > 5.0).mean()),
                      avg_l1=float(err.mean()))
