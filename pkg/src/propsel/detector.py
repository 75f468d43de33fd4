"""Linear-SVM object detector: initial training, hard-negative mining, Platt
calibration, dense multiscale scanning, and warm-start online updates.

The detector always works in a rectified frame: training rotates the first
frame so the annotated box is axis-aligned, and every scan rectifies by the
same angle before sliding windows. Scanning shares one resampled gradient
grid per scale and reads window cell histograms out of integral images, so a
dense 2-pixel step stays cheap.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import RotatedBox, fraction_inside_frame, normalize_angle
from .hog import (
    HogTemplate,
    cell_histograms,
    descriptors_for_windows,
    features_from_histograms,
    make_template,
    orientation_bins,
)
from .imaging import Image, bilinear_sample, rectify
from .svm import fit_platt, platt_probability, solve_linear_svm

MODEL_MAGIC = b"PSTM1"


@dataclass(frozen=True)
class DetectorConfig:
    svm_c: float = 0.1
    hard_neg_rounds: int = 3
    neg_overlap_max: float = 0.5
    scales: tuple[float, ...] = (0.980, 0.990, 0.995, 1.000, 1.005, 1.010, 1.020)
    scan_step: float = 2.0
    top_k: int = 5
    jitter_count: int = 100
    positive_cap: int = 50
    search_pad: float = 2.5
    # artifact knobs (not from the method description)
    rng_seed: int = 42
    base_negatives: int = 200
    mining_cap: int = 100
    nms_iou: float = 0.7
    hard_negative_margin: float = -1.0


@dataclass
class Detection:
    box: RotatedBox
    raw_margin: float
    score: float


@dataclass
class DetectorModel:
    weights: np.ndarray
    bias: float
    platt_a: float
    platt_b: float
    template: HogTemplate
    base_angle: float
    positives: list[np.ndarray]
    pos_alpha: list[float]
    config: DetectorConfig
    update_count: int = 0

    def margin_of(self, descriptor: np.ndarray) -> float:
        return float(descriptor @ self.weights + self.bias)

    def score_of(self, margin: float) -> float:
        return platt_probability(margin, self.platt_a, self.platt_b)


class TrainingError(ValueError):
    """Raised when a frame/box pair cannot produce a valid training set."""


def _axis_aligned_iou(windows: np.ndarray, ref: tuple[float, float, float, float]) -> np.ndarray:
    """IoU of axis-aligned (cx, cy, w, h) windows against one reference window."""
    rx, ry, rw, rh = ref
    x1 = np.maximum(windows[:, 0] - 0.5 * windows[:, 2], rx - 0.5 * rw)
    x2 = np.minimum(windows[:, 0] + 0.5 * windows[:, 2], rx + 0.5 * rw)
    y1 = np.maximum(windows[:, 1] - 0.5 * windows[:, 3], ry - 0.5 * rh)
    y2 = np.minimum(windows[:, 1] + 0.5 * windows[:, 3], ry + 0.5 * rh)
    inter = np.clip(x2 - x1, 0.0, None) * np.clip(y2 - y1, 0.0, None)
    union = windows[:, 2] * windows[:, 3] + rw * rh - inter
    return inter / np.maximum(union, 1e-12)


def _rectified_frame(frame: Image, angle: float, center: tuple[float, float]) -> np.ndarray:
    return rectify(frame, normalize_angle(-angle), center).pixels


def _dense_windows(
    weights: np.ndarray,
    bias: float,
    tmpl: HogTemplate,
    pixels: np.ndarray,
    base_size: tuple[float, float],
    scales,
    region: tuple[float, float, float, float],
    step: float,
):
    """Margins for dense windows at every scale over a rectified frame.

    Windows of size base_size * scale are placed on a grid equivalent to a
    `step`-pixel raster inside `region`. Returns a dict of flat arrays:
    margin, cx, cy, w, h, scale_index (all in rectified-frame coordinates).
    """
    tpw, tph = tmpl.pixel_w, tmpl.pixel_h
    x0, y0, x1, y1 = region
    out = {k: [] for k in ("margin", "cx", "cy", "w", "h", "scale")}
    for s_idx, s in enumerate(scales):
        win_w = base_size[0] * s
        win_h = base_size[1] * s
        fx = tpw / win_w
        fy = tph / win_h
        grid_w = max(int(np.floor((x1 - x0) * fx)), tpw)
        grid_h = max(int(np.floor((y1 - y0) * fy)), tph)
        gxs = x0 + (np.arange(grid_w, dtype=np.float64) + 0.5) / fx
        gys = y0 + (np.arange(grid_h, dtype=np.float64) + 0.5) / fy
        grid = bilinear_sample(pixels, *np.meshgrid(gxs, gys))
        bins, mag = orientation_bins(grid)
        per_bin = np.bincount(
            (np.arange(grid.size, dtype=np.int64) * 18 + bins.ravel()),
            weights=mag.ravel(),
            minlength=grid.size * 18,
        ).reshape(grid_h, grid_w, 18)
        integral = np.zeros((grid_h + 1, grid_w + 1, 18))
        integral[1:, 1:] = np.cumsum(np.cumsum(per_bin, axis=0), axis=1)
        cs = tmpl.cell_size
        boxsum = (
            integral[cs:, cs:]
            - integral[:-cs, cs:]
            - integral[cs:, :-cs]
            + integral[:-cs, :-cs]
        )
        max_ox = grid_w - tpw
        max_oy = grid_h - tph
        sx = max(step * fx, 1.0)
        sy = max(step * fy, 1.0)
        oxs = np.unique(np.clip(np.round(np.arange(0.0, max_ox + 0.5 * sx, sx)), 0, max_ox)).astype(int)
        oys = np.unique(np.clip(np.round(np.arange(0.0, max_oy + 0.5 * sy, sy)), 0, max_oy)).astype(int)
        cell_x = cs * np.arange(tmpl.cells_x)
        cell_y = cs * np.arange(tmpl.cells_y)
        iy = (oys[:, None] + cell_y[None, :])[:, None, :, None]
        ix = (oxs[:, None] + cell_x[None, :])[None, :, None, :]
        hist = boxsum[iy, ix, :]
        feats = features_from_histograms(hist).reshape(len(oys) * len(oxs), tmpl.length)
        margins = feats @ weights + bias
        centers_x = x0 + (oxs + 0.5 * tpw) / fx
        centers_y = y0 + (oys + 0.5 * tph) / fy
        cxg, cyg = np.meshgrid(centers_x, centers_y)
        out["margin"].append(margins)
        out["cx"].append(cxg.ravel())
        out["cy"].append(cyg.ravel())
        out["w"].append(np.full(margins.size, win_w))
        out["h"].append(np.full(margins.size, win_h))
        out["scale"].append(np.full(margins.size, s_idx))
    return {k: np.concatenate(v) for k, v in out.items()}


def _sample_windows_below_iou(
    rng: np.random.Generator,
    frame_shape: tuple[int, int],
    ref: tuple[float, float, float, float],
    max_iou: float,
    count: int,
) -> np.ndarray:
    """Random windows of the reference size whose overlap with it is < max_iou."""
    height, width = frame_shape
    _, _, w, h = ref
    collected = []
    total = 0
    for _ in range(50):
        cx = rng.uniform(0.5 * w, width - 0.5 * w, size=4 * count)
        cy = rng.uniform(0.5 * h, height - 0.5 * h, size=4 * count)
        cand = np.stack([cx, cy, np.full_like(cx, w), np.full_like(cx, h)], axis=1)
        keep = cand[_axis_aligned_iou(cand, ref) < max_iou]
        if len(keep):
            collected.append(keep)
            total += len(keep)
        if total >= count:
            break
    if not collected:
        return np.zeros((0, 4))
    return np.concatenate(collected)[:count]


def _train_svm(model_like, X_pos, pos_alpha, X_neg, c, warm=True):
    X = np.concatenate([X_pos, X_neg], axis=0)
    X = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)  # bias feature
    y = np.concatenate([np.ones(len(X_pos)), -np.ones(len(X_neg))])
    alpha0 = None
    if warm and pos_alpha is not None:
        alpha0 = np.concatenate([np.asarray(pos_alpha, float), np.zeros(len(X_neg))])
    sol = solve_linear_svm(X, y, c, alpha0=alpha0)
    return sol.weights[:-1], float(sol.weights[-1]), sol.alpha[: len(X_pos)], sol


def _calibrate(
    pixels: np.ndarray,
    tmpl: HogTemplate,
    weights: np.ndarray,
    bias: float,
    box: tuple[float, float, float, float],
    rng: np.random.Generator,
    count: int,
) -> tuple[float, float]:
    """Platt scaling from jittered positives and low-overlap negatives."""
    cx, cy, w, h = box
    dx = rng.uniform(-0.05 * w, 0.05 * w, size=count)
    dy = rng.uniform(-0.05 * h, 0.05 * h, size=count)
    sc = rng.uniform(0.95, 1.05, size=count)
    pos_windows = np.stack([cx + dx, cy + dy, w * sc, h * sc], axis=1)
    neg_windows = _sample_windows_below_iou(rng, pixels.shape, box, 0.3, count)
    if len(neg_windows) == 0:
        raise TrainingError("no calibration negatives available")
    windows = np.concatenate([pos_windows, neg_windows])
    desc = descriptors_for_windows(pixels, windows, tmpl)
    margins = desc @ weights + bias
    labels = np.concatenate([np.ones(len(pos_windows)), -np.ones(len(neg_windows))])
    return fit_platt(margins, labels)


def _mine_hard_negatives(
    weights,
    bias,
    tmpl,
    pixels,
    gt_window,
    cfg: DetectorConfig,
    region,
) -> np.ndarray:
    dense = _dense_windows(
        weights, bias, tmpl, pixels, (gt_window[2], gt_window[3]), cfg.scales, region, cfg.scan_step
    )
    windows = np.stack([dense["cx"], dense["cy"], dense["w"], dense["h"]], axis=1)
    mask = (dense["margin"] > cfg.hard_negative_margin) & (
        _axis_aligned_iou(windows, gt_window) < cfg.neg_overlap_max
    )
    if not mask.any():
        return np.zeros((0, 4))
    order = np.argsort(-dense["margin"][mask], kind="stable")[: cfg.mining_cap]
    return windows[mask][order]


def train_initial(frame: Image, gt: RotatedBox, cfg: DetectorConfig | None = None) -> DetectorModel:
    """Train from the single annotated box plus negatives from the whole frame."""
    cfg = cfg or DetectorConfig()
    if fraction_inside_frame(gt, frame.width, frame.height) < 0.5:
        raise TrainingError("ground-truth box lies mostly outside the frame")
    base_angle = gt.angle
    pixels = _rectified_frame(frame, base_angle, gt.center)
    tmpl = make_template(gt.w, gt.h)
    gt_window = (gt.cx, gt.cy, gt.w, gt.h)
    rng = np.random.default_rng(cfg.rng_seed)

    pos_desc = descriptors_for_windows(pixels, np.array([gt_window]), tmpl)
    neg_windows = _sample_windows_below_iou(
        rng, pixels.shape, gt_window, cfg.neg_overlap_max, cfg.base_negatives
    )
    if len(neg_windows) < 10:
        raise TrainingError(f"only {len(neg_windows)} valid negatives available")
    neg_desc = descriptors_for_windows(pixels, neg_windows, tmpl)

    weights, bias, pos_alpha, _ = _train_svm(None, pos_desc, None, neg_desc, cfg.svm_c, warm=False)
    for _ in range(cfg.hard_neg_rounds):
        hard = _mine_hard_negatives(
            weights, bias, tmpl, pixels, gt_window, cfg,
            (0.0, 0.0, float(frame.width), float(frame.height)),
        )
        if len(hard) == 0:
            break
        neg_desc = np.concatenate([neg_desc, descriptors_for_windows(pixels, hard, tmpl)])
        weights, bias, pos_alpha, _ = _train_svm(
            None, pos_desc, pos_alpha, neg_desc, cfg.svm_c
        )

    platt_a, platt_b = _calibrate(pixels, tmpl, weights, bias, gt_window, rng, cfg.jitter_count)
    return DetectorModel(
        weights=weights,
        bias=bias,
        platt_a=platt_a,
        platt_b=platt_b,
        template=tmpl,
        base_angle=base_angle,
        positives=[pos_desc[0]],
        pos_alpha=[float(pos_alpha[0])],
        config=cfg,
        update_count=0,
    )


def default_search_region(
    prev_box: RotatedBox, pad: float
) -> tuple[float, float, float, float]:
    hw = 0.5 * pad * prev_box.w
    hh = 0.5 * pad * prev_box.h
    return (prev_box.cx - hw, prev_box.cy - hh, prev_box.cx + hw, prev_box.cy + hh)


def scan(model: DetectorModel, frame: Image, prev_box: RotatedBox) -> list[Detection]:
    """Top-k detections around the previous box, NMS-pruned, Platt-scored."""
    cfg = model.config
    region = default_search_region(prev_box, cfg.search_pad)
    if (
        region[2] <= -0.5
        or region[3] <= -0.5
        or region[0] >= frame.width - 0.5
        or region[1] >= frame.height - 0.5
    ):
        raise ValueError("search region lies fully outside the frame")
    pixels = _rectified_frame(frame, model.base_angle, prev_box.center)
    dense = _dense_windows(
        model.weights,
        model.bias,
        model.template,
        pixels,
        (prev_box.w, prev_box.h),
        cfg.scales,
        region,
        cfg.scan_step,
    )
    order = np.lexsort((dense["scale"], dense["cy"], dense["cx"], -dense["margin"]))
    kept: list[int] = []
    windows = np.stack([dense["cx"], dense["cy"], dense["w"], dense["h"]], axis=1)
    for idx in order:
        if len(kept) >= cfg.top_k:
            break
        if kept:
            ious = _axis_aligned_iou(windows[kept], tuple(windows[idx]))
            if np.any(ious >= cfg.nms_iou):
                continue
        kept.append(int(idx))

    rad = np.radians(model.base_angle)
    ca, sa = np.cos(rad), np.sin(rad)
    rx, ry = prev_box.center
    detections = []
    for idx in kept:
        px = dense["cx"][idx] - rx
        py = dense["cy"][idx] - ry
        # inverse of the scan rectification maps rectified coords back to the frame
        qx = float(np.clip(rx + ca * px - sa * py, 0.0, frame.width - 1.0))
        qy = float(np.clip(ry + sa * px + ca * py, 0.0, frame.height - 1.0))
        margin = float(dense["margin"][idx])
        detections.append(
            Detection(
                box=RotatedBox(qx, qy, float(dense["w"][idx]), float(dense["h"][idx]), model.base_angle),
                raw_margin=margin,
                score=model.score_of(margin),
            )
        )
    detections.sort(key=lambda d: -d.score)
    return detections


def score_window(model: DetectorModel, frame: Image, box: RotatedBox) -> tuple[float, float]:
    """(raw margin, calibrated score) of one box under the current model.

    The frame is rectified by the box's own angle about its center so the
    descriptor sees an upright view, matching how positives are extracted.
    """
    pixels = _rectified_frame(frame, box.angle, box.center)
    desc = descriptors_for_windows(
        pixels, np.array([(box.cx, box.cy, box.w, box.h)]), model.template
    )[0]
    margin = model.margin_of(desc)
    return margin, model.score_of(margin)


def update(model: DetectorModel, frame: Image, box: RotatedBox) -> DetectorModel:
    """Warm-start retrain with the new positive and this frame's hard negatives."""
    cfg = model.config
    if fraction_inside_frame(box, frame.width, frame.height) < 0.5:
        raise TrainingError("update box lies mostly outside the frame")
    pixels = _rectified_frame(frame, box.angle, box.center)
    window = (box.cx, box.cy, box.w, box.h)
    rng = np.random.default_rng((cfg.rng_seed, model.update_count + 1))

    new_pos = descriptors_for_windows(pixels, np.array([window]), model.template)[0]
    positives = list(model.positives) + [new_pos]
    alphas = list(model.pos_alpha) + [0.0]
    if len(positives) > cfg.positive_cap:
        positives = positives[-cfg.positive_cap :]
        alphas = alphas[-cfg.positive_cap :]

    neg_windows = _sample_windows_below_iou(
        rng, pixels.shape, window, cfg.neg_overlap_max, cfg.base_negatives // 2
    )
    hard = _mine_hard_negatives(
        model.weights, model.bias, model.template, pixels, window, cfg,
        default_search_region(box, cfg.search_pad),
    )
    if len(hard):
        neg_windows = np.concatenate([neg_windows, hard]) if len(neg_windows) else hard
    if len(neg_windows) < 10:
        raise TrainingError("not enough negatives for the detector update")
    neg_desc = descriptors_for_windows(pixels, neg_windows, model.template)

    weights, bias, pos_alpha, _ = _train_svm(
        None, np.stack(positives), alphas, neg_desc, cfg.svm_c
    )
    platt_a, platt_b = _calibrate(
        pixels, model.template, weights, bias, window, rng, cfg.jitter_count
    )
    return replace(
        model,
        weights=weights,
        bias=bias,
        platt_a=platt_a,
        platt_b=platt_b,
        positives=positives,
        pos_alpha=[float(a) for a in pos_alpha],
        update_count=model.update_count + 1,
    )


def save_model(model: DetectorModel, path) -> None:
    """Serialize to the versioned binary model format (header PSTM1)."""
    path = Path(path)
    tmpl = model.template
    parts = [
        MODEL_MAGIC,
        struct.pack("<d", model.base_angle),
        struct.pack("<iii", tmpl.cells_x, tmpl.cells_y, tmpl.cell_size),
        struct.pack("<ddd", model.bias, model.platt_a, model.platt_b),
        struct.pack("<ii", model.update_count, len(model.weights)),
        model.weights.astype("<f8").tobytes(),
        struct.pack("<i", len(model.positives)),
    ]
    for desc, alpha in zip(model.positives, model.pos_alpha):
        parts.append(struct.pack("<d", alpha))
        parts.append(np.asarray(desc, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))


def load_model(path, cfg: DetectorConfig | None = None) -> DetectorModel:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a detector model file")
    off = len(MODEL_MAGIC)
    (base_angle,) = struct.unpack_from("<d", raw, off)
    off += 8
    cells_x, cells_y, cell_size = struct.unpack_from("<iii", raw, off)
    off += 12
    bias, platt_a, platt_b = struct.unpack_from("<ddd", raw, off)
    off += 24
    update_count, wlen = struct.unpack_from("<ii", raw, off)
    off += 8
    weights = np.frombuffer(raw, dtype="<f8", count=wlen, offset=off).copy()
    off += 8 * wlen
    (n_pos,) = struct.unpack_from("<i", raw, off)
    off += 4
    positives = []
    alphas = []
    for _ in range(n_pos):
        (alpha,) = struct.unpack_from("<d", raw, off)
        off += 8
        alphas.append(alpha)
        positives.append(np.frombuffer(raw, dtype="<f8", count=wlen, offset=off).copy())
        off += 8 * wlen
    tmpl = HogTemplate(cells_x=cells_x, cells_y=cells_y, cell_size=cell_size)
    return DetectorModel(
        weights=weights,
        bias=bias,
        platt_a=platt_a,
        platt_b=platt_b,
        template=tmpl,
        base_angle=base_angle,
        positives=positives,
        pos_alpha=alphas,
        config=cfg or DetectorConfig(),
        update_count=update_count,
    )
