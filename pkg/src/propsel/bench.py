"""Synthetic benchmark generation with exact ground truth, plus VOT-style
accuracy/robustness (restart protocol) and OTB-style precision/success/F1.

The synthetic generator composites a textured rectangle over a cluttered
background and moves it with a scripted per-frame similarity, so both the
boxes and the object-region optical flow are known analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .flow import FlowField
from .geometry import (
    RotatedBox,
    Similarity,
    apply_similarity,
    box_mask,
    compose,
    fraction_inside_frame,
    polygon_iou,
)
from .imaging import Image, bilinear_sample
from .tracker import SideData, TrackResult, track_sequence

RESTART_OFFSET = 5  # reinitialize from the annotation this many frames after a failure
BURN_IN = 10  # frames after each reinitialization excluded from accuracy

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)
SUCCESS_THRESHOLDS = np.round(np.arange(0.0, 1.0001, 0.05), 10)


@dataclass
class MotionStep:
    """Per-transition motion: scale/rotate about the current object center,
    then translate the center by (dx, dy)."""

    s: float = 1.0
    theta: float = 0.0
    dx: float = 0.0
    dy: float = 0.0


@dataclass
class SynthConfig:
    width: int = 160
    height: int = 160
    texture_seed: int = 7
    motion_script: list[MotionStep] = field(default_factory=list)
    clutter_density: float = 0.5
    noise_sigma: float = 0.01
    init_box: RotatedBox | None = None

    def initial_box(self) -> RotatedBox:
        if self.init_box is not None:
            return self.init_box
        return RotatedBox(self.width / 2.0, self.height / 2.0, 48.0, 28.0, 0.0)


@dataclass
class EvalReport:
    mean_iou: float = 0.0
    failures: int = 0
    precision_curve: np.ndarray | None = None
    success_curve: np.ndarray | None = None
    precision_at_20: float | None = None
    auc: float | None = None
    f1_at_50: float | None = None


def step_similarity(step: MotionStep, center: tuple[float, float]) -> Similarity:
    """Frame-coordinate similarity realizing a MotionStep about `center`."""
    rad = math.radians(step.theta)
    c = step.s * complex(math.cos(rad), math.sin(rad))
    ctr = complex(*center)
    t = ctr + complex(step.dx, step.dy) - c * ctr
    return Similarity(step.s, step.theta, t.real, t.imag)


def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(rng.random(shape), sigma)


def _make_background(rng: np.random.Generator, width: int, height: int, density: float):
    base = 0.05 + 0.35 * _smooth_noise(rng, (height, width), 3.0)
    count = int(density * width * height / 800.0)
    for _ in range(count):
        w = int(rng.integers(4, max(5, width // 6)))
        h = int(rng.integers(4, max(5, height // 6)))
        x = int(rng.integers(0, max(1, width - w)))
        y = int(rng.integers(0, max(1, height - h)))
        base[y : y + h, x : x + w] = rng.uniform(0.0, 0.45)
    return np.clip(base, 0.0, 1.0)


def _make_object_texture(rng: np.random.Generator, w: float, h: float) -> np.ndarray:
    tw = max(8, int(round(2.0 * w)))
    th = max(8, int(round(2.0 * h)))
    tex = 0.55 + 0.4 * _smooth_noise(rng, (th, tw), 1.2)
    blocks = max(4, int(tw * th / 150))
    for _ in range(blocks):
        bw = int(rng.integers(2, max(3, tw // 4)))
        bh = int(rng.integers(2, max(3, th // 4)))
        x = int(rng.integers(0, max(1, tw - bw)))
        y = int(rng.integers(0, max(1, th - bh)))
        tex[y : y + bh, x : x + bw] = rng.uniform(0.5, 1.0)
    return np.clip(tex, 0.0, 1.0)


def _apply_to_grid(t: Similarity, xs: np.ndarray, ys: np.ndarray):
    c, d = t.as_complex()
    z = c * (xs + 1j * ys) + d
    return z.real, z.imag


def synth_sequence(
    cfg: SynthConfig,
) -> tuple[list[Image], list[RotatedBox], list[FlowField]]:
    """Frames, exact per-frame boxes, and exact object-region flow fields.

    Flow index t maps frame t to frame t+1: the scripted transform inside the
    object box, zero over the static background. Raises when the script takes
    more than 40% of the box outside the frame.
    """
    rng = np.random.default_rng(cfg.texture_seed)
    background = _make_background(rng, cfg.width, cfg.height, cfg.clutter_density)
    box0 = cfg.initial_box()
    texture = _make_object_texture(rng, box0.w, box0.h)
    th, tw = texture.shape

    boxes = [box0]
    cumulative = [Similarity.identity()]
    for stepdef in cfg.motion_script:
        t = step_similarity(stepdef, boxes[-1].center)
        boxes.append(apply_similarity(t, boxes[-1]))
        cumulative.append(compose(t, cumulative[-1]))

    frames = []
    ys, xs = np.mgrid[0 : cfg.height, 0 : cfg.width].astype(np.float64)
    for t, box in enumerate(boxes):
        if fraction_inside_frame(box, cfg.width, cfg.height) < 0.6:
            raise ValueError(f"motion script drives the object out of frame at frame {t}")
        inv = cumulative[t].inverse()
        ox, oy = _apply_to_grid(inv, xs, ys)
        # canonical object coords -> texture coords (texture spans the box)
        u = (ox - (box0.cx - 0.5 * box0.w)) / box0.w * tw - 0.5
        v = (oy - (box0.cy - 0.5 * box0.h)) / box0.h * th - 0.5
        in_box = (u >= -0.5) & (u <= tw - 0.5) & (v >= -0.5) & (v <= th - 0.5)
        obj = bilinear_sample(texture, np.clip(u, 0, tw - 1), np.clip(v, 0, th - 1))
        frame = np.where(in_box, obj, background)
        noise_rng = np.random.default_rng((cfg.texture_seed, t))
        frame = frame + noise_rng.normal(0.0, cfg.noise_sigma, frame.shape)
        frames.append(Image(np.clip(frame, 0.0, 1.0)))

    flows = []
    for t, stepdef in enumerate(cfg.motion_script):
        tform = step_similarity(stepdef, boxes[t].center)
        qx, qy = _apply_to_grid(tform, xs, ys)
        mask = box_mask(boxes[t], cfg.width, cfg.height)
        flows.append(
            FlowField(u=np.where(mask, qx - xs, 0.0), v=np.where(mask, qy - ys, 0.0))
        )
    return frames, boxes, flows


def tracker_predictor(frames, config=None, side_data: SideData | None = None):
    """Adapt the tracker to the predictor interface used by run_vot.

    The returned callable maps (start_index, init_box) to predicted boxes for
    frames start_index+1 .. end; the list is shorter if tracking aborts."""

    def predict(start: int, init_box: RotatedBox) -> list[RotatedBox]:
        sub = frames[start:]
        if len(sub) < 2:
            return []
        side = None
        if side_data is not None:
            side = SideData(
                flows=side_data.flows[start:] if side_data.flows else None,
                edges=side_data.edges[start:] if side_data.edges else None,
                mbs=side_data.mbs[start:] if side_data.mbs else None,
            )
        result: TrackResult = track_sequence(sub, init_box, config, side)
        return [w.box for w in result.winners]

    return predict


def run_vot(
    frames,
    gt_boxes: list[RotatedBox],
    config=None,
    side_data: SideData | None = None,
    predictor=None,
) -> EvalReport:
    """VOT protocol: restart from the annotation 5 frames after each failure.

    A failure is a frame whose prediction has zero overlap with the ground
    truth. Accuracy is the mean IoU over predicted frames, excluding the 10
    burn-in frames after each reinitialization; failure frames themselves are
    scored and every failure counts toward robustness.
    """
    n = len(gt_boxes)
    if frames is not None and len(frames) != n:
        raise ValueError("frame and ground-truth counts differ")
    if predictor is None:
        predictor = tracker_predictor(frames, config, side_data)
    failures = 0
    ious: list[float] = []
    start = 0
    first_init = True
    while start < n - 1:
        preds = predictor(start, gt_boxes[start])
        restart = None
        failed = False
        for offset, pred in enumerate(preds, start=1):
            t = start + offset
            if t >= n:
                break
            iou = polygon_iou(pred, gt_boxes[t]) if pred is not None else 0.0
            if first_init or t > start + BURN_IN:
                ious.append(iou)
            if iou == 0.0:
                failures += 1
                restart = t + RESTART_OFFSET
                failed = True
                break
        if not failed:
            covered = start + len(preds)
            if covered < n - 1:
                # tracker aborted without predicting the next frame
                failures += 1
                restart = covered + 1 + RESTART_OFFSET
        if restart is None:
            break
        start = restart
        first_init = False
    mean_iou = float(np.mean(ious)) if ious else 0.0
    return EvalReport(mean_iou=mean_iou, failures=failures)


def run_otb(predictions: list[RotatedBox], gt_boxes: list[RotatedBox]) -> EvalReport:
    """OTB measures: center-distance precision, overlap success, AUC, F1@0.5."""
    if len(predictions) != len(gt_boxes):
        raise ValueError("prediction and ground-truth lists differ in length")
    if not predictions:
        raise ValueError("empty prediction list")
    dists = np.array(
        [
            math.hypot(p.cx - g.cx, p.cy - g.cy) if p is not None else math.inf
            for p, g in zip(predictions, gt_boxes)
        ]
    )
    ious = np.array(
        [polygon_iou(p, g) if p is not None else 0.0 for p, g in zip(predictions, gt_boxes)]
    )
    precision_curve = np.array([float(np.mean(dists <= thr)) for thr in PRECISION_THRESHOLDS])
    success_curve = np.array([float(np.mean(ious >= thr)) for thr in SUCCESS_THRESHOLDS])
    hits = float(np.mean(ious >= 0.5))
    # every frame has one prediction and one annotation, so per-frame hit rate
    # equals both precision and recall of the 50%-overlap criterion
    return EvalReport(
        mean_iou=float(np.mean(ious)),
        failures=0,
        precision_curve=precision_curve,
        success_curve=success_curve,
        precision_at_20=float(precision_curve[20]),
        auc=float(np.mean(success_curve)),
        f1_at_50=hits,
    )
