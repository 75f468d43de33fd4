"""Geometry proposals: Hough voting over correspondence pairs, least-squares
bin refinement, and Kalman-filtered pruning thresholds.

Every pair of flow correspondences determines a 4-parameter similarity in
closed form; quantized parameter tuples vote into a hash table, the top bins
are refined by least squares over their members, and the refined transforms
mapped onto the previous box become candidate locations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .flow import FlowField, mean_flow_magnitude
from .geometry import (
    Correspondence,
    RotatedBox,
    Similarity,
    angle_difference,
    apply_similarity,
    box_mask,
)

HASH_BITS = 20
_MIX = 0x9E3779B97F4A7C15  # 64-bit golden-ratio multiplier


@dataclass(frozen=True)
class HoughConfig:
    bin_scale: float = 0.1
    bin_angle: float = 2.0
    bin_tx: float = 2.0
    bin_ty: float = 2.0
    pair_count: int = 500
    min_pair_separation: float = 25.0
    motion_gate: float = 0.5
    top_k: int = 5
    rng_seed: int = 42


@dataclass
class GeometryProposal:
    box: RotatedBox
    transform: Similarity
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass
class KalmanState:
    """Scalar threshold filter state; tau gates the next frame's proposals."""

    tau: float = 0.0
    p: float = 0.1
    q: float = 0.001
    r: float = 0.01
    alpha: float = 1.0
    beta: float = 1.0


def kalman_update(state: KalmanState, d: float) -> tuple[KalmanState, float]:
    """One filter step: gain from (p, q, r), new tau pulled toward observation d."""
    gain = (state.p + state.q) / (state.p + state.q + state.r)
    tau = state.alpha * state.tau + gain * (d - state.alpha * state.beta * state.tau)
    p = (1.0 - gain) * (state.p + state.q)
    return replace(state, tau=tau, p=p), tau


@dataclass
class HoughBin:
    key: tuple[int, int, int, int]
    bucket: int
    votes: int
    pair_indices: np.ndarray


def pair_separation_threshold(box: RotatedBox, cfg: HoughConfig) -> float:
    """Required source-point separation: the configured minimum, relaxed to half
    the box diagonal when the box is too small to support it."""
    return min(cfg.min_pair_separation, 0.5 * box.diagonal)


def sample_pairs(
    flow: FlowField, box: RotatedBox, cfg: HoughConfig
) -> list[tuple[Correspondence, Correspondence]]:
    """Seeded random correspondence pairs from pixels inside the box."""
    mask = box_mask(box, flow.width, flow.height)
    ys, xs = np.nonzero(mask)
    if len(xs) < 2:
        raise ValueError("fewer than 2 flow pixels inside the box")
    min_sep = pair_separation_threshold(box, cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    pairs: list[tuple[int, int]] = []
    for _ in range(50):
        need = cfg.pair_count - len(pairs)
        if need <= 0:
            break
        ia = rng.integers(0, len(xs), size=4 * need)
        ib = rng.integers(0, len(xs), size=4 * need)
        sep = np.hypot(xs[ia] - xs[ib], ys[ia] - ys[ib])
        good = sep >= min_sep
        pairs.extend(zip(ia[good][:need].tolist(), ib[good][:need].tolist()))
    result = []
    for ia, ib in pairs[: cfg.pair_count]:
        ax, ay = float(xs[ia]), float(ys[ia])
        bx, by = float(xs[ib]), float(ys[ib])
        result.append(
            (
                Correspondence(ax, ay, ax + flow.u[int(ay), int(ax)], ay + flow.v[int(ay), int(ax)]),
                Correspondence(bx, by, bx + flow.u[int(by), int(bx)], by + flow.v[int(by), int(bx)]),
            )
        )
    return result


def _mix_hash(key: tuple[int, int, int, int]) -> int:
    h = np.uint64(0)
    for k in key:
        h = np.uint64(h ^ (np.uint64(k & 0xFFFFFFFFFFFFFFFF) * np.uint64(_MIX)))
        h = np.uint64((h << np.uint64(13)) | (h >> np.uint64(51)))
    return int(h & np.uint64((1 << HASH_BITS) - 1))


def hough_vote(
    pairs: list[tuple[Correspondence, Correspondence]], cfg: HoughConfig
) -> list[HoughBin]:
    """Rank quantized similarity bins by vote count.

    Each pair votes into exactly one bin (floor quantization of scale, angle,
    tx, ty). Ties are broken by the lower hash bucket, then by bin tuple, so
    the ranking is deterministic. Raises if every pair is degenerate.
    """
    if not pairs:
        raise ValueError("no pairs to vote with")
    pa = np.array([p[0].p for p in pairs])
    pb = np.array([p[1].p for p in pairs])
    qa = np.array([p[0].q for p in pairs])
    qb = np.array([p[1].q for p in pairs])
    denom = pb - pa
    valid = np.abs(denom) > 1e-12
    c = np.where(valid, (qb - qa) / np.where(valid, denom, 1.0), 0.0)
    valid &= np.abs(c) > 1e-12
    if not valid.any():
        raise ValueError("all pairs degenerate: no similarity votes")
    t = qa - c * pa
    s = np.abs(c)
    theta = np.degrees(np.angle(c))
    keys = np.stack(
        [
            np.floor(s / cfg.bin_scale),
            np.floor(theta / cfg.bin_angle),
            np.floor(t.real / cfg.bin_tx),
            np.floor(t.imag / cfg.bin_ty),
        ],
        axis=1,
    ).astype(np.int64)
    buckets: dict[tuple[int, int, int, int], list[int]] = {}
    for i in np.nonzero(valid)[0]:
        key = tuple(int(v) for v in keys[i])
        buckets.setdefault(key, []).append(int(i))
    bins = [
        HoughBin(key=key, bucket=_mix_hash(key), votes=len(members), pair_indices=np.array(members))
        for key, members in buckets.items()
    ]
    bins.sort(key=lambda b: (-b.votes, b.bucket, b.key))
    return bins


def refine_bin(
    pairs: list[tuple[Correspondence, Correspondence]], member_indices
) -> Similarity:
    """Least-squares similarity over all correspondences of a bin's member pairs.

    Solves q = c*p + d in complex form; exact when the members are consistent.
    """
    pts_p = []
    pts_q = []
    for i in member_indices:
        a, b = pairs[int(i)]
        pts_p.extend([a.p, b.p])
        pts_q.extend([a.q, b.q])
    p = np.array(pts_p)
    q = np.array(pts_q)
    p_mean = p.mean()
    q_mean = q.mean()
    dp = p - p_mean
    denom = float(np.sum(np.abs(dp) ** 2))
    if denom < 1e-12:
        raise ValueError("rank-deficient refinement: source points coincide")
    c = complex(np.sum((q - q_mean) * np.conj(dp))) / denom
    if abs(c) < 1e-12:
        raise ValueError("rank-deficient refinement: zero-scale solution")
    d = q_mean - c * p_mean
    return Similarity(abs(c), math.degrees(np.angle(c)), d.real, d.imag)


def geometry_proposals(
    prev_box: RotatedBox,
    flow: FlowField,
    cfg: HoughConfig,
    gates: tuple[KalmanState, KalmanState],
) -> list[GeometryProposal]:
    """At most top_k refined, Kalman-gated proposals; empty when motion is weak."""
    try:
        if mean_flow_magnitude(flow, prev_box) <= cfg.motion_gate:
            return []
    except ValueError:
        return []
    pairs = sample_pairs(flow, prev_box, cfg)
    if not pairs:
        return []
    try:
        bins = hough_vote(pairs, cfg)
    except ValueError:
        return []
    conf_gate, angle_gate = gates
    angle_window = max(15.0, 3.0 * cfg.bin_angle)
    proposals = []
    for hbin in bins[: cfg.top_k]:
        try:
            transform = refine_bin(pairs, hbin.pair_indices)
        except ValueError:
            continue
        confidence = hbin.votes / float(cfg.pair_count)
        box = apply_similarity(transform, prev_box)
        if confidence < 0.5 * conf_gate.tau:
            continue
        if angle_difference(box.angle, angle_gate.tau) > angle_window:
            continue
        proposals.append(
            GeometryProposal(box=box, transform=transform, confidence=min(confidence, 1.0))
        )
    proposals.sort(key=lambda g: -g.confidence)
    return proposals
