"""Tracking loop: build the candidate set, select the best proposal with
multiple cues, update the detector and the gating filters.

Per frame the candidate set is the detector's top-k windows plus at most k
geometry proposals, every candidate scored by the current detector. The
highest score wins outright unless other candidates come within 1% of it; in
that inconclusive case the gated edgeness cue with the stronger response
picks the winner, and when no cue is usable the score decides with a
deterministic tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .detector import (
    DetectorModel,
    default_search_region,
    scan,
    score_window,
    train_initial,
    update,
)
from .edgeness import (
    CueHistory,
    EdgeMap,
    edge_map,
    edgeness_score,
    label_contours,
    normalize_over_region,
    temporal_gate,
)
from .flow import FlowField, compute_flow, motion_boundary_map
from .geometry import RotatedBox, angle_difference, box_mask
from .imaging import Image
from .proposals import KalmanState, geometry_proposals, kalman_update

INCONCLUSIVE_FACTOR = 0.99  # candidates within 1% of the best score

DETECTOR = "detector"
GEOMETRY = "geometry"


class TrackingFailure(RuntimeError):
    """No candidate could be produced for a frame."""


@dataclass
class Proposal:
    box: RotatedBox
    source: str
    det_score: float
    raw_margin: float
    geo_confidence: float | None = None
    edge_score: float | None = None
    mb_score: float | None = None

    def to_record(self) -> dict:
        return {
            "source": self.source,
            "box": [self.box.cx, self.box.cy, self.box.w, self.box.h, self.box.angle],
            "det_score": self.det_score,
            "raw_margin": self.raw_margin,
            "geo_confidence": self.geo_confidence,
            "edge_score": self.edge_score,
            "mb_score": self.mb_score,
        }


@dataclass
class TrackerState:
    model: DetectorModel
    prev_box: RotatedBox
    kalman_conf: KalmanState
    kalman_angle: KalmanState
    edge_hist: CueHistory
    mb_hist: CueHistory
    frame_index: int
    config: RunConfig
    last_candidates: list[Proposal] = field(default_factory=list)


@dataclass
class TrackResult:
    winners: list[Proposal]
    candidate_log: list[dict]
    failure_frame: int | None = None


def init(frame: Image, gt: RotatedBox, config: RunConfig | None = None) -> TrackerState:
    """Train the initial detector and reset gates and cue histories."""
    config = (config or RunConfig()).resolved()
    model = train_initial(frame, gt, config.detector)
    return TrackerState(
        model=model,
        prev_box=gt,
        kalman_conf=KalmanState(),
        kalman_angle=KalmanState(),
        edge_hist=CueHistory(),
        mb_hist=CueHistory(),
        frame_index=0,
        config=config,
    )


def _candidate_sort_key(prev_box: RotatedBox):
    def key(item):
        idx, cand = item
        return (
            -cand.det_score,
            0 if cand.source == DETECTOR else 1,
            angle_difference(cand.box.angle, prev_box.angle),
            idx,
        )

    return key


def _union_mean_response(edges: EdgeMap, candidates: list[Proposal]) -> float:
    union = np.zeros((edges.height, edges.width), dtype=bool)
    for cand in candidates:
        union |= box_mask(cand.box, edges.width, edges.height)
    if not union.any():
        return 0.0
    return float(edges.response[union].mean())


def step(
    state: TrackerState,
    prev_frame: Image,
    cur_frame: Image,
    flow: FlowField | None = None,
    edge: EdgeMap | None = None,
    mb: EdgeMap | None = None,
) -> tuple[TrackerState, Proposal]:
    """Advance one frame; returns the new state and the selected proposal."""
    cfg = state.config
    if (prev_frame.width, prev_frame.height) != (cur_frame.width, cur_frame.height):
        raise ValueError("frames must share dimensions")

    need_flow = cfg.use_geometry or (cfg.use_motion_boundaries and mb is None)
    if flow is None and need_flow:
        flow = compute_flow(prev_frame, cur_frame)

    candidates: list[Proposal] = []
    for det in scan(state.model, cur_frame, state.prev_box):
        candidates.append(
            Proposal(box=det.box, source=DETECTOR, det_score=det.score, raw_margin=det.raw_margin)
        )
    geo_count = 0
    if cfg.use_geometry and flow is not None:
        geos = geometry_proposals(
            state.prev_box, flow, cfg.hough, (state.kalman_conf, state.kalman_angle)
        )
        geo_count = len(geos)
        for geo in geos:
            margin, score = score_window(state.model, cur_frame, geo.box)
            candidates.append(
                Proposal(
                    box=geo.box,
                    source=GEOMETRY,
                    det_score=score,
                    raw_margin=margin,
                    geo_confidence=geo.confidence,
                )
            )
    if not candidates:
        raise TrackingFailure(f"empty candidate set at frame {state.frame_index + 1}")

    best_score = max(c.det_score for c in candidates)
    shortlist = [c for c in candidates if c.det_score >= INCONCLUSIVE_FACTOR * best_score]

    # Cue maps are computed whenever their variant switch is on so the
    # 5-frame histories warm up even on conclusive frames.
    region = default_search_region(state.prev_box, cfg.detector.search_pad)
    cues: dict[str, dict] = {}
    if cfg.use_edges:
        emap = edge if edge is not None else edge_map(cur_frame)
        cues["edge"] = {"map": normalize_over_region(emap, region), "hist": state.edge_hist}
    if cfg.use_motion_boundaries and (mb is not None or flow is not None):
        mmap = mb if mb is not None else motion_boundary_map(flow)
        cues["mb"] = {"map": normalize_over_region(mmap, region), "hist": state.mb_hist}
    for cue in cues.values():
        cue["contours"] = label_contours(cue["map"], cfg.edgeness.theta_edge)
        cue["scores"] = [
            edgeness_score(cue["map"], cue["contours"], c.box, cfg.edgeness.ring_px)
            for c in shortlist
        ]
        cue["strength"] = _union_mean_response(cue["map"], candidates)
        cue["open"] = temporal_gate(cue["hist"], max(cue["scores"]))
    for i, cand in enumerate(shortlist):
        if "edge" in cues:
            cand.edge_score = cues["edge"]["scores"][i]
        if "mb" in cues:
            cand.mb_score = cues["mb"]["scores"][i]

    ranked = sorted(enumerate(shortlist), key=_candidate_sort_key(state.prev_box))
    if len(shortlist) == 1:
        winner = shortlist[0]
    else:
        usable = [name for name in cues if cues[name]["open"]]
        if usable:
            chosen = max(usable, key=lambda name: cues[name]["strength"])
            scores = cues[chosen]["scores"]
            best_edge = max(scores)
            tied = [(i, c) for i, c in enumerate(shortlist) if scores[i] >= best_edge]
            winner = sorted(tied, key=_candidate_sort_key(state.prev_box))[0][1]
        else:
            winner = ranked[0][1]

    new_conf, new_angle = state.kalman_conf, state.kalman_angle
    if cfg.use_geometry and geo_count > 0:
        geo_cands = [c for c in candidates if c.source == GEOMETRY]
        conf_obs = (
            winner.geo_confidence
            if winner.source == GEOMETRY
            else max(c.geo_confidence for c in geo_cands)
        )
        new_conf, _ = kalman_update(state.kalman_conf, conf_obs)
        new_angle, _ = kalman_update(state.kalman_angle, winner.box.angle)

    for cue in cues.values():
        winner_score = edgeness_score(
            cue["map"], cue["contours"], winner.box, cfg.edgeness.ring_px
        )
        cue["hist"].push(winner_score)

    model = update(state.model, cur_frame, winner.box)
    new_state = replace(
        state,
        model=model,
        prev_box=winner.box,
        kalman_conf=new_conf,
        kalman_angle=new_angle,
        frame_index=state.frame_index + 1,
        last_candidates=candidates,
    )
    return new_state, winner


@dataclass
class SideData:
    """Optional precomputed per-transition inputs (index t-1 holds data for
    stepping from frame t-1 to frame t)."""

    flows: list[FlowField] | None = None
    edges: list[EdgeMap] | None = None
    mbs: list[EdgeMap] | None = None

    def for_step(self, transition: int):
        flow = self.flows[transition] if self.flows else None
        edge = self.edges[transition] if self.edges else None
        mb = self.mbs[transition] if self.mbs else None
        return flow, edge, mb


def track_sequence(
    frames: list[Image],
    gt1: RotatedBox,
    config: RunConfig | None = None,
    side_data: SideData | None = None,
) -> TrackResult:
    """Init on frame 1, step through the rest; stops at an empty candidate set."""
    if len(frames) < 2:
        raise ValueError("need at least 2 frames to track")
    state = init(frames[0], gt1, config)
    winners: list[Proposal] = []
    log: list[dict] = []
    for t in range(1, len(frames)):
        flow = edge = mb = None
        if side_data is not None:
            flow, edge, mb = side_data.for_step(t - 1)
        try:
            state, winner = step(state, frames[t - 1], frames[t], flow=flow, edge=edge, mb=mb)
        except TrackingFailure:
            log.append({"frame": t, "failure": True, "candidates": []})
            return TrackResult(winners=winners, candidate_log=log, failure_frame=t)
        winners.append(winner)
        log.append(
            {
                "frame": t,
                "winner": winner.to_record(),
                "candidates": [c.to_record() for c in state.last_candidates],
            }
        )
    return TrackResult(winners=winners, candidate_log=log)
