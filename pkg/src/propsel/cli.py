"""Command-line entry points: track, eval, synth.

Exit codes: 0 ok, 2 input error, 3 tracking failure (empty candidate set),
4 format error. Every run writes a manifest echoing the effective
configuration, the seed, and the library version.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    EvalReport,
    MotionStep,
    SynthConfig,
    run_otb,
    run_vot,
    synth_sequence,
)
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    from_variant,
    load_config_file,
    to_manifest,
)
from .flow import FlowFormatError, read_emap, read_flo, write_flo
from .geometry import RegionFormatError, RotatedBox, format_polygon, parse_region
from .imaging import ImageFormatError, load_image, save_image
from .tracker import SideData, track_sequence

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRACKING = 3
EXIT_FORMAT = 4

FRAME_PATTERN = re.compile(r"^frame_(\d{8})\.(pgm|png)$")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _list_frames(seq_dir: Path) -> list[Path]:
    if not seq_dir.is_dir():
        raise CliError(f"sequence directory not found: {seq_dir}", EXIT_INPUT)
    found = {}
    for entry in seq_dir.iterdir():
        m = FRAME_PATTERN.match(entry.name)
        if m:
            found[int(m.group(1))] = entry
    if not found:
        raise CliError(f"no frame_%08d.(pgm|png) files in {seq_dir}", EXIT_INPUT)
    indices = sorted(found)
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise CliError(f"frame indices are not contiguous in {seq_dir}", EXIT_INPUT)
    return [found[i] for i in indices]


def _load_side_maps(dir_path: Path | None, count: int, suffix: str, reader, what: str):
    if dir_path is None:
        return None
    files = sorted(p for p in Path(dir_path).glob(f"*.{suffix}"))
    if len(files) != count:
        raise CliError(
            f"{what} directory {dir_path} holds {len(files)} files, expected {count}",
            EXIT_INPUT,
        )
    try:
        return [reader(p) for p in files]
    except FlowFormatError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from exc


def _build_config(args) -> RunConfig:
    cfg = from_variant(args.variant, seed=args.seed) if args.variant else RunConfig(seed=args.seed)
    if args.config:
        cfg = apply_overrides(cfg, load_config_file(args.config))
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_manifest(out_dir: Path, cfg: RunConfig, extra: dict) -> None:
    manifest = {"version": __version__, "config": to_manifest(cfg)}
    manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _render_overlay(img, box: RotatedBox, path: Path) -> None:
    from PIL import Image as PilImage, ImageDraw

    arr = np.rint(img.pixels * 255.0).astype(np.uint8)
    pil = PilImage.fromarray(arr, mode="L").convert("RGB")
    draw = ImageDraw.Draw(pil)
    pts = [tuple(p) for p in box.corners()]
    draw.polygon(pts, outline=(255, 220, 0))
    pil.save(path)


def cmd_track(args) -> int:
    seq_dir = Path(args.seq)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_paths = _list_frames(seq_dir)
    try:
        frames = [load_image(p) for p in frame_paths]
    except (ImageFormatError, FileNotFoundError) as exc:
        raise CliError(str(exc), EXIT_FORMAT) from exc

    init_path = Path(args.init)
    if not init_path.is_file():
        raise CliError(f"init box file not found: {init_path}", EXIT_INPUT)
    first_line = init_path.read_text().strip().splitlines()
    if not first_line:
        raise CliError(f"init box file is empty: {init_path}", EXIT_INPUT)
    try:
        gt = parse_region(first_line[0])
    except RegionFormatError as exc:
        raise CliError(f"malformed init box: {exc}", EXIT_FORMAT) from exc

    transitions = len(frames) - 1
    side = SideData(
        flows=_load_side_maps(args.flow_dir, transitions, "flo", read_flo, "flow"),
        edges=_load_side_maps(args.edge_dir, transitions, "emap", read_emap, "edge map"),
        mbs=_load_side_maps(args.mb_dir, transitions, "emap", read_emap, "motion boundary"),
    )
    if side.flows is None and side.edges is None and side.mbs is None:
        side = None

    cfg = _build_config(args)
    result = track_sequence(frames, gt, cfg, side)
    if result.failure_frame is not None:
        sys.stderr.write(f"tracking failed at frame {result.failure_frame}\n")

    lines = [format_polygon(w.box) for w in result.winners]
    (out_dir / "boxes.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    with (out_dir / "candidates.jsonl").open("w") as fh:
        for record in result.candidate_log:
            fh.write(json.dumps(record) + "\n")
    _write_manifest(
        out_dir,
        cfg,
        {
            "command": "track",
            "sequence": str(seq_dir),
            "frames": len(frames),
            "failure_frame": result.failure_frame,
        },
    )
    if args.render:
        render_dir = out_dir / "overlays"
        render_dir.mkdir(exist_ok=True)
        for t, winner in enumerate(result.winners, start=1):
            _render_overlay(frames[t], winner.box, render_dir / f"overlay_{t + 1:08d}.png")
    return EXIT_TRACKING if result.failure_frame is not None else EXIT_OK


def _read_boxes_file(path: Path) -> list[RotatedBox]:
    if not path.is_file():
        raise CliError(f"box file not found: {path}", EXIT_INPUT)
    boxes = []
    for lineno, line in enumerate(path.read_text().strip().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            boxes.append(parse_region(line))
        except RegionFormatError as exc:
            raise CliError(f"{path}:{lineno}: {exc}", EXIT_FORMAT) from exc
    if not boxes:
        raise CliError(f"no boxes in {path}", EXIT_FORMAT)
    return boxes


def _write_report_csv(out_dir: Path, name: str, report: EvalReport) -> None:
    with (out_dir / "report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "mean_iou", "failures", "precision_at_20", "auc", "f1_at_50"])
        writer.writerow(
            [
                name,
                f"{report.mean_iou:.6f}",
                report.failures,
                "" if report.precision_at_20 is None else f"{report.precision_at_20:.6f}",
                "" if report.auc is None else f"{report.auc:.6f}",
                "" if report.f1_at_50 is None else f"{report.f1_at_50:.6f}",
            ]
        )
    if report.precision_curve is not None:
        with (out_dir / "precision_curve.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold_px", "precision"])
            for thr, val in zip(range(len(report.precision_curve)), report.precision_curve):
                writer.writerow([thr, f"{val:.6f}"])
    if report.success_curve is not None:
        with (out_dir / "success_curve.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold_iou", "success"])
            for i, val in enumerate(report.success_curve):
                writer.writerow([f"{i * 0.05:.2f}", f"{val:.6f}"])


def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = _read_boxes_file(Path(args.gt))
    cfg = _build_config(args)
    if args.protocol == "otb":
        if not args.pred:
            raise CliError("--pred is required for the otb protocol", EXIT_INPUT)
        preds = _read_boxes_file(Path(args.pred))
        if len(preds) != len(gt):
            raise CliError(
                f"prediction count {len(preds)} != ground-truth count {len(gt)}", EXIT_INPUT
            )
        report = run_otb(preds, gt)
    else:
        if not args.seq:
            raise CliError("--seq is required for the vot protocol", EXIT_INPUT)
        frame_paths = _list_frames(Path(args.seq))
        try:
            frames = [load_image(p) for p in frame_paths]
        except (ImageFormatError, FileNotFoundError) as exc:
            raise CliError(str(exc), EXIT_FORMAT) from exc
        if len(frames) != len(gt):
            raise CliError(
                f"frame count {len(frames)} != ground-truth count {len(gt)}", EXIT_INPUT
            )
        report = run_vot(frames, gt, cfg)
    _write_report_csv(out_dir, args.name, report)
    _write_manifest(out_dir, cfg, {"command": "eval", "protocol": args.protocol})
    return EXIT_OK


def _parse_script(path: Path) -> list[MotionStep]:
    if not path.is_file():
        raise CliError(f"motion script not found: {path}", EXIT_INPUT)
    steps = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 4:
            raise CliError(f"{path}:{lineno}: expected 's,theta,tx,ty'", EXIT_FORMAT)
        try:
            s, theta, dx, dy = (float(p) for p in parts)
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: non-numeric motion value", EXIT_FORMAT) from exc
        steps.append(MotionStep(s=s, theta=theta, dx=dx, dy=dy))
    if not steps:
        raise CliError(f"empty motion script: {path}", EXIT_FORMAT)
    return steps


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        width, height = (int(v) for v in args.size.lower().split("x"))
    except ValueError as exc:
        raise CliError(f"bad --size {args.size!r}, expected WxH", EXIT_INPUT) from exc
    script = _parse_script(Path(args.script))
    init_box = None
    if args.init_box:
        try:
            init_box = parse_region(args.init_box)
        except RegionFormatError as exc:
            raise CliError(f"malformed --init-box: {exc}", EXIT_FORMAT) from exc
    cfg = SynthConfig(
        width=width,
        height=height,
        texture_seed=args.seed,
        motion_script=script,
        clutter_density=args.clutter,
        noise_sigma=args.noise,
        init_box=init_box,
    )
    try:
        frames, boxes, flows = synth_sequence(cfg)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INPUT) from exc
    for t, frame in enumerate(frames, start=1):
        save_image(frame, out_dir / f"frame_{t:08d}.pgm")
    (out_dir / "gt.txt").write_text("\n".join(format_polygon(b) for b in boxes) + "\n")
    flow_dir = out_dir / "flow"
    flow_dir.mkdir(exist_ok=True)
    for t, fl in enumerate(flows, start=2):
        write_flo(fl, flow_dir / f"frame_{t:08d}.flo")
    manifest = {
        "version": __version__,
        "command": "synth",
        "size": [width, height],
        "seed": args.seed,
        "clutter": args.clutter,
        "noise": args.noise,
        "frames": len(frames),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="propsel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="track a sequence directory")
    p_track.add_argument("--seq", required=True, help="directory of frame_%%08d.(pgm|png)")
    p_track.add_argument("--init", required=True, help="file whose first line is the init box")
    p_track.add_argument("--out", required=True, help="output directory")
    p_track.add_argument("--config", help="key=value config file")
    p_track.add_argument("--variant", choices=["ss", "ms", "ms-rot", "ms-rot-e", "ms-rot-em"])
    p_track.add_argument("--seed", type=int, default=42)
    p_track.add_argument("--flow-dir", help="directory of precomputed .flo files")
    p_track.add_argument("--edge-dir", help="directory of precomputed edge EMAP files")
    p_track.add_argument("--mb-dir", help="directory of precomputed motion-boundary EMAP files")
    p_track.add_argument("--render", action="store_true", help="write overlay PNGs")
    p_track.set_defaults(func=cmd_track)

    p_eval = sub.add_parser("eval", help="evaluate predictions or run the VOT protocol")
    p_eval.add_argument("--protocol", choices=["vot", "otb"], required=True)
    p_eval.add_argument("--gt", required=True, help="ground-truth box file (one line per frame)")
    p_eval.add_argument("--pred", help="prediction box file (otb)")
    p_eval.add_argument("--seq", help="sequence directory (vot)")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--name", default="sequence")
    p_eval.add_argument("--config", help="key=value config file")
    p_eval.add_argument("--variant", choices=["ss", "ms", "ms-rot", "ms-rot-e", "ms-rot-em"])
    p_eval.add_argument("--seed", type=int, default=42)
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--script", required=True, help="one 's,theta,tx,ty' line per transition")
    p_synth.add_argument("--size", default="160x160")
    p_synth.add_argument("--seed", type=int, default=42)
    p_synth.add_argument("--clutter", type=float, default=0.5)
    p_synth.add_argument("--noise", type=float, default=0.01)
    p_synth.add_argument("--init-box", help="initial box as 'x,y,w,h' or polygon line")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - last-resort reporting
        from .tracker import TrackingFailure

        if isinstance(exc, TrackingFailure):
            sys.stderr.write(f"tracking failure: {exc}\n")
            return EXIT_TRACKING
        raise


if __name__ == "__main__":
    sys.exit(main())
