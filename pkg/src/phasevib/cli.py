"""Command-line front end.

Every command writes into ``--out`` together with ``config.json``, the fully
resolved configuration it ran with.  Values come from built-in defaults,
then ``--config`` (JSON), then explicit flags.  Failures exit with status 1
and print one JSON line on stderr; ``report`` exits 2 when damage is
indicated.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import image_core, modal, pme, synth
from .gabor import GaborParams
from .magnify import BandpassSpec, band_mask, ideal_bandpass, magnify_video

EXIT_OK, EXIT_ERROR, EXIT_DAMAGE = 0, 1, 2

DEFAULTS = {
    "input": None,
    "fps": None,
    "lambda": 16.0,
    "theta": 0.0,
    "sigma": None,
    "gamma": 1.0,
    "psi": 0.0,
    "roi": "auto",
    "roi_count": 8,
    "threshold": pme.DEFAULT_THRESHOLD,
    "gain": "local",
    "enhance": None,
    "min_prominence": 0.05,
    "min_separation_hz": 2.0,
    "max_peaks": 8,
    "fc": None,
    "b": 3.0,
    "alpha": None,
    "bands": None,
    "target_px": 2.5,
    "max_alpha": 500.0,
    "length_m": 2.3,
    "span_axis": "x",
    "smoothing_window": 2.0,
    "freq_threshold": modal.DEFAULT_FREQ_THRESHOLD_HZ,
    "mac_threshold": modal.DEFAULT_MAC_THRESHOLD,
    "out": None,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def parse_roi(text):
    """``"u,v;u,v"`` or a JSON list of pairs; ``"auto"`` passes through."""
    if text is None or text == "auto":
        return "auto"
    if isinstance(text, list):
        return [[int(a), int(b)] for a, b in text]
    text = text.strip()
    if text.startswith("["):
        return parse_roi(json.loads(text))
    pts = []
    for chunk in filter(None, text.split(";")):
        u, v = chunk.split(",")
        pts.append([int(u), int(v)])
    return pts


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        with open(path) as fh:
            loaded = json.load(fh)
        for key in ("input", "out"):
            # relative paths inside a config file are relative to that file
            if isinstance(loaded.get(key), str) and not Path(loaded[key]).is_absolute():
                loaded[key] = str((path.parent / loaded[key]).resolve())
        cfg.update(loaded)
    for key, val in vars(args).items():
        if key in ("config", "command", "func") or val is None:
            continue
        cfg[key] = val
    cfg["roi"] = parse_roi(cfg.get("roi"))
    return cfg


def gabor_from(cfg: dict) -> GaborParams:
    return GaborParams(lam=float(cfg["lambda"]), theta=float(cfg["theta"]), psi=float(cfg["psi"]),
                       sigma=None if cfg["sigma"] is None else float(cfg["sigma"]),
                       gamma=float(cfg["gamma"]))


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ValueError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-")
                                                                    for k in missing))


def _out_dir(cfg) -> Path:
    _require(cfg, "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(out: Path, cfg: dict, **extra):
    data = dict(cfg)
    data.update(extra)
    (out / "config.json").write_text(json.dumps(data, indent=2, sort_keys=True, default=str))


def _load(cfg) -> image_core.VideoSequence:
    _require(cfg, "input", "fps")
    video = image_core.load_sequence(cfg["input"], float(cfg["fps"]))
    if cfg.get("enhance"):
        lo, hi = cfg["enhance"]
        video = image_core.enhance_sequence(video, float(lo), float(hi))
    return video


def _roi(cfg, video, params) -> pme.RoiSpec:
    if cfg["roi"] == "auto":
        return pme.auto_roi(video, params, int(cfg["roi_count"]), float(cfg["threshold"]))
    return pme.RoiSpec([tuple(p) for p in cfg["roi"]], params.theta)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    out = _out_dir(cfg)
    scene = cfg.get("scene", "beam")
    overrides = {k: cfg[k] for k in ("frame_count", "width", "height", "noise_std", "seed",
                                     "tip_mass_fraction") if cfg.get(k) is not None}
    if cfg.get("fps") is not None:
        overrides["frame_rate_hz"] = float(cfg["fps"])
    if scene == "gaussian":
        overrides.pop("tip_mass_fraction", None)
        sc = synth.GaussianSurfaceConfig(**overrides)
        video, truth = synth.gaussian_surface_video(sc)
        pipeline = {"fps": sc.frame_rate_hz, "theta": 0.0,
                    "roi": [[int(sc.width / 2), int(sc.height / 2)]]}
    elif scene == "beam":
        if cfg.get("amplitudes") is not None:
            overrides["mode_amplitudes_px"] = tuple(cfg["amplitudes"])
        if cfg.get("frequencies") is not None:
            overrides["mode_frequencies_hz"] = tuple(cfg["frequencies"])
        sc = synth.BeamSceneConfig(**overrides)
        video, truth = synth.cantilever_beam_video(sc)
        tip = int(sc.root_px + 0.97 * sc.length_px)
        mid = int(sc.root_px + 0.6 * sc.length_px)
        edge = int(round(sc.height / 2 - sc.thickness_px / 2))
        pipeline = {"fps": sc.frame_rate_hz, "theta": math.pi / 2, "length_m": sc.length_m,
                    "roi": [[tip, edge], [tip - 6, edge], [mid, edge]]}
    else:
        raise ValueError(f"unknown scene {scene!r} (expected 'gaussian' or 'beam')")
    frames = out / "frames"
    synth.write_fixture(video, truth, frames, bit_depth=int(cfg.get("bit_depth") or 16))
    pipeline["input"] = "frames"
    (out / "pipeline.json").write_text(json.dumps(pipeline, indent=2, sort_keys=True))
    _echo(out, cfg)
    return EXIT_OK


def cmd_enhance(cfg: dict) -> int:
    out = _out_dir(cfg)
    video = image_core.load_sequence(cfg["input"], float(cfg.get("fps") or 1.0))
    lo, hi = cfg.get("enhance") or (0.01, 0.99)
    files = image_core.list_frame_files(cfg["input"])
    image_core.write_enhanced(video, files, out, float(lo), float(hi))
    image_core.histogram(video[0]).to_csv(out / "histogram_raw.csv")
    enhanced = image_core.enhance_sequence(video, float(lo), float(hi))
    image_core.histogram(enhanced[0]).to_csv(out / "histogram_enh.csv")
    _echo(out, cfg, enhance=[lo, hi])
    return EXIT_OK


def cmd_estimate(cfg: dict) -> int:
    out = _out_dir(cfg)
    video = _load(cfg)
    params = gabor_from(cfg)
    roi = _roi(cfg, video, params)
    sig = pme.estimate_motion(video, params, roi, float(cfg["threshold"]), cfg["gain"])
    sig.write(out / "motion.csv")
    _echo(out, cfg, roi=[list(p) for p in roi.points])
    return EXIT_OK


def cmd_spectrum(cfg: dict) -> int:
    out = _out_dir(cfg)
    _require(cfg, "signal")
    sig = pme.MotionSignal.read(cfg["signal"])
    point = cfg.get("point")
    spec = modal.spectrum(sig, None if point in (None, "all") else int(point))
    spec.to_csv(out / "spectrum.csv")
    peaks = modal.pick_peaks(spec, float(cfg["min_prominence"]), float(cfg["min_separation_hz"]),
                             int(cfg["max_peaks"]))
    (out / "peaks.json").write_text(json.dumps(
        {"df_hz": spec.df, "window": spec.window, "peaks": [p.to_dict() for p in peaks]},
        indent=2, sort_keys=True))
    _echo(out, cfg)
    return EXIT_OK


def cmd_magnify(cfg: dict) -> int:
    out = _out_dir(cfg)
    _require(cfg, "fc", "b", "alpha")
    video = _load(cfg)
    spec = BandpassSpec(float(cfg["fc"]), float(cfg["b"]), float(cfg["alpha"]))
    spec.validate(video.frame_rate_hz)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        result = magnify_video(video, gabor_from(cfg), spec)
    result.write(out)
    _echo(out, cfg)
    return EXIT_OK


def cmd_ods(cfg: dict) -> int:
    out = _out_dir(cfg)
    video = _load(cfg)
    shape = modal.extract_shape(video, float(cfg["length_m"]), cfg["span_axis"],
                                float(cfg["smoothing_window"]),
                                None if cfg.get("fc") is None else float(cfg["fc"]))
    shape.to_csv(out / "shape.csv")
    (out / "shape.json").write_text(json.dumps(
        {"frequency_hz": shape.frequency, **shape.metadata}, indent=2, sort_keys=True))
    _echo(out, cfg)
    return EXIT_OK


def cmd_mac(cfg: dict) -> int:
    out = _out_dir(cfg)
    _require(cfg, "shape_a", "shape_b")
    a = modal.DeflectionShape.from_csv(cfg["shape_a"])
    b = modal.DeflectionShape.from_csv(cfg["shape_b"])
    value = modal.mac(a, b)
    (out / "mac.json").write_text(json.dumps({"mac": value}, indent=2))
    print(f"{value:.6f}")
    _echo(out, cfg)
    return EXIT_OK


def band_amplitude(sig: pme.MotionSignal, spec: BandpassSpec) -> float:
    """Peak in-band displacement (px) over the reliable ROI points."""
    mask = band_mask(sig.n_frames, spec, sig.frame_rate_hz)
    x = sig.displacement[:, sig.reliable]
    return float(np.max(np.abs(ideal_bandpass(x - x.mean(axis=0), mask))))


def run_pipeline(cfg: dict, out: Path) -> modal.FeatureSet:
    """estimate -> peaks -> per-peak magnify -> ODS, writing artifacts to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    stage = "load"
    try:
        video = _load(cfg)
        params = gabor_from(cfg)
        stage = "estimate"
        roi = _roi(cfg, video, params)
        sig = pme.estimate_motion(video, params, roi, float(cfg["threshold"]), cfg["gain"])
        sig.write(out / "motion.csv")
        stage = "peaks"
        spec = modal.spectrum(sig, None)
        spec.to_csv(out / "spectrum.csv")
        peaks = modal.pick_peaks(spec, float(cfg["min_prominence"]),
                                 float(cfg["min_separation_hz"]), int(cfg["max_peaks"]))
        if not peaks:
            raise RuntimeError("no spectral peaks found")
        stage = "bands"
        if cfg.get("bands"):
            bands = [BandpassSpec(float(b["f_c"]), float(b["b"]), float(b["alpha"]))
                     for b in cfg["bands"]]
        else:
            bands = []
            for p in peaks:
                probe = BandpassSpec(p.frequency, float(cfg["b"]), 1.0)
                if cfg.get("alpha") is not None:
                    alpha = float(cfg["alpha"])
                else:
                    amp = band_amplitude(sig, probe)
                    alpha = float(np.clip(float(cfg["target_px"]) / max(amp, 1e-9), 1.0,
                                          float(cfg["max_alpha"])))
                bands.append(BandpassSpec(p.frequency, float(cfg["b"]), alpha))
        for band in bands:
            band.validate(video.frame_rate_hz)
        shapes = []
        for i, band in enumerate(bands, start=1):
            stage = f"magnify[mode {i}]"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                mag = magnify_video(video, params, band)
            stage = f"ods[mode {i}]"
            shape = modal.extract_shape(mag.video, float(cfg["length_m"]), cfg["span_axis"],
                                        float(cfg["smoothing_window"]), band.f_c)
            shape.to_csv(out / f"shape_mode{i}.csv")
            shapes.append(shape)
        (out / "peaks.json").write_text(json.dumps(
            {"df_hz": spec.df, "peaks": [p.to_dict() for p in peaks],
             "bands": [b.to_dict() for b in bands],
             "gabor": params.to_dict(), "roi": [list(p) for p in roi.points]},
            indent=2, sort_keys=True))
        return modal.FeatureSet([b.f_c for b in bands], shapes)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def cmd_report(cfg: dict) -> int:
    out = _out_dir(cfg)
    _require(cfg, "baseline", "test")
    explicit = cfg.pop("_explicit", {})
    shared = {k: v for k, v in cfg.items() if k not in ("baseline", "test", "out")}
    sides = {}
    for name in ("baseline", "test"):
        path = Path(cfg[name])
        loaded = json.loads(path.read_text())
        if isinstance(loaded.get("input"), str) and not Path(loaded["input"]).is_absolute():
            loaded["input"] = str((path.parent / loaded["input"]).resolve())
        # defaults < report config < per-video file < command-line flags
        side = {**shared, **loaded, **{k: v for k, v in explicit.items() if k in shared}}
        side["roi"] = parse_roi(side.get("roi"))
        sides[name] = side
    features = {name: run_pipeline(side, out / name) for name, side in sides.items()}
    try:
        report = modal.detect_damage(features["baseline"], features["test"],
                                     float(cfg["freq_threshold"]), float(cfg["mac_threshold"]))
    except Exception as exc:
        raise StageError("pair", exc) from exc
    report.metadata = {"baseline": sides["baseline"], "test": sides["test"]}
    report.write(out / "report")
    _echo(out, cfg, resolved_sides=sides)
    print(report.to_text(), end="")
    return EXIT_DAMAGE if report.damaged else EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "enhance": cmd_enhance, "estimate": cmd_estimate,
    "spectrum": cmd_spectrum, "magnify": cmd_magnify, "ods": cmd_ods, "mac": cmd_mac,
    "report": cmd_report,
}


def _common(p: argparse.ArgumentParser, video=True, gabor=True):
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--out", help="output directory")
    if video:
        p.add_argument("--input", help="directory of PNG/PGM frames")
        p.add_argument("--fps", type=float, help="frame rate in Hz")
        p.add_argument("--enhance", type=float, nargs=2, metavar=("LOW_Q", "HIGH_Q"),
                       help="contrast-stretch quantiles applied before processing")
    if gabor:
        p.add_argument("--lambda", dest="lambda", type=float, help="Gabor wavelength (px)")
        p.add_argument("--theta", type=float, help="orientation (rad)")
        p.add_argument("--sigma", type=float, help="envelope std (px), default lambda/2")
        p.add_argument("--gamma", type=float, help="aspect ratio")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phasevib", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic fixture")
    _common(p, video=False, gabor=False)
    p.add_argument("scene", choices=["gaussian", "beam"])
    p.add_argument("--fps", type=float)
    p.add_argument("--frames", dest="frame_count", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--noise", dest="noise_std", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--tip-mass", dest="tip_mass_fraction", type=float)
    p.add_argument("--amplitudes", type=float, nargs="+", help="beam tip amplitudes (px)")
    p.add_argument("--frequencies", type=float, nargs="+", help="beam mode frequencies (Hz)")
    p.add_argument("--bit-depth", dest="bit_depth", type=int, choices=[8, 16])

    p = sub.add_parser("enhance", help="contrast-stretch a frame directory")
    _common(p, gabor=False)

    p = sub.add_parser("estimate", help="phase-based motion at ROI points")
    _common(p)
    p.add_argument("--roi", help='"u,v;u,v" pixel list or "auto"')
    p.add_argument("--threshold", type=float, help="reliability threshold fraction")
    p.add_argument("--gain", choices=["local", "carrier"])

    p = sub.add_parser("spectrum", help="spectrum and peaks of a motion CSV")
    _common(p, video=False, gabor=False)
    p.add_argument("--signal", help="motion CSV written by 'estimate'")
    p.add_argument("--point", help="point index or 'all' (mean over reliable points)")
    p.add_argument("--min-prominence", dest="min_prominence", type=float)
    p.add_argument("--min-separation", dest="min_separation_hz", type=float)
    p.add_argument("--max-peaks", dest="max_peaks", type=int)

    p = sub.add_parser("magnify", help="magnify motion in one frequency band")
    _common(p)
    p.add_argument("--fc", type=float, help="centre frequency (Hz)")
    p.add_argument("--b", type=float, help="passband width (Hz)")
    p.add_argument("--alpha", type=float, help="magnification factor")

    p = sub.add_parser("ods", help="deflection shape from a magnified video")
    _common(p, gabor=False)
    p.add_argument("--length-m", dest="length_m", type=float)
    p.add_argument("--span-axis", dest="span_axis", choices=["x", "y"])
    p.add_argument("--fc", type=float, help="frequency label for the shape")

    p = sub.add_parser("mac", help="MAC between two shape CSVs")
    _common(p, video=False, gabor=False)
    p.add_argument("shape_a")
    p.add_argument("shape_b")

    p = sub.add_parser("report", help="baseline-vs-test damage report")
    _common(p, video=False)
    p.add_argument("--baseline", help="pipeline JSON for the baseline video")
    p.add_argument("--test", help="pipeline JSON for the test video")
    p.add_argument("--roi")
    p.add_argument("--b", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--length-m", dest="length_m", type=float)
    p.add_argument("--freq-threshold", dest="freq_threshold", type=float)
    p.add_argument("--mac-threshold", dest="mac_threshold", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stage = args.command
    try:
        cfg = resolve_config(args)
        if args.command == "report":
            cfg["_explicit"] = {k: v for k, v in vars(args).items()
                                if v is not None and k not in ("config", "command")}
        out = _out_dir(cfg)
        lock = FileLock(str(out / ".phasevib.lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout:
            raise RuntimeError(f"output directory {out} is in use by another run")
        try:
            return COMMANDS[args.command](cfg)
        finally:
            lock.release()
    except StageError as exc:
        _fail(exc.stage, exc.cause)
    except Exception as exc:
        _fail(stage, exc)
    return EXIT_ERROR


def _fail(stage, exc):
    msg = {"error": type(exc).__name__, "stage": stage, "message": str(exc).replace("\n", " ")}
    print(json.dumps(msg, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
