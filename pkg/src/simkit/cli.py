"""Command-line entry point: ``simkit <subcommand> [options]``.

Results go to stdout as ``key=value`` lines; diagnostics and errors go to
stderr. Files are written atomically (temporary file, then rename).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, flowmetrics, image, optics, phantoms, recon, rolling
from .attention import gradcheck

log = logging.getLogger("simkit")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_INVALID_CONFIG = 4
EXIT_BAD_INPUT = 5
EXIT_ESTIMATION = 6
EXIT_WRITE = 7
EXIT_PARTIAL = 8

EXIT_TABLE = """exit codes:
  0  success
  1  a numerical check failed (check-grad above tolerance)
  2  usage error (unknown subcommand or flag, bad flag value)
  3  input file or directory not found
  4  invalid configuration (out-of-range parameter, too few frames, ...)
  5  unreadable or corrupt input (bad container, unsupported image)
  6  illumination parameter estimation failed
  7  output could not be written
  8  dataset finished but some samples failed (see manifest)

environment:
  SIMKIT_THREADS  default for --threads (1 if unset)
"""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def emit(key: str, value) -> None:
    if isinstance(value, float):
        value = "inf" if math.isinf(value) else f"{value:.6g}"
    print(f"{key}={value}")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SIMKIT_THREADS", "1")))
    except ValueError:
        return 1


# -- file helpers --------------------------------------------------------------------

def load_array(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    if path.suffix == ".npy":
        return np.load(path, allow_pickle=False).astype(np.float64)
    return image.read_image(path)


def save_array(path, arr: np.ndarray) -> dict:
    """Write ``.npy`` verbatim, anything else as a 16-bit PNG scaled to its maximum."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npy":
        with image.atomic_write(path) as tmp, open(tmp, "wb") as fh:
            np.save(fh, np.asarray(arr, dtype=np.float64))
        return {"scale": 1.0}
    peak = float(np.max(arr)) if arr.size else 0.0
    scale = 1.0 / peak if peak > 0 else 1.0
    image.write_png16(arr * scale, path)
    return {"scale": scale}


# -- shared option groups --------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="global random seed (default 0)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads; never changes outputs (default $SIMKIT_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _optics_args(p):
    p.add_argument("--na", type=float, default=1.2)
    p.add_argument("--lambda", dest="lambda_em", type=float, default=600.0, help="emission nm")
    p.add_argument("--pixel", type=float, default=60.0, help="object-space pixel size, nm")


def _noise_args(p):
    p.add_argument("--sigma", type=float, default=0.0, help="Gaussian read noise std")
    p.add_argument("--photons", type=float, default=0.0,
                   help="photons at unit intensity for Poisson noise (0 = off)")
    p.add_argument("--jitter-k0", type=float, default=0.01, help="relative k0 jitter std")
    p.add_argument("--jitter-theta", type=float, default=0.5, help="theta jitter std, degrees")
    p.add_argument("--jitter-phi", type=float, default=3.0, help="phase jitter std, degrees")
    p.add_argument("--pattern-factor", type=float, default=0.8, help="k0 as a fraction of cutoff")
    p.add_argument("--modulation", type=float, default=0.8)
    p.add_argument("--shuffle", action="store_true", help="shuffle the 9-pattern order")


def _optical_config(a) -> optics.OpticalConfig:
    return optics.OpticalConfig(a.na, a.lambda_em, a.pixel)


def _noise_config(a) -> optics.NoiseConfig:
    return optics.NoiseConfig(a.sigma, a.photons, a.jitter_k0, np.deg2rad(a.jitter_theta),
                              np.deg2rad(a.jitter_phi))


# -- subcommands ----------------------------------------------------------------------

def cmd_otf(a) -> int:
    cfg = _optical_config(a)
    otf = optics.make_otf(cfg, a.size, a.size)
    emit("f_c_pix", cfg.cutoff_pix)
    emit("f_c_per_nm", cfg.cutoff)
    emit("rayleigh_nm", cfg.rayleigh)
    emit("rayleigh_px", cfg.rayleigh / cfg.pixel_size)
    emit("size", a.size)
    if a.out:
        save_array(a.out, otf.values)
        emit("otf", a.out)
    if a.psf_out:
        save_array(a.psf_out, optics.otf_to_psf(otf))
        emit("psf", a.psf_out)
    if a.profile:
        fr = np.linspace(0.0, 0.5, 101)
        rows = "\n".join(f"{f:.6f},{v:.9f}" for f, v in zip(fr, otf.evaluate(0.0, fr)))
        path = Path(a.profile)
        with image.atomic_write(path) as tmp, open(tmp, "w") as fh:
            fh.write("freq_cycles_per_px,otf\n" + rows + "\n")
        emit("profile", a.profile)
    return EXIT_OK


def _sample_image(a, rng) -> np.ndarray:
    if a.input:
        img = load_array(a.input)
        h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
        return img[:h, :w]
    shape = (a.size, a.size)
    if a.phantom == "cells":
        return phantoms.cell_like(shape, rng)
    if a.phantom == "texture":
        return 0.2 + 0.8 * phantoms.smooth_texture(shape, rng, scale=2.0)
    return phantoms.point_pair(shape, a.separation)


def cmd_simulate(a) -> int:
    rng = np.random.default_rng(a.seed)
    cfg = _optical_config(a)
    noise = _noise_config(a)
    if a.frames < image.STACK_SIZE:
        raise CliError(EXIT_INVALID_CONFIG, "--frames must be >= 9")
    sample = _sample_image(a, rng)
    if a.motion:
        dy, dx = a.motion
        samples = np.stack([phantoms.translate(sample, dy * t, dx * t) for t in range(a.frames)])
    else:
        samples = sample
    metas = optics.default_pattern_set(cfg, rng, a.pattern_factor, a.modulation)
    if a.shuffle:
        metas = datagen.shuffle_patterns(metas, rng)
    stream = rolling.acquire_stream(samples, metas, a.frames, cfg, noise, rng)
    image.write_container(stream, a.out)
    emit("frames", len(stream))
    emit("height", stream.shape[0])
    emit("width", stream.shape[1])
    emit("path", a.out)
    return EXIT_OK


def cmd_dataset(a) -> int:
    if a.replay:
        if not Path(a.replay).exists():
            raise FileNotFoundError(f"manifest not found: {a.replay}")
        manifest = datagen.replay_manifest(a.replay, a.out, a.threads)
    else:
        spec = datagen.SampleSpec(a.crop, 2, a.skip, a.seed)
        synth = datagen.SynthesisConfig(_optical_config(a), _noise_config(a), a.shuffle,
                                        a.pattern_factor, a.modulation, a.downsample)
        sources = [datagen.SequenceSource.from_dir(d) for d in a.sources]
        manifest = datagen.build_dataset(sources, a.count, spec, synth, a.out, a.threads)
    failed = len(manifest.failures)
    emit("count", len(manifest.records))
    emit("ok", len(manifest.records) - failed)
    emit("failed", failed)
    emit("manifest", str(Path(a.out) / datagen.MANIFEST_NAME))
    return EXIT_PARTIAL if failed else EXIT_OK


def _reconstructor(a, otf):
    cfg = recon.ReconConfig(wiener_w=a.wiener_w, apodization=a.apodization,
                            assume_known_patterns=not a.estimate)
    if a.method == "sim":
        return lambda s: recon.sim_reconstruct(s, otf, cfg)
    if a.method == "widefield":
        return recon.widefield
    return lambda s: recon.wiener_deconvolve(recon.widefield(s), otf, a.wiener_w)


def cmd_reconstruct(a) -> int:
    stack = image.read_stack(a.input)
    otf = optics.make_otf(_optical_config(a), *stack.shape)
    if a.method == "sim" and a.estimate:
        for i, e in enumerate(recon.estimate_patterns(stack, otf)):
            emit(f"orientation{i}_k0", e.k0)
            emit(f"orientation{i}_theta_deg", float(np.rad2deg(e.theta)))
            emit(f"orientation{i}_phi_deg", float(np.rad2deg(e.phi)))
            emit(f"orientation{i}_m", e.m)
            emit(f"orientation{i}_score", e.score)
    out = _reconstructor(a, otf)(stack)
    info = save_array(a.out, out)
    if a.raw:
        with image.atomic_write(a.raw) as tmp, open(tmp, "wb") as fh:
            np.save(fh, out.astype(np.float32))
        emit("raw", a.raw)
    emit("method", a.method)
    emit("height", out.shape[0])
    emit("width", out.shape[1])
    emit("min", float(out.min()))
    emit("max", float(out.max()))
    emit("png_scale", info["scale"])
    emit("path", a.out)
    return EXIT_OK


def cmd_rolling(a) -> int:
    stream = image.read_container(a.input)
    otf = optics.make_otf(_optical_config(a), *stream.shape)
    outputs = rolling.rolling_reconstruct(stream, _reconstructor(a, otf), a.step, a.threads)
    out_dir = Path(a.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for o in outputs:
        save_array(out_dir / f"window_{o.start:05d}.{a.format}", o.image)
    emit("frames", len(stream))
    emit("windows", len(outputs))
    emit("timestamps", ",".join(str(o.time) for o in outputs))
    emit("out", str(out_dir))
    return EXIT_OK


def cmd_metrics(a) -> int:
    x, y = load_array(a.psnr[0]), load_array(a.psnr[1])
    emit("psnr", flowmetrics.psnr(x, y, a.peak))
    return EXIT_OK


def cmd_flow(a) -> int:
    f = flowmetrics.optical_flow(load_array(a.first), load_array(a.second), a.alpha, a.iters)
    mag = f.magnitude
    emit("median_flow", float(np.median(mag)))
    emit("max_flow", float(mag.max()))
    emit("mean_u", float(f.u.mean()))
    emit("mean_v", float(f.v.mean()))
    if a.out:
        path = Path(a.out)
        with image.atomic_write(path) as tmp, open(tmp, "wb") as fh:
            np.savez(fh, u=f.u, v=f.v)
        emit("path", a.out)
    return EXIT_OK


def cmd_motion_stats(a) -> int:
    source = datagen.SequenceSource.from_dir(a.directory)
    seq = datagen.sequence_from_source(source, a.skip, a.start)
    st = flowmetrics.motion_stats(seq, a.alpha, a.iters)
    emit("max_flow", st.max_flow)
    emit("median_flow", st.median_flow)
    emit("median_flow_512", st.median_flow_ref)
    emit("regime", st.regime.value)
    return EXIT_OK


def cmd_confound(a) -> int:
    stack = image.read_stack(a.input)
    emit("score", flowmetrics.pattern_confound_score(stack, a.alpha, a.iters))
    return EXIT_OK


def cmd_check_grad(a) -> int:
    err, tol = gradcheck.run_check(a.op, a.seed)
    emit("op", a.op)
    emit("max_rel_error", err)
    emit("tolerance", tol)
    emit("pass", int(err < tol))
    return EXIT_OK if err < tol else EXIT_CHECK_FAILED


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _common(common)
    parser = argparse.ArgumentParser(
        prog="simkit", description="Structured illumination simulation and reconstruction.",
        epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_,
                           epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=fn)
        return p

    p = add("otf", cmd_otf, "ideal OTF, PSF and cutoff report")
    _optics_args(p)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", help="OTF image (.png or .npy)")
    p.add_argument("--psf-out", help="PSF image (.png or .npy)")
    p.add_argument("--profile", help="CSV of the radial OTF profile")

    p = add("simulate", cmd_simulate, "simulate a raw SIM stack or a longer acquisition")
    _optics_args(p)
    _noise_args(p)
    p.add_argument("--input", help="sample image (default: a synthetic phantom)")
    p.add_argument("--phantom", choices=("cells", "texture", "points"), default="cells")
    p.add_argument("--separation", type=int, default=3, help="point spacing for --phantom points")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--motion", type=float, nargs=2, metavar=("DY", "DX"),
                   help="sample drift in pixels per frame")
    p.add_argument("--out", required=True, help="output .vsim container")

    p = add("dataset", cmd_dataset, "synthesize paired training samples from frame directories")
    _optics_args(p)
    _noise_args(p)
    p.add_argument("sources", nargs="*", help="frame directories (one per video)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=0)
    p.add_argument("--crop", type=int, default=128, help="input crop size (target is 2x)")
    p.add_argument("--skip", type=int, default=0, help="frames skipped between samples")
    p.add_argument("--downsample", choices=("box", "bilinear"), default="box")
    p.add_argument("--replay", help="regenerate from an existing manifest")

    for name, fn, help_ in (("reconstruct", cmd_reconstruct, "reconstruct one 9-frame stack"),
                            ("rolling", cmd_rolling, "sliding-window reconstruction of a stream")):
        p = add(name, fn, help_)
        _optics_args(p)
        p.add_argument("input", help=".vsim container")
        p.add_argument("--method", choices=("sim", "widefield", "wiener"), default="sim")
        known = p.add_mutually_exclusive_group()
        known.add_argument("--estimate", action="store_true",
                           help="estimate pattern parameters from the data")
        known.add_argument("--known-patterns", action="store_false", dest="estimate",
                           help="use the recorded pattern parameters (default)")
        p.add_argument("--wiener-w", "--w", type=float, default=0.05)
        p.add_argument("--apodization", "--apodize", choices=("triangle", "none"),
                       default="triangle")
        p.add_argument("--out", required=True)
        if name == "reconstruct":
            p.add_argument("--raw", help="also write the unscaled image as float32 .npy")
        if name == "rolling":
            p.add_argument("--step", type=int, default=1)
            p.add_argument("--format", choices=("npy", "png"), default="npy")

    p = add("metrics", cmd_metrics, "image quality metrics")
    p.add_argument("--psnr", nargs=2, metavar=("A", "B"), required=True)
    p.add_argument("--peak", type=float, default=1.0)

    def flow_args(p):
        p.add_argument("--alpha", type=float, default=10.0)
        p.add_argument("--iters", type=int, default=200)

    p = add("flow", cmd_flow, "Horn-Schunck optical flow between two images")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--out", help="write u and v to an .npz file")
    flow_args(p)

    p = add("motion-stats", cmd_motion_stats, "first-to-centre flow statistics of a frame directory")
    p.add_argument("directory")
    p.add_argument("--skip", type=int, default=0)
    p.add_argument("--start", type=int, default=0)
    flow_args(p)

    p = add("confound", cmd_confound, "spurious flow between frames of a static stack")
    p.add_argument("input")
    flow_args(p)

    p = add("check-grad", cmd_check_grad, "finite-difference check of an attention backward")
    p.add_argument("--op", choices=sorted(gradcheck.CHECKS), required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help and 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if a.threads < 1:
        return _fail(EXIT_USAGE, "usage", "--threads must be >= 1")
    try:
        return a.func(a)
    except CliError as exc:
        return _fail(exc.code, "error", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING_INPUT, "missing-input", str(exc))
    except (image.ContainerError, image.ImageReadError) as exc:
        return _fail(EXIT_BAD_INPUT, "bad-input", str(exc))
    except recon.EstimationError as exc:
        return _fail(EXIT_ESTIMATION, "estimation", str(exc))
    except ValueError as exc:
        return _fail(EXIT_INVALID_CONFIG, "invalid-config", str(exc))
    except OSError as exc:
        return _fail(EXIT_WRITE, "io", str(exc))


def _fail(code: int, kind: str, message: str) -> int:
    print(f"error kind={kind} code={code}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
