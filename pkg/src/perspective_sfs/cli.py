"""Command-line interface: ``render``, ``noise``, ``reconstruct``, ``evaluate``.

Exit codes: 0 success, 2 usage error, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .field import CameraIntrinsics, ScalarField
from .forward_model import (
    SceneSpec,
    add_gaussian_noise,
    generate_scene,
    levels_to_irradiance,
    quantise_8bit,
    scene_depth,
    shade,
    shade_analytic,
    to_levels,
)
from .metrics import relative_image_error, relative_surface_error, surface_error_map
from .solver import SolverConfig, SolverDivergence, reconstruct

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger("perspective_sfs")


class UsageError(Exception):
    pass


def _size(text: str):
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 256x256, got {text!r}")
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _pair(text: str):
    try:
        a, b = text.split(",")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")


def _count(text: str) -> int:
    # accepts 1e6 style counts
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if value < 0 or value != int(value):
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def _add_intrinsics(p: argparse.ArgumentParser):
    p.add_argument("--focal", type=float, default=1.0, help="focal length (default 1)")
    p.add_argument("--h", type=float, default=None, help="grid spacing for both axes")
    p.add_argument("--hx", type=float, default=None)
    p.add_argument("--hy", type=float, default=None)
    p.add_argument("--pp", type=_pair, default=None, help="principal point 'cx,cy' in pixels (default: image centre)")


def _intrinsics(args, width: int, height: int) -> CameraIntrinsics:
    hx = args.hx if args.hx is not None else args.h
    hy = args.hy if args.hy is not None else args.h
    if hx is None or hy is None:
        raise UsageError("grid spacing missing: give --h or both --hx and --hy")
    cx, cy = args.pp if args.pp is not None else (width / 2.0, height / 2.0)
    try:
        return CameraIntrinsics(args.focal, hx, hy, cx, cy)
    except ValueError as exc:
        raise UsageError(str(exc))


def _intrinsics_entries(k: CameraIntrinsics) -> dict:
    return {"focal": k.focal, "hx": k.hx, "hy": k.hy, "cx": k.cx, "cy": k.cy}


def _manifest_path(explicit, primary) -> Path:
    return Path(explicit) if explicit else Path(str(primary) + ".manifest")


def cmd_render(args) -> dict:
    width, height = args.size
    k = _intrinsics(args, width, height)
    params = {}
    if args.z0 is not None:
        params["z0"] = args.z0
    if args.radius is not None:
        params["radius"] = args.radius
    try:
        spec = SceneSpec(args.scene, params)
        depth = generate_scene(spec, k, width, height)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.normals == "analytic":
        _, zx, zy = scene_depth(spec, k, width, height)
        irradiance = shade_analytic(depth, zx, zy, k)
    else:
        irradiance = shade(depth, k)
    quantised, scale = quantise_8bit(irradiance)
    io.write_pgm(args.image, to_levels(quantised, scale))
    io.write_pfm(args.depth, depth.data)
    entries = {
        "command": "render",
        "scene": args.scene,
        **{f"scene_{key}": float(v) for key, v in params.items()},
        "width": width,
        "height": height,
        **_intrinsics_entries(k),
        "normals": args.normals,
        "image": args.image,
        "depth": args.depth,
        "irradiance_scale": scale,
    }
    return entries


def cmd_noise(args) -> dict:
    if args.sigma < 0:
        raise UsageError("sigma must be >= 0")
    levels = io.read_pgm(args.input)
    noisy = add_gaussian_noise(ScalarField(levels.astype(float)), args.sigma, args.seed)
    io.write_pgm(args.output, np.floor(noisy.data + 0.5).astype(np.uint8))
    entries = {
        "command": "noise",
        "input": args.input,
        "output": args.output,
        "sigma": args.sigma,
        "seed": args.seed,
    }
    if args.irradiance_scale is not None:
        entries["irradiance_scale"] = args.irradiance_scale
    return entries


def cmd_reconstruct(args) -> dict:
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if not args.irradiance_scale > 0:
        raise UsageError("--irradiance-scale must be positive")
    levels = io.read_pgm(args.image)
    height, width = levels.shape
    k = _intrinsics(args, width, height)
    image = levels_to_irradiance(levels, args.irradiance_scale)
    confidence = None
    if args.mask:
        mask = io.read_pgm(args.mask)
        if mask.shape != levels.shape:
            raise UsageError(f"mask is {mask.shape[1]}x{mask.shape[0]}, image is {width}x{height}")
        confidence = ScalarField(mask / 255.0)
    try:
        cfg = SolverConfig(
            alpha=args.alpha,
            tau=args.tau,
            iterations=args.iters,
            eta=args.eta,
            lam=args.lam,
            scheme=args.scheme,
            penaliser=args.penaliser,
            min_level_size=args.min_level_size,
            tau_full=args.tau_full,
            backend=args.backend,
            threads=args.threads,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    initial = None if args.init == "pointwise" else float(args.init)
    try:
        result = reconstruct(image, k, confidence, cfg, initial=initial)
    except (ValueError, FloatingPointError) as exc:
        raise SolverDivergence(str(exc)) from exc
    io.write_pfm(args.depth, result.depth.data)
    io.write_pgm(args.reprojection, to_levels(result.reprojection, args.irradiance_scale))
    io.write_trace(args.trace, result.energy_trace)
    entries = {
        "command": "reconstruct",
        "image": args.image,
        "mask": args.mask or "",
        "irradiance_scale": args.irradiance_scale,
        "width": width,
        "height": height,
        **_intrinsics_entries(k),
        "alpha": cfg.alpha,
        "tau": cfg.tau,
        "tau_full": cfg.tau_full if cfg.tau_full is not None else "",
        "iterations": cfg.iterations,
        "eta": cfg.eta,
        "lambda": cfg.lam,
        "penaliser": cfg.penaliser,
        "scheme": cfg.scheme,
        "min_level_size": cfg.min_level_size,
        "init": args.init,
        "backend": "numba" if cfg.compiled else "numpy",
        "threads": args.threads if args.threads is not None else os.cpu_count(),
        "levels": result.levels,
        "depth": args.depth,
        "reprojection": args.reprojection,
        "trace": args.trace,
    }
    if cfg.scheme == "full" and cfg.tau_full is None:
        h = min(k.hx, k.hy)
        entries["warning"] = (
            f"full scheme steps with tau*h^2, about {1.0 / (h * h):.3g} times more "
            "iterations than the simplified scheme for the same stopping time"
        )
    return entries


def cmd_evaluate(args) -> dict:
    depth = ScalarField(io.read_pfm(args.depth))
    gt_depth = ScalarField(io.read_pfm(args.gt_depth))
    if depth.shape != gt_depth.shape:
        raise UsageError(f"depth {depth.shape} and ground truth {gt_depth.shape} differ in size")
    k = _intrinsics(args, depth.width, depth.height)
    if not np.all(gt_depth.data > 0):
        raise UsageError("ground-truth depth must be positive")
    rse = relative_surface_error(depth, gt_depth, k)
    print(f"rse={rse!r}")
    entries = {"command": "evaluate", "depth": args.depth, "gt_depth": args.gt_depth, **_intrinsics_entries(k), "rse": rse}
    if args.reprojection or args.gt_image:
        if not (args.reprojection and args.gt_image):
            raise UsageError("--reprojection and --gt-image go together")
        reproj = ScalarField(io.read_pgm(args.reprojection).astype(float))
        gt_image = ScalarField(io.read_pgm(args.gt_image).astype(float))
        if reproj.shape != gt_image.shape or reproj.shape != depth.shape:
            raise UsageError("image sizes do not match the depth maps")
        try:
            rie = relative_image_error(reproj, gt_image)
        except ValueError as exc:
            raise UsageError(str(exc))
        print(f"rie={rie!r}")
        entries.update(reprojection=args.reprojection, gt_image=args.gt_image, rie=rie)
    if args.mask:
        mask = io.read_pgm(args.mask)
        if mask.shape != depth.shape:
            raise UsageError("mask size does not match the depth maps")
        if not mask.any():
            raise UsageError("mask selects no pixels")
        rse_m = relative_surface_error(depth, gt_depth, k, mask=mask)
        print(f"rse_masked={rse_m!r}")
        entries.update(mask=args.mask, rse_masked=rse_m)
        if "rie" in entries:
            rie_m = relative_image_error(reproj, gt_image, mask=mask)
            print(f"rie_masked={rie_m!r}")
            entries["rie_masked"] = rie_m
    if args.error_map:
        emap, flagged = surface_error_map(depth, gt_depth, k, args.threshold)
        # 8-bit map: grey level is the error relative to the threshold, saturating at 10x
        levels = np.clip(emap.data / (10.0 * args.threshold) * 255.0, 0, 255)
        io.write_pgm(args.error_map, levels)
        entries.update(error_map=args.error_map, threshold=args.threshold, flagged=int(flagged.sum()))
    return entries


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perspective-sfs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a synthetic scene to an 8-bit image")
    p.add_argument("--scene", choices=("sombrero", "plane", "hemisphere"), required=True)
    p.add_argument("--size", type=_size, required=True, help="WIDTHxHEIGHT")
    _add_intrinsics(p)
    p.add_argument("--z0", type=float, default=None, help="plane depth / hemisphere base depth")
    p.add_argument("--radius", type=float, default=None, help="hemisphere radius on the image plane")
    p.add_argument("--normals", choices=("central", "analytic"), default="central")
    p.add_argument("--image", default="image.pgm")
    p.add_argument("--depth", default="depth.pfm")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_render, primary="image")

    p = sub.add_parser("noise", help="add seeded Gaussian noise to a PGM image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sigma", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--irradiance-scale", type=float, default=None, help="carried into the manifest")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_noise, primary="output")

    p = sub.add_parser("reconstruct", help="estimate depth from a single image")
    p.add_argument("--image", required=True)
    p.add_argument("--irradiance-scale", type=float, required=True, help="grey level per unit irradiance")
    _add_intrinsics(p)
    p.add_argument("--mask", default=None, help="confidence PGM (level/255)")
    p.add_argument("--alpha", type=float, default=7.5e-5)
    p.add_argument("--tau", type=float, default=1e-2)
    p.add_argument("--tau-full", type=float, default=None, help="override the full-scheme step (default tau*h^2)")
    p.add_argument("--iters", type=_count, default=1_000_000, help="iterations per pyramid level")
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--penaliser", choices=("charbonnier", "quadratic"), default="charbonnier")
    p.add_argument("--scheme", choices=("full", "simplified", "alternating"), default="alternating")
    p.add_argument("--min-level-size", type=int, default=8)
    p.add_argument("--init", default="pointwise", help="'pointwise' or a plane depth")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores); results do not depend on it")
    p.add_argument("--backend", choices=("auto", "numpy", "numba"), default="auto")
    p.add_argument("--depth", default="reconstruction.pfm")
    p.add_argument("--reprojection", default="reprojection.pgm")
    p.add_argument("--trace", default="energy.csv")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_reconstruct, primary="depth")

    p = sub.add_parser("evaluate", help="relative surface and image errors")
    p.add_argument("--depth", required=True)
    p.add_argument("--gt-depth", required=True)
    p.add_argument("--reprojection", default=None)
    p.add_argument("--gt-image", default=None)
    _add_intrinsics(p)
    p.add_argument("--mask", default=None, help="also report errors on pixels where this PGM is non-zero")
    p.add_argument("--error-map", default=None)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--manifest", default=None, help="default: <depth>.eval.manifest")
    p.set_defaults(func=cmd_evaluate, primary=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "reconstruct" and args.init != "pointwise":
        try:
            if not float(args.init) > 0:
                raise ValueError
        except ValueError:
            parser.error("--init must be 'pointwise' or a positive depth")
    start = time.perf_counter()
    try:
        entries = args.func(args)
        entries["duration_s"] = time.perf_counter() - start
        entries["argv"] = " ".join(sys.argv[1:] if argv is None else argv)
        primary = getattr(args, args.primary) if args.primary else args.depth + ".eval"
        io.write_manifest(_manifest_path(args.manifest, primary), entries)
    except UsageError as exc:
        print(f"perspective-sfs {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, io.FormatError) as exc:
        print(f"perspective-sfs {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverDivergence as exc:
        print(f"perspective-sfs {args.command}: solver diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
