"""Command-line entry point: ``anchorfuse {densify,refine,eval,synth}``.

Exit codes: 0 success, 1 validation or I/O failure, 2 solver did not
converge (output still written), 3 ground truth has no valid pixel.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings

import numpy as np

from . import io
from .config import RunConfig, load_config
from .errors import DimensionError
from .grid import as_mask
from .metrics import EmptyMaskWarning, evaluate
from .poisson import CgSettings, densify, scale_shift_align
from .refine import handcrafted_features, refine

log = logging.getLogger("anchorfuse")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_EMPTY_MASK = 0, 1, 2, 3


class CliError(Exception):
    pass


def _read_any(path) -> np.ndarray:
    if not os.path.exists(path):
        raise CliError(f"file not found: {path}")
    if str(path).lower().endswith(".pfm"):
        return io.read_float_raster(path)
    return io.read_depth_png(path)


def _require_same(**grids):
    shapes = {k: v.shape for k, v in grids.items()}
    if len(set(shapes.values())) > 1:
        raise DimensionError("shape mismatch: " + ", ".join(
            f"{k} {s[0]}x{s[1]}" for k, s in shapes.items()))


def _save_depth(grid, path):
    # the PNG codec cannot hold negative or >255.996 m values
    io.write_depth_png(np.clip(grid, 0.0, io.MAX_DEPTH), path)


def _append_row(path, header, row):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(header)
        writer.writerow(row)


def cmd_densify(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    sparse = _read_any(args.sparse)
    prior = _read_any(args.prior)
    _require_same(sparse=sparse, prior=prior)
    settings = cfg.cg
    if args.tol is not None:
        settings = CgSettings(args.tol, settings.max_iterations)
    if args.align or cfg.align:
        prior, a, b = scale_shift_align(prior, sparse)
        log.info("aligned prior: scale=%r shift=%r", a, b)
    pseudo, report = densify(sparse, prior, settings)
    _save_depth(pseudo, args.out)
    print(f"iterations={report.iterations}")
    print(f"final_rel_residual={report.final_rel_residual!r}")
    print(f"converged={str(report.converged).lower()}")
    if args.report:
        _append_row(args.report, ("iterations", "final_rel_residual", "converged"),
                    (report.iterations, repr(report.final_rel_residual),
                     str(report.converged).lower()))
    if args.figure:
        from .plotting import plot_densify
        plot_densify(sparse, prior, pseudo, args.figure)
    if not report.converged:
        print(f"warning: CG did not converge; {args.out} holds the last iterate", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = load_config(args.config)
    init = _read_any(args.init)
    sensor = _read_any(args.sensor)
    if not os.path.exists(args.mask):
        raise CliError(f"file not found: {args.mask}")
    mask = io.read_mask_png(args.mask)
    image = _read_any(args.image) if args.image else init
    _require_same(init=init, sensor=sensor, mask=mask, image=image[..., 0] if image.ndim == 3 else image)
    features = handcrafted_features(image, init)
    out = refine(init, sensor, as_mask(mask), features, cfg.refine)
    _save_depth(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = _read_any(args.pred)
    gt = _read_any(args.gt)
    _require_same(pred=pred, gt=gt)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyMaskWarning)
        report = evaluate(pred, gt, args.d_max)
    empty = any(issubclass(w.category, EmptyMaskWarning) for w in caught)
    print(report.to_text())
    if args.csv:
        report.append_csv(args.csv)
    if args.figure:
        from .plotting import plot_eval
        plot_eval(pred, gt, args.figure, report)
    if empty:
        print("warning: ground truth has no valid pixels", file=sys.stderr)
        return EXIT_EMPTY_MASK
    return EXIT_OK


def cmd_synth(args) -> int:
    from .oracle import synth_scene

    scene = synth_scene(args.height, args.width, args.seed, density=args.density)
    os.makedirs(args.outdir, exist_ok=True)
    io.write_depth_png(scene.dense_gt, os.path.join(args.outdir, "gt.png"))
    io.write_float_raster(scene.prior, os.path.join(args.outdir, "prior.pfm"))
    io.write_depth_png(scene.sparse, os.path.join(args.outdir, "sparse.png"))
    io.write_mask_png(scene.mask, os.path.join(args.outdir, "mask.png"))
    print(f"wrote gt.png prior.pfm sparse.png mask.png to {args.outdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchorfuse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("densify", help="Poisson-fuse a prior with sparse anchors")
    p.add_argument("--sparse", required=True, help="16-bit depth PNG of anchors")
    p.add_argument("--prior", required=True, help="PFM (or depth PNG) dense prior")
    p.add_argument("--align", action="store_true", help="least-squares scale/shift the prior first")
    p.add_argument("--tol", type=float, help="CG relative residual tolerance")
    p.add_argument("--config", help="key=value run configuration")
    p.add_argument("--out", default="densified.png")
    p.add_argument("--report", help="append a solve report row to this CSV")
    p.add_argument("--figure", help="write a diagnostic figure (PNG/PDF)")
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("refine", help="affinity propagation with sensor anchoring")
    p.add_argument("--init", required=True)
    p.add_argument("--sensor", required=True)
    p.add_argument("--mask", required=True, help="PNG, nonzero = observed")
    p.add_argument("--config", required=True)
    p.add_argument("--image", help="guidance intensity raster; defaults to --init")
    p.add_argument("--out", default="refined.png")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="masked RMSE/MAE and losses")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--d-max", type=float, default=90.0)
    p.add_argument("--csv", help="append the report row to this CSV")
    p.add_argument("--figure", help="write a diagnostic figure (PNG/PDF)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic test scene")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--density", type=float, default=0.06)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
