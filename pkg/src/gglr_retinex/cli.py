"""Command-line front end: ``gglr-retinex enhance`` and ``gglr-retinex bench``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .imageio import add_noise, crop_to_multiple, load_image, save_image
from .metrics import loe, mse_psnr
from .report import RunReport
from .retinex import PatchConvergenceError, RetinexParams, enhance_image

log = logging.getLogger("gglr_retinex")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_ENHANCE = 4
EXIT_OUTPUT = 5

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, code: int):
        self.stage = stage
        self.code = code
        super().__init__(f"{stage} error: {message}")


@dataclass
class RunConfig:
    input_path: str
    output_path: str
    params: RetinexParams = field(default_factory=RetinexParams)
    noise_sigma: float = 0.001
    seed: int = 0
    report_path: Optional[str] = None
    reference_path: Optional[str] = None
    resize_policy: str = "crop"
    threads: int = 1
    loe_down_to: int = 50

    def __post_init__(self):
        if not self.input_path or not self.output_path:
            raise ValueError("input and output paths must be non-empty")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.resize_policy not in ("crop", "error"):
            raise ValueError("resize_policy must be 'crop' or 'error'")

    @property
    def precondition(self) -> bool:
        return self.params.precondition


def _prepare(img, n: int, policy: str):
    if img.height % n == 0 and img.width % n == 0:
        return img
    if policy == "error":
        raise ValueError(f"image is {img.height}x{img.width}, not divisible by patch size {n}")
    return crop_to_multiple(img, n)


def process(config: RunConfig):
    """Run the pipeline in-process; returns ``(output_image, RunReport)``.

    Raises :class:`StageError` tagged with the failing stage.
    """
    try:
        img = load_image(config.input_path)
    except Exception as exc:
        raise StageError("input", str(exc), EXIT_INPUT) from exc
    try:
        img = _prepare(img, config.params.patch_size, config.resize_policy)
    except ValueError as exc:
        raise StageError("input", str(exc), EXIT_INPUT) from exc

    reference = None
    if config.reference_path:
        try:
            reference = _prepare(load_image(config.reference_path), config.params.patch_size,
                                 config.resize_policy)
        except Exception as exc:
            raise StageError("input", f"reference: {exc}", EXIT_INPUT) from exc

    log.info("loaded %s (%dx%d, %d channels)", config.input_path, img.height, img.width, img.channels)
    noisy = add_noise(img, config.noise_sigma, config.seed)
    try:
        out, enh = enhance_image(noisy, config.params, threads=config.threads)
    except (PatchConvergenceError, ValueError, FloatingPointError) as exc:
        raise StageError("enhance", str(exc), EXIT_ENHANCE) from exc

    extra = {
        "input": str(config.input_path),
        "noise_sigma": float(config.noise_sigma),
        "seed": int(config.seed),
        "precondition": bool(config.params.precondition),
        "gamma": float(config.params.gamma),
        "mu_r": float(config.params.mu_r),
        "mu_l": float(config.params.mu_l),
        "sigma_r": float(config.params.sigma_r),
        "sigma_l": float(config.params.sigma_l),
        "sigma_c": float(config.params.sigma_c),
        "patch_size": int(config.params.patch_size),
        "outer_iters": int(config.params.outer_iters),
        "cg_tol": float(config.params.cg_tol),
        "loe": loe(img, out, config.loe_down_to).value,
    }
    if reference is not None:
        if reference.data.shape != out.data.shape:
            raise StageError("input", "reference image size does not match input", EXIT_INPUT)
        extra["mse"], extra["psnr"] = mse_psnr(reference, out)
    return out, RunReport.from_enhance(enh, extra)


def run(config: RunConfig) -> int:
    try:
        out, report = process(config)
        try:
            save_image(out, config.output_path)
            if config.report_path:
                report.write(config.report_path)
        except OSError as exc:
            raise StageError("output", str(exc), EXIT_OUTPUT) from exc
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    s = report.summary
    print(f"{config.input_path}: {s['height']}x{s['width']} in {s['wall_time']:.2f}s, "
          f"{s['cg_iterations_total']} CG iterations, LOE {s['loe']:.4f}")
    return EXIT_OK


def bench(input_dir, report_path, params: RetinexParams, noise_sigma: float = 0.001, seed: int = 0,
          threads: int = 1, output_dir=None) -> List[dict]:
    """Enhance every image in ``input_dir`` and write a timing table."""
    files = sorted(p for p in Path(input_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise StageError("input", f"no PNG/PPM/PGM images in {input_dir}", EXIT_INPUT)
    rows = []
    for path in files:
        out_path = Path(output_dir) / f"{path.stem}_enhanced.png" if output_dir else Path(os.devnull)
        cfg = RunConfig(str(path), str(out_path), params, noise_sigma, seed, threads=threads)
        t0 = time.perf_counter()
        out, rep = process(cfg)
        elapsed = time.perf_counter() - t0
        if output_dir:
            save_image(out, out_path)
        s = rep.summary
        rows.append({
            "image": path.stem,
            "width": s["width"],
            "height": s["height"],
            "seconds": elapsed,
            "cg_iterations": s["cg_iterations_total"],
            "loe": s["loe"],
        })
    Path(report_path).write_text(format_bench_table(rows))
    return rows


def format_bench_table(rows: List[dict]) -> str:
    head = f"{'Image':<16} {'Resolution':>12} {'Time [s]':>10} {'CG iters':>10} {'LOE':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        res = f"{r['width']} x {r['height']}"
        lines.append(f"{r['image']:<16} {res:>12} {r['seconds']:>10.2f} {r['cg_iterations']:>10d} {r['loe']:>8.4f}")
    lines.append("-" * len(head))
    lines.append(f"{'Average':<16} {'':>12} {np.mean([r['seconds'] for r in rows]):>10.2f} "
                 f"{np.mean([r['cg_iterations'] for r in rows]):>10.1f} {np.mean([r['loe'] for r in rows]):>8.4f}")
    return "\n".join(lines) + "\n"


def _add_param_args(p: argparse.ArgumentParser):
    d = RetinexParams()
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--mu-r", type=float, default=d.mu_r)
    p.add_argument("--mu-l", type=float, default=d.mu_l)
    p.add_argument("--sigma-r", type=float, default=d.sigma_r)
    p.add_argument("--sigma-l", type=float, default=d.sigma_l)
    p.add_argument("--sigma-c", type=float, default=d.sigma_c)
    p.add_argument("--noise-sigma", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-size", type=int, default=d.patch_size)
    p.add_argument("--outer-iters", type=int, default=d.outer_iters)
    p.add_argument("--cg-tol", type=float, default=d.cg_tol)
    p.add_argument("--no-precondition", action="store_true")
    p.add_argument("--no-kappa", action="store_true", help="skip condition-number estimates in the report")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def _params_from(args) -> RetinexParams:
    return RetinexParams(
        mu_r=args.mu_r, mu_l=args.mu_l, sigma_r=args.sigma_r, sigma_l=args.sigma_l,
        sigma_c=args.sigma_c, gamma=args.gamma, patch_size=args.patch_size,
        outer_iters=args.outer_iters, cg_tol=args.cg_tol,
        precondition=not args.no_precondition, estimate_kappa=not args.no_kappa,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gglr-retinex",
                                     description="Joint low-light enhancement and denoising.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    enh = sub.add_parser("enhance", help="enhance a single image")
    enh.add_argument("--input", required=True)
    enh.add_argument("--output", required=True)
    enh.add_argument("--report")
    enh.add_argument("--reference", help="clean reference image for MSE/PSNR")
    enh.add_argument("--resize-policy", choices=("crop", "error"), default="crop")
    _add_param_args(enh)

    b = sub.add_parser("bench", help="enhance a directory and emit a timing table")
    b.add_argument("--input-dir", required=True)
    b.add_argument("--report", required=True)
    b.add_argument("--output-dir")
    _add_param_args(b)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        params = _params_from(args)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "enhance":
        try:
            cfg = RunConfig(args.input, args.output, params, args.noise_sigma, args.seed,
                            args.report, args.reference, args.resize_policy, args.threads)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run(cfg)

    try:
        rows = bench(args.input_dir, args.report, params, args.noise_sigma, args.seed,
                     args.threads, args.output_dir)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    print(format_bench_table(rows), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
