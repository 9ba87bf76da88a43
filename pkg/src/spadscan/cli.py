"""Command-line entry point for reproducible simulation and reconstruction runs.

Subcommands: simulate, reconstruct-intensity, reconstruct-depth, sweep,
calibrate, metrics.  Every run writes a manifest with the fully resolved
parameters and seed; re-running from that manifest reproduces outputs
byte-for-byte at any thread count.

Exit codes: 0 success, 1 validation error, 2 solver failure, 3 I/O error.
Machine-readable progress goes to stdout as JSON lines; human-readable
progress goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .admm import AdmmSettings, DerivativeStack
from .anscombe import build_inverse_table
from .core import (
    Config,
    IlluminationConfig,
    ValidationError,
    config_from_dict,
    config_to_dict,
    resolve_config,
)
from .depth import recover_depth
from .fileio import (
    read_manifest,
    save_image_16bit,
    save_preview_8bit,
    write_manifest,
    write_point_cloud,
)
from .forward import (
    HistogramCube,
    build_illumination_kernel,
    diffraction_only_operator,
    expected_histograms,
    intensity_observation,
    sample_poisson,
    sample_with_deadtime,
)
from .intensity import recover_intensity
from .scenes import (
    ball_scene_from_config,
    calibrate_epsilon,
    calibrate_pulse_photons,
    depth_rmse,
    load_scene,
    photon_statistics,
    psnr,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


def _emit(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), flush=True)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _load_run_config(args) -> Config:
    if getattr(args, "from_manifest", None):
        manifest = read_manifest(args.from_manifest)
        cfg = config_from_dict(manifest["config"])
        if manifest.get("seed") is not None and getattr(args, "seed", None) is None:
            args.seed = manifest["seed"]
        restore = {"capture": "capture", "sampler": "sampler", "scene": "scene",
                   "mu": "mu", "lambda": "lam", "median_order": "median"}
        for key, attr in restore.items():
            if key in manifest and getattr(args, attr, None) is None:
                setattr(args, attr, manifest[key])
        return cfg
    source = args.config or os.environ.get("SPADSCAN_CONFIG")
    cfg = resolve_config(source)
    if getattr(args, "window", None) is not None or getattr(args, "epsilon", None) is not None:
        cfg = replace(
            cfg,
            illumination=IlluminationConfig(
                window=args.window if args.window is not None else cfg.illumination.window,
                epsilon=args.epsilon if args.epsilon is not None else cfg.illumination.epsilon,
            ),
        )
    if getattr(args, "photons", None) is not None:
        cfg = replace(cfg, pulse_photons=args.photons)
    return cfg


def _resolve_scene(cfg: Config, scene_arg: str | None):
    if scene_arg in (None, "ball"):
        return ball_scene_from_config(cfg.grid, cfg.scene, cfg.system)
    return load_scene(scene_arg)


def _settings(cfg: Config, reg_weight: float) -> AdmmSettings:
    return AdmmSettings(
        rho1=cfg.recon.rho1,
        rho2=cfg.recon.rho2,
        reg_weight=reg_weight,
        max_iters=cfg.recon.max_iters,
        tol_primal=cfg.recon.tol,
        tol_dual=cfg.recon.tol,
    )


def _capture_operator(cfg: Config, capture: str):
    if capture == "diffraction-only":
        return diffraction_only_operator(cfg.grid, cfg.illumination.epsilon)
    if capture == "noise-only":
        return diffraction_only_operator(cfg.grid, 0.0)
    return build_illumination_kernel(cfg.grid, cfg.illumination)


def _simulate_cube(cfg: Config, scene, capture: str, sampler: str, seed: int) -> HistogramCube:
    op = _capture_operator(cfg, capture)
    pulse = cfg.build_pulse()
    if sampler == "deadtime":
        return sample_with_deadtime(scene, op, pulse, cfg.system, seed)
    expected = expected_histograms(scene, op, pulse, cfg.system)
    return sample_poisson(expected, seed, shape=cfg.grid)


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    seed = args.seed if args.seed is not None else 0
    capture = args.capture or "scene"
    sampler = args.sampler or "poisson"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = _resolve_scene(cfg, args.scene)
    _progress(f"simulating {cfg.grid.rows}x{cfg.grid.cols}x{cfg.system.m} capture={capture}")
    cube = _simulate_cube(cfg, scene, capture, sampler, seed)
    cube.save(out / "cube.bin")
    if args.csv:
        cube.to_csv(out / "cube.csv")
    if args.expected_csv:
        expected = expected_histograms(
            scene, _capture_operator(cfg, capture), cfg.build_pulse(), cfg.system
        )
        np.savetxt(out / "expected.csv", expected, delimiter=",")
    v = intensity_observation(cube)
    save_preview_8bit(out / "counts_preview.png", v, cfg.grid)
    save_image_16bit(out / "counts.png", v, cfg.grid)
    mean, std = photon_statistics(cube)
    write_manifest(
        out / "manifest.json",
        {
            "command": "simulate",
            "version": __version__,
            "seed": seed,
            "capture": capture,
            "sampler": sampler,
            "scene": args.scene or "ball",
            "config": config_to_dict(cfg),
        },
    )
    _emit("simulated", pixels=cfg.grid.n, bins=cfg.system.m,
          photons_per_pixel_mean=mean, photons_per_pixel_std=std,
          out=str(out / "cube.bin"))
    _progress(f"photons/pixel: {mean:.2f} +/- {std:.2f}")
    return EXIT_OK


def _load_cube_with_manifest(args) -> tuple[HistogramCube, Config]:
    cube_path = Path(args.cube)
    cube = HistogramCube.load(cube_path)
    manifest_path = cube_path.parent / "manifest.json"
    if (args.config is None and getattr(args, "from_manifest", None) is None
            and manifest_path.exists()):
        cfg = config_from_dict(read_manifest(manifest_path)["config"])
    else:
        cfg = _load_run_config(args)
    if cube.shape != cfg.grid:
        raise ValidationError(
            f"cube grid {cube.shape.rows}x{cube.shape.cols} does not match config "
            f"{cfg.grid.rows}x{cfg.grid.cols}"
        )
    return cube, cfg


def cmd_reconstruct_intensity(args) -> int:
    cube, cfg = _load_cube_with_manifest(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mu = args.mu if args.mu is not None else cfg.recon.denoise_weight
    lam = args.lam if args.lam is not None else cfg.recon.deconvolve_weight
    op = build_illumination_kernel(cfg.grid, cfg.illumination)
    stack = DerivativeStack(cfg.grid, cfg.recon.curvature_weight)
    v_max = float(intensity_observation(cube).max())
    table = build_inverse_table(lambda_max=max(v_max * 2.0, 10.0))
    _progress(f"intensity recovery: mu={mu:g} lambda={lam:g}")
    result = recover_intensity(cube, op, stack, table, mu, lam, _settings(cfg, mu),
                               workers=args.threads)
    np.savetxt(out / "alpha.csv", result.alpha_opt, delimiter=",")
    np.savetxt(out / "counts.csv", result.v, delimiter=",")
    np.savetxt(out / "b_opt.csv", result.b_opt, delimiter=",")
    np.savetxt(out / "b_star.csv", result.b_star, delimiter=",")
    save_image_16bit(out / "alpha.png", result.alpha_opt, cfg.grid)
    save_preview_8bit(out / "alpha_preview.png", result.alpha_opt, cfg.grid)
    result.denoise_report.to_csv(out / "denoise_convergence.csv")
    result.deconvolve_report.to_csv(out / "deconvolve_convergence.csv")
    metrics = {}
    if args.truth:
        truth = _resolve_scene(cfg, args.truth)
        scale = cfg.system.n_r * cfg.system.eta * cfg.pulse_photons
        metrics["psnr_db"] = psnr(result.alpha_opt / scale, truth.reflectivity, peak=1.0)
        with open(out / "metrics.csv", "w") as fh:
            fh.write("metric,value\n")
            fh.write(f"psnr_db,{metrics['psnr_db']!r}\n")
        _progress(f"PSNR vs truth: {metrics['psnr_db']:.2f} dB")
    write_manifest(
        out / "manifest.json",
        {
            "command": "reconstruct-intensity",
            "version": __version__,
            "cube": str(args.cube),
            "mu": mu,
            "lambda": lam,
            "config": config_to_dict(cfg),
        },
    )
    _emit("reconstructed", mode="intensity",
          denoise_iters=result.denoise_report.iterations,
          deconvolve_iters=result.deconvolve_report.iterations, **metrics)
    return EXIT_OK


def cmd_reconstruct_depth(args) -> int:
    cube, cfg = _load_cube_with_manifest(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mu = args.mu if args.mu is not None else cfg.recon.slice_weight
    order = args.median if args.median is not None else cfg.recon.median_order
    op = build_illumination_kernel(cfg.grid, cfg.illumination)
    pulse = cfg.build_pulse()
    _progress(f"depth recovery: mu={mu:g} median={order} ({cube.m} slices)")
    result = recover_depth(cube, op, pulse, mu, order, _settings(cfg, mu),
                           workers=args.threads)
    result.to_csv(out / "depth.csv")
    finite = result.depth[result.valid]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    save_image_16bit(out / "depth.png", np.where(result.valid, result.depth, lo),
                     cfg.grid, lo=lo, hi=hi)
    write_point_cloud(out / "points.xyz", cfg.grid, result.depth, result.valid,
                      cfg.scene.pixel_pitch_m)
    with open(out / "slice_convergence.csv", "w") as fh:
        fh.write("slice,iterations,primal_residual,dual_residual,objective\n")
        for j, rep in enumerate(result.slice_reports, start=1):
            fh.write(f"{j},{rep.iterations},{rep.primal_residual!r},"
                     f"{rep.dual_residual!r},{rep.objective!r}\n")
    metrics = {}
    if args.truth:
        truth = _resolve_scene(cfg, args.truth)
        metrics["depth_rmse_m"] = depth_rmse(result.depth, truth.depth, result.valid)
        with open(out / "metrics.csv", "w") as fh:
            fh.write("metric,value\n")
            fh.write(f"depth_rmse_m,{metrics['depth_rmse_m']!r}\n")
        _progress(f"depth RMSE vs truth: {metrics['depth_rmse_m'] * 1e3:.3f} mm")
    write_manifest(
        out / "manifest.json",
        {
            "command": "reconstruct-depth",
            "version": __version__,
            "cube": str(args.cube),
            "mu": mu,
            "median_order": order,
            "config": config_to_dict(cfg),
        },
    )
    _emit("reconstructed", mode="depth", valid_pixels=int(result.valid.sum()), **metrics)
    return EXIT_OK


def _sweep_point(cfg: Config, parameter: str, value: float, seed: int) -> float:
    """Simulate the phantom once and score one parameter setting."""
    scene = ball_scene_from_config(cfg.grid, cfg.scene, cfg.system)
    if parameter == "w":
        cfg = replace(cfg, illumination=replace(cfg.illumination, window=int(value)))
    op = build_illumination_kernel(cfg.grid, cfg.illumination)
    pulse = cfg.build_pulse()
    expected = expected_histograms(scene, op, pulse, cfg.system)
    cube = sample_poisson(expected, seed, shape=cfg.grid)
    scale = cfg.system.n_r * cfg.system.eta * cfg.pulse_photons
    if parameter in ("mu", "lambda", "w"):
        mu = value if parameter == "mu" else cfg.recon.denoise_weight
        lam = value if parameter == "lambda" else cfg.recon.deconvolve_weight
        stack = DerivativeStack(cfg.grid, cfg.recon.curvature_weight)
        v_max = float(intensity_observation(cube).max())
        table = build_inverse_table(lambda_max=max(v_max * 2.0, 10.0))
        result = recover_intensity(cube, op, stack, table, mu, lam, _settings(cfg, mu))
        return psnr(result.alpha_opt / scale, scene.reflectivity, peak=1.0)
    if parameter in ("N", "slice-mu"):
        order = int(value) if parameter == "N" else cfg.recon.median_order
        mu = value if parameter == "slice-mu" else cfg.recon.slice_weight
        result = recover_depth(cube, op, pulse, mu, order, _settings(cfg, mu))
        return -depth_rmse(result.depth, scene.depth, result.valid)
    raise ValidationError(f"unknown sweep parameter {parameter!r}")


def cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValidationError("sweep range is empty")
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        score = _sweep_point(cfg, args.parameter, value, seed)
        rows.append((value, score))
        _emit("sweep-point", parameter=args.parameter, value=value, score=score)
        _progress(f"{args.parameter}={value:g}: score={score:.4f}")
    best_value, best_score = max(rows, key=lambda r: r[1])
    with open(out / "sweep.csv", "w") as fh:
        metric = "psnr_db" if args.parameter in ("mu", "lambda", "w") else "neg_depth_rmse_m"
        fh.write(f"{args.parameter},{metric}\n")
        for value, score in rows:
            fh.write(f"{value!r},{score!r}\n")
    write_manifest(
        out / "manifest.json",
        {
            "command": "sweep",
            "version": __version__,
            "seed": seed,
            "parameter": args.parameter,
            "values": values,
            "best_value": best_value,
            "config": config_to_dict(cfg),
        },
    )
    _emit("sweep-best", parameter=args.parameter, value=best_value, score=best_score)
    _progress(f"best {args.parameter} = {best_value:g} (score {best_score:.4f})")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_run_config(args)
    scene = _resolve_scene(cfg, args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.solve == "epsilon":
        solved = calibrate_epsilon(scene, cfg.system, cfg.pulse_photons, args.target)
        cfg2 = replace(cfg, illumination=replace(cfg.illumination, epsilon=solved))
    else:
        solved = calibrate_pulse_photons(scene, cfg.system, cfg.illumination.epsilon, args.target)
        cfg2 = replace(cfg, pulse_photons=solved)
    cube = _simulate_cube(cfg2, scene, "diffraction-only", "poisson",
                          args.seed if args.seed is not None else 0)
    mean, std = photon_statistics(cube)
    write_manifest(
        out / "calibration.json",
        {
            "command": "calibrate",
            "version": __version__,
            "solve": args.solve,
            "target_diffraction_mean": args.target,
            "solved_value": solved,
            "verified_mean": mean,
            "verified_std": std,
            "config": config_to_dict(cfg2),
        },
    )
    _emit("calibrated", solve=args.solve, value=solved, verified_mean=mean)
    _progress(f"{args.solve} = {solved:g}; simulated diffraction capture: "
              f"{mean:.2f} +/- {std:.2f} photons/pixel")
    return EXIT_OK


def cmd_metrics(args) -> int:
    cube = HistogramCube.load(args.cube)
    mean, std = photon_statistics(cube)
    lines = [("photons_per_pixel_mean", mean), ("photons_per_pixel_std", std)]
    if args.truth and args.alpha:
        cfg = _load_run_config(args)
        truth = _resolve_scene(cfg, args.truth)
        alpha = np.loadtxt(args.alpha, delimiter=",")
        scale = cfg.system.n_r * cfg.system.eta * cfg.pulse_photons
        lines.append(("psnr_db", psnr(alpha / scale, truth.reflectivity, peak=1.0)))
    width = max(len(name) for name, _ in lines)
    for name, value in lines:
        _progress(f"{name.ljust(width)}  {value:.6g}")
    _emit("metrics", **{name: value for name, value in lines})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w") as fh:
            fh.write("metric,value\n")
            for name, value in lines:
                fh.write(f"{name},{value!r}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spadscan",
        description="Simulate and reconstruct SPAD/DMD block-illumination measurements.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seed=True):
        p.add_argument("--config", default=None,
                       help="profile name (default, desk) or config file path; "
                            "falls back to $SPADSCAN_CONFIG, then 'default'")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
        p.add_argument("--threads", type=int, default=None,
                       help="FFT worker threads; results are identical at any count")

    p = sub.add_parser("simulate", help="synthesize a photon-count cube")
    add_common(p)
    p.add_argument("--scene", default=None, help="'ball' (default) or scene file path")
    p.add_argument("--capture", choices=["scene", "diffraction-only", "noise-only"],
                   default=None, help="measurement type (default: scene)")
    p.add_argument("--sampler", choices=["poisson", "deadtime"], default=None,
                   help="photon sampler (default: poisson)")
    p.add_argument("--window", type=int, default=None, help="override illumination window")
    p.add_argument("--epsilon", type=float, default=None, help="override leakage fraction")
    p.add_argument("--photons", type=float, default=None, help="override photons per pulse")
    p.add_argument("--csv", action="store_true", help="also dump the cube as CSV")
    p.add_argument("--expected-csv", action="store_true",
                   help="also dump the noiseless expected-count matrix as CSV")
    p.add_argument("--from-manifest", default=None, help="re-run from a manifest file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct-intensity", help="recover the intensity image")
    add_common(p, seed=False)
    p.add_argument("--cube", required=True, help="cube.bin from a simulate run")
    p.add_argument("--mu", type=float, default=None, help="denoising weight")
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=None,
                   help="deconvolution weight")
    p.add_argument("--truth", default=None, help="'ball' or scene file for metrics")
    p.add_argument("--from-manifest", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct_intensity)

    p = sub.add_parser("reconstruct-depth", help="recover the depth image")
    add_common(p, seed=False)
    p.add_argument("--cube", required=True)
    p.add_argument("--mu", type=float, default=None, help="per-slice deconvolution weight")
    p.add_argument("--median", type=int, default=None, help="median filter order (odd)")
    p.add_argument("--truth", default=None)
    p.add_argument("--from-manifest", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct_depth)

    p = sub.add_parser("sweep", help="grid-evaluate a parameter and report the best")
    add_common(p)
    p.add_argument("--parameter", required=True, choices=["mu", "lambda", "w", "N", "slice-mu"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="solve leakage or pulse energy for a photon target")
    add_common(p)
    p.add_argument("--solve", choices=["epsilon", "photons"], required=True)
    p.add_argument("--target", type=float, required=True,
                   help="target leaked photons per pixel for an all-mirrors-off capture")
    p.add_argument("--scene", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("metrics", help="photon statistics and comparisons")
    add_common(p, seed=False)
    p.add_argument("--cube", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--alpha", default=None, help="alpha.csv from reconstruct-intensity")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _emit("error", kind="validation", message=str(exc))
        _progress(f"validation error: {exc}")
        return EXIT_VALIDATION
    except FloatingPointError as exc:
        _emit("error", kind="solver", message=str(exc))
        _progress(f"solver failure: {exc}")
        return EXIT_SOLVER
    except OSError as exc:
        _emit("error", kind="io", message=str(exc))
        _progress(f"i/o error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
