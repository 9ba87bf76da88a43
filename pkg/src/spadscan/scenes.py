"""Synthetic scenes, image-quality metrics, and photon-budget calibration."""

from __future__ import annotations

import numpy as np

from .core import (
    SPEED_OF_LIGHT,
    BallSceneConfig,
    GridShape,
    SceneModel,
    SystemParams,
    ValidationError,
)
from .forward import HistogramCube, intensity_observation

__all__ = [
    "make_ball_scene",
    "make_flat_scene",
    "psnr",
    "depth_rmse",
    "photon_statistics",
    "calibrate_epsilon",
    "calibrate_pulse_photons",
    "save_scene",
    "load_scene",
]


def make_ball_scene(
    shape: GridShape,
    ball_radius_m: float,
    ball_center_m: float,
    screen_dist_m: float,
    reflectivities: tuple[float, float] = (0.9, 0.35),
    pixel_pitch_m: float = 0.004,
    params: SystemParams | None = None,
) -> SceneModel:
    """Sphere-in-front-of-screen phantom under orthographic projection.

    Depth is the z-buffer of a sphere (center ``ball_center_m`` away,
    ``ball_radius_m`` radius, centered on the optical axis) against a flat
    screen at ``screen_dist_m``.  Reflectivity is piecewise constant:
    ``reflectivities = (ball, screen)``.  When ``params`` is given, the
    geometry is validated against the observation window.
    """
    if ball_radius_m < 0:
        raise ValidationError("ball radius must be non-negative")
    if ball_radius_m > 0 and ball_center_m - ball_radius_m <= 0:
        raise ValidationError("ball must sit strictly in front of the detector")
    if ball_center_m > screen_dist_m:
        raise ValidationError("ball must sit in front of the screen")
    rows, cols = shape.rows, shape.cols
    r_idx, c_idx = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    x = (c_idx - (cols - 1) / 2.0) * pixel_pitch_m
    y = (r_idx - (rows - 1) / 2.0) * pixel_pitch_m
    d2 = x**2 + y**2
    on_ball = d2 <= ball_radius_m**2
    depth_img = np.where(
        on_ball,
        ball_center_m - np.sqrt(np.maximum(ball_radius_m**2 - d2, 0.0)),
        screen_dist_m,
    )
    kappa_img = np.where(on_ball, reflectivities[0], reflectivities[1])
    if params is not None:
        max_tof = 2.0 * depth_img.max() / SPEED_OF_LIGHT
        min_tof = 2.0 * depth_img.min() / SPEED_OF_LIGHT
        if max_tof >= params.t_b - 0.5 * params.delta or min_tof < 0.5 * params.delta:
            raise ValidationError(
                f"scene depths [{depth_img.min():.4g}, {depth_img.max():.4g}] m fall "
                f"outside the observation window (T_b={params.t_b:.4g} s)"
            )
    return SceneModel(
        shape=shape,
        reflectivity=shape.vectorize(kappa_img),
        depth=shape.vectorize(depth_img),
    )


def ball_scene_from_config(shape: GridShape, cfg: BallSceneConfig,
                           params: SystemParams | None = None) -> SceneModel:
    return make_ball_scene(
        shape,
        ball_radius_m=cfg.radius_m,
        ball_center_m=cfg.center_dist_m,
        screen_dist_m=cfg.screen_dist_m,
        reflectivities=(cfg.ball_reflectivity, cfg.screen_reflectivity),
        pixel_pitch_m=cfg.pixel_pitch_m,
        params=params,
    )


def make_flat_scene(shape: GridShape, reflectivity: float, depth_m: float) -> SceneModel:
    """Uniform plane: every pixel shares one reflectivity and depth."""
    return SceneModel(
        shape=shape,
        reflectivity=np.full(shape.n, reflectivity),
        depth=np.full(shape.n, depth_m),
    )


def psnr(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images coincide."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValidationError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return np.inf
    return 10.0 * np.log10(peak**2 / mse)


def depth_rmse(
    estimated_depth: np.ndarray,
    true_depth: np.ndarray,
    mask: np.ndarray | None = None,
) -> float:
    """Root-mean-square depth error in meters over the masked pixels."""
    est = np.asarray(estimated_depth, dtype=np.float64)
    tru = np.asarray(true_depth, dtype=np.float64)
    if est.shape != tru.shape:
        raise ValidationError(f"depth shapes differ: {est.shape} vs {tru.shape}")
    if mask is None:
        mask = np.ones(est.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != est.shape:
        raise ValidationError("mask shape must match the depth vectors")
    if not np.any(mask):
        raise ValidationError("empty mask")
    return float(np.sqrt(np.mean((est[mask] - tru[mask]) ** 2)))


def photon_statistics(cube: HistogramCube) -> tuple[float, float]:
    """Mean and standard deviation of total photons per pixel."""
    totals = intensity_observation(cube).astype(np.float64)
    return float(totals.mean()), float(totals.std())


def _diffraction_mean_per_pixel(
    scene: SceneModel, params: SystemParams, pulse_photons: float, epsilon: float
) -> float:
    """Analytic leaked-light photons/pixel for an all-mirrors-off capture."""
    return params.n_r * params.eta * epsilon * pulse_photons * float(scene.reflectivity.sum())


def calibrate_epsilon(
    scene: SceneModel,
    params: SystemParams,
    pulse_photons: float,
    target_mean: float,
) -> float:
    """Leakage fraction that puts the all-off capture at ``target_mean``.

    ``target_mean`` counts leaked laser photons only; ambient and dark
    counts ride on top when simulating.
    """
    denom = _diffraction_mean_per_pixel(scene, params, pulse_photons, 1.0)
    if denom <= 0 or target_mean < 0:
        raise ValidationError("scene or pulse carries no light to calibrate against")
    return target_mean / denom


def calibrate_pulse_photons(
    scene: SceneModel,
    params: SystemParams,
    epsilon: float,
    target_mean: float,
) -> float:
    """Per-pulse photon scale that puts the all-off capture at ``target_mean``."""
    denom = _diffraction_mean_per_pixel(scene, params, 1.0, epsilon)
    if denom <= 0 or target_mean < 0:
        raise ValidationError("leakage or scene reflectivity is zero; nothing to calibrate")
    return target_mean / denom


def save_scene(scene: SceneModel, path) -> None:
    """Write the documented text format: header line, then kappa,depth rows."""
    with open(path, "w") as fh:
        fh.write(f"# spadscan scene rows={scene.shape.rows} cols={scene.shape.cols}\n")
        fh.write("# columns: reflectivity, depth_m; pixels in column-stacked order\n")
        for k, z in zip(scene.reflectivity, scene.depth):
            fh.write(f"{float(k)!r},{float(z)!r}\n")


def load_scene(path) -> SceneModel:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# spadscan scene"):
            raise ValidationError(f"not a scene file: {path}")
        fields = dict(part.split("=") for part in header.split() if "=" in part)
        shape = GridShape(rows=int(fields["rows"]), cols=int(fields["cols"]))
        data = np.loadtxt(fh, delimiter=",", comments="#").reshape(-1, 2)
    if data.shape[0] != shape.n:
        raise ValidationError(f"scene file has {data.shape[0]} pixels, expected {shape.n}")
    return SceneModel(shape=shape, reflectivity=data[:, 0], depth=data[:, 1])
