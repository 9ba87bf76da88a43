"""Shared domain types, grid indexing conventions, and configuration.

Conventions used throughout the package:

* Images live on a ``rows x cols`` grid and are vectorized column-wise
  (column-stacked).  The linear pixel index ``i`` is 1-based in the domain
  math and runs down each column first:  ``i = (col - 1) * rows + row``.
  NumPy arrays store the same vector 0-based; 2-D views use ``order='F'``.
* Depths are meters, rates are photons/second, times are seconds.
  Reflectivity is a relative, unitless value in [0, 1]; the per-pulse
  waveform absorbs the absolute photon normalization.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class ValidationError(ValueError):
    """Raised when a domain object or configuration fails its invariants."""


def _as_readonly(a: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GridShape:
    """Pixel grid dimensions; ``n = rows * cols`` pixels, column-stacked."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def vectorize(self, image: np.ndarray) -> np.ndarray:
        """Column-stack a ``rows x cols`` image into a length-n vector."""
        image = np.asarray(image)
        if image.shape != (self.rows, self.cols):
            raise ValidationError(f"image shape {image.shape} != grid {self.rows}x{self.cols}")
        return image.flatten(order="F")

    def unvectorize(self, vec: np.ndarray) -> np.ndarray:
        """Reshape a length-n column-stacked vector back into an image."""
        vec = np.asarray(vec)
        if vec.shape != (self.n,):
            raise ValidationError(f"vector length {vec.shape} != n={self.n}")
        return vec.reshape((self.rows, self.cols), order="F")


def pixel_to_rowcol(i: int, shape: GridShape) -> tuple[int, int]:
    """Map a 1-based linear pixel index to 1-based (row, col).

    Inverse of :func:`rowcol_to_pixel`.
    """
    if not 1 <= i <= shape.n:
        raise ValidationError(f"pixel index {i} out of range [1, {shape.n}]")
    row = (i - 1) % shape.rows + 1
    col = (i - 1) // shape.rows + 1
    return row, col


def rowcol_to_pixel(row: int, col: int, shape: GridShape) -> int:
    """Map 1-based (row, col) to the 1-based column-stacked pixel index."""
    if not (1 <= row <= shape.rows and 1 <= col <= shape.cols):
        raise ValidationError(f"(row={row}, col={col}) outside {shape.rows}x{shape.cols} grid")
    return (col - 1) * shape.rows + row


@dataclass(frozen=True)
class SceneModel:
    """Ground-truth scene: per-pixel relative reflectivity and depth (m)."""

    shape: GridShape
    reflectivity: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        refl = _as_readonly(self.reflectivity)
        dep = _as_readonly(self.depth)
        object.__setattr__(self, "reflectivity", refl)
        object.__setattr__(self, "depth", dep)
        n = self.shape.n
        if refl.shape != (n,) or dep.shape != (n,):
            raise ValidationError(
                f"scene vectors must have length n={n}, got {refl.shape} and {dep.shape}"
            )
        if np.any(refl < 0):
            raise ValidationError("reflectivity must be non-negative")
        if np.any(dep < 0):
            raise ValidationError("depth must be non-negative")


@dataclass(frozen=True)
class SystemParams:
    """Detector and timing parameters of one measurement.

    ``n_r`` laser pulses per measurement; the TCSPC module divides the
    observation interval ``T_b = m * delta`` into ``m`` bins of ``delta``
    seconds.  ``deadtime`` is the optional non-extensible SPAD reset time;
    it is only honored by the event-level Monte-Carlo sampler.
    """

    eta: float
    n_a: float
    n_d: float
    n_r: int
    delta: float
    m: int
    repetition_period: float
    deadtime: float | None = None

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValidationError(f"quantum efficiency must be in (0, 1], got {self.eta}")
        if self.n_a < 0 or self.n_d < 0:
            raise ValidationError("ambient and dark rates must be non-negative")
        if self.n_r < 0:
            raise ValidationError("pulse count must be non-negative")
        if self.m < 1:
            raise ValidationError(f"need at least one time-bin, got m={self.m}")
        if self.delta <= 0:
            raise ValidationError(f"bin duration must be positive, got {self.delta}")
        if self.t_b > self.repetition_period * (1 + 1e-12):
            raise ValidationError(
                f"observation interval {self.t_b:g}s exceeds repetition period "
                f"{self.repetition_period:g}s"
            )
        if self.deadtime is not None and self.deadtime < 0:
            raise ValidationError("deadtime must be non-negative")

    @property
    def t_b(self) -> float:
        """Observation interval in seconds."""
        return self.m * self.delta

    @property
    def background_rate(self) -> float:
        """Detected background photon rate, eta*n_a + n_d (photons/sec)."""
        return self.eta * self.n_a + self.n_d


@dataclass(frozen=True)
class IlluminationConfig:
    """Scan-window size ``w`` (pixels) and off-state leakage fraction."""

    window: int
    epsilon: float

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError(f"window must be >= 1, got {self.window}")
        if not 0 <= self.epsilon < 1:
            raise ValidationError(f"leakage must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class PulseModel:
    """Discretized emitted-pulse time histogram.

    ``waveform[j]`` is the mean number of detectable photons per pulse that
    the bin ``j`` of the emitted waveform carries, before quantum-efficiency
    and reflectivity scaling.  ``delta`` is the bin duration the waveform was
    discretized at.
    """

    m: int
    delta: float
    waveform: np.ndarray

    def __post_init__(self):
        wf = _as_readonly(self.waveform)
        object.__setattr__(self, "waveform", wf)
        if wf.shape != (self.m,):
            raise ValidationError(f"waveform must have length m={self.m}, got {wf.shape}")
        if np.any(wf < 0):
            raise ValidationError("waveform must be non-negative")
        if not np.any(wf > 0):
            raise ValidationError("waveform must have at least one positive entry")

    @property
    def photons_per_pulse(self) -> float:
        return float(self.waveform.sum())


def gaussian_pulse(
    m: int,
    delta: float,
    fwhm: float,
    photons: float = 1.0,
    center_bin: int | None = None,
) -> PulseModel:
    """Build a Gaussian pulse histogram holding ``photons`` total per pulse.

    Bin energies are exact integrals of the Gaussian over each bin.  The
    peak sits inside ``center_bin`` (default: four standard deviations from
    the start, so the rising edge is fully captured).
    """
    if fwhm <= 0 or photons <= 0:
        raise ValidationError("pulse fwhm and photon count must be positive")
    sigma = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    if center_bin is None:
        center_bin = min(int(np.ceil(4.0 * sigma / delta)), m - 1)
    if not 0 <= center_bin < m:
        raise ValidationError(f"center_bin {center_bin} outside [0, {m})")
    mu = (center_bin + 0.5) * delta
    edges = np.arange(m + 1) * delta
    from scipy.stats import norm

    mass = np.diff(norm.cdf(edges, loc=mu, scale=sigma))
    total = mass.sum()
    if total <= 0:
        raise ValidationError("pulse mass vanished; check fwhm against bin width")
    return PulseModel(m=m, delta=delta, waveform=photons * mass / total)


@dataclass(frozen=True)
class BallSceneConfig:
    """Geometry of the built-in sphere-in-front-of-screen phantom."""

    radius_m: float = 0.11
    center_dist_m: float = 0.50
    screen_dist_m: float = 0.72
    pixel_pitch_m: float = 0.004
    ball_reflectivity: float = 0.9
    screen_reflectivity: float = 0.35


@dataclass(frozen=True)
class ReconstructionConfig:
    """Regularization weights and solver knobs for both pipelines.

    The weights ship from a sweep on the built-in phantom (reproducible via
    ``spadscan sweep``): they maximize intensity PSNR / minimize depth RMSE
    for the default window size.
    """

    denoise_weight: float = 0.5
    deconvolve_weight: float = 0.5
    slice_weight: float = 2.0
    median_order: int = 5
    curvature_weight: float = 0.5
    rho1: float = 1.0
    rho2: float = 1.0
    max_iters: int = 500
    tol: float = 1e-5


@dataclass(frozen=True)
class Config:
    """Full run configuration: one object per simulated measurement setup."""

    grid: GridShape
    system: SystemParams
    illumination: IlluminationConfig
    pulse_fwhm: float
    pulse_photons: float
    pulse_center_bin: int | None
    scene: BallSceneConfig
    recon: ReconstructionConfig

    def build_pulse(self) -> PulseModel:
        return gaussian_pulse(
            self.system.m,
            self.system.delta,
            self.pulse_fwhm,
            self.pulse_photons,
            self.pulse_center_bin,
        )


def default_profile() -> Config:
    """Full-scale profile mirroring the reference SPAD/DMD bench.

    95x152 grid, 1410 bins of 4 ps, 5e6 pulses per measurement, 35% quantum
    efficiency, 1000:1 DMD contrast (leakage 1e-3), 80 ps pulses at 70 MHz.
    The per-pulse photon scale is calibrated so an all-mirrors-off capture
    of the built-in phantom averages ~25.6 leaked photons per pixel and the
    background alone averages ~0.2.
    """
    return Config(
        grid=GridShape(rows=95, cols=152),
        system=SystemParams(
            eta=0.35,
            n_a=10.0,
            n_d=3.6,
            n_r=5_000_000,
            delta=4e-12,
            m=1410,
            repetition_period=1.0 / 70e6,
            deadtime=77.8e-9,
        ),
        illumination=IlluminationConfig(window=5, epsilon=1e-3),
        pulse_fwhm=80e-12,
        pulse_photons=2.2998e-06,
        pulse_center_bin=None,
        scene=BallSceneConfig(),
        recon=ReconstructionConfig(),
    )


def desk_profile() -> Config:
    """Reduced 48x64, 256-bin profile for fast end-to-end studies.

    Rates and timing match :func:`default_profile`; the per-pulse photon
    scale is recalibrated for the smaller pixel count so the leaked-light
    level per pixel stays in the same regime (~25 photons/pixel).
    """
    return Config(
        grid=GridShape(rows=48, cols=64),
        system=SystemParams(
            eta=0.35,
            n_a=10.0,
            n_d=3.6,
            n_r=5_000_000,
            delta=4e-12,
            m=256,
            repetition_period=1.0 / 70e6,
            deadtime=77.8e-9,
        ),
        illumination=IlluminationConfig(window=5, epsilon=1e-3),
        pulse_fwhm=80e-12,
        pulse_photons=9.8695e-06,
        pulse_center_bin=None,
        scene=BallSceneConfig(
            radius_m=0.017,
            center_dist_m=0.094,
            screen_dist_m=0.101,
            pixel_pitch_m=0.0011,
        ),
        recon=ReconstructionConfig(),
    )


_PROFILES = {"default": default_profile, "desk": desk_profile}


def _parse_optional_float(text: str) -> float | None:
    text = text.strip()
    return None if text.lower() in ("", "none") else float(text)


def _parse_optional_int(text: str) -> int | None:
    text = text.strip()
    return None if text.lower() in ("", "none", "auto") else int(text)


def load_config(path: str | Path) -> Config:
    """Read a configuration file (INI key/value sections; see README).

    Missing keys fall back to the ``default`` profile values, so a file may
    override only the sections it cares about.
    """
    parser = configparser.ConfigParser()
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    parser.read(path)
    base = default_profile()

    def get(section, key, conv, fallback):
        if parser.has_option(section, key):
            return conv(parser.get(section, key))
        return fallback

    grid = GridShape(
        rows=get("grid", "rows", int, base.grid.rows),
        cols=get("grid", "cols", int, base.grid.cols),
    )
    system = SystemParams(
        eta=get("system", "eta", float, base.system.eta),
        n_a=get("system", "ambient_rate_hz", float, base.system.n_a),
        n_d=get("system", "dark_rate_hz", float, base.system.n_d),
        n_r=get("system", "pulses_per_measurement", int, base.system.n_r),
        delta=get("system", "bin_seconds", float, base.system.delta),
        m=get("system", "bins", int, base.system.m),
        repetition_period=get(
            "system", "repetition_period_seconds", float, base.system.repetition_period
        ),
        deadtime=get("system", "deadtime_seconds", _parse_optional_float, base.system.deadtime),
    )
    illumination = IlluminationConfig(
        window=get("illumination", "window", int, base.illumination.window),
        epsilon=get("illumination", "epsilon", float, base.illumination.epsilon),
    )
    scene = BallSceneConfig(
        radius_m=get("scene", "radius_m", float, base.scene.radius_m),
        center_dist_m=get("scene", "center_dist_m", float, base.scene.center_dist_m),
        screen_dist_m=get("scene", "screen_dist_m", float, base.scene.screen_dist_m),
        pixel_pitch_m=get("scene", "pixel_pitch_m", float, base.scene.pixel_pitch_m),
        ball_reflectivity=get("scene", "ball_reflectivity", float, base.scene.ball_reflectivity),
        screen_reflectivity=get(
            "scene", "screen_reflectivity", float, base.scene.screen_reflectivity
        ),
    )
    recon = ReconstructionConfig(
        denoise_weight=get("reconstruction", "denoise_weight", float, base.recon.denoise_weight),
        deconvolve_weight=get(
            "reconstruction", "deconvolve_weight", float, base.recon.deconvolve_weight
        ),
        slice_weight=get("reconstruction", "slice_weight", float, base.recon.slice_weight),
        median_order=get("reconstruction", "median_order", int, base.recon.median_order),
        curvature_weight=get(
            "reconstruction", "curvature_weight", float, base.recon.curvature_weight
        ),
        rho1=get("reconstruction", "rho1", float, base.recon.rho1),
        rho2=get("reconstruction", "rho2", float, base.recon.rho2),
        max_iters=get("reconstruction", "max_iters", int, base.recon.max_iters),
        tol=get("reconstruction", "tol", float, base.recon.tol),
    )
    return Config(
        grid=grid,
        system=system,
        illumination=illumination,
        pulse_fwhm=get("pulse", "fwhm_seconds", float, base.pulse_fwhm),
        pulse_photons=get("pulse", "photons_per_pulse", float, base.pulse_photons),
        pulse_center_bin=get("pulse", "center_bin", _parse_optional_int, base.pulse_center_bin),
        scene=scene,
        recon=recon,
    )


def resolve_config(name_or_path: str | Path | None) -> Config:
    """Resolve a profile name ('default', 'desk') or config-file path."""
    if name_or_path is None:
        return default_profile()
    key = str(name_or_path)
    if key in _PROFILES:
        return _PROFILES[key]()
    return load_config(name_or_path)


def save_config(cfg: Config, path: str | Path) -> None:
    """Write a configuration back out as an INI file."""
    parser = configparser.ConfigParser()
    parser["grid"] = {"rows": str(cfg.grid.rows), "cols": str(cfg.grid.cols)}
    parser["system"] = {
        "eta": repr(cfg.system.eta),
        "ambient_rate_hz": repr(cfg.system.n_a),
        "dark_rate_hz": repr(cfg.system.n_d),
        "pulses_per_measurement": str(cfg.system.n_r),
        "bin_seconds": repr(cfg.system.delta),
        "bins": str(cfg.system.m),
        "repetition_period_seconds": repr(cfg.system.repetition_period),
        "deadtime_seconds": "none" if cfg.system.deadtime is None else repr(cfg.system.deadtime),
    }
    parser["illumination"] = {
        "window": str(cfg.illumination.window),
        "epsilon": repr(cfg.illumination.epsilon),
    }
    parser["pulse"] = {
        "fwhm_seconds": repr(cfg.pulse_fwhm),
        "photons_per_pulse": repr(cfg.pulse_photons),
        "center_bin": "auto" if cfg.pulse_center_bin is None else str(cfg.pulse_center_bin),
    }
    parser["scene"] = {
        "radius_m": repr(cfg.scene.radius_m),
        "center_dist_m": repr(cfg.scene.center_dist_m),
        "screen_dist_m": repr(cfg.scene.screen_dist_m),
        "pixel_pitch_m": repr(cfg.scene.pixel_pitch_m),
        "ball_reflectivity": repr(cfg.scene.ball_reflectivity),
        "screen_reflectivity": repr(cfg.scene.screen_reflectivity),
    }
    parser["reconstruction"] = {
        "denoise_weight": repr(cfg.recon.denoise_weight),
        "deconvolve_weight": repr(cfg.recon.deconvolve_weight),
        "slice_weight": repr(cfg.recon.slice_weight),
        "median_order": str(cfg.recon.median_order),
        "curvature_weight": repr(cfg.recon.curvature_weight),
        "rho1": repr(cfg.recon.rho1),
        "rho2": repr(cfg.recon.rho2),
        "max_iters": str(cfg.recon.max_iters),
        "tol": repr(cfg.recon.tol),
    }
    buf = io.StringIO()
    parser.write(buf)
    Path(path).write_text(buf.getvalue())


def config_overrides(cfg: Config, **kwargs) -> Config:
    """Return a copy of ``cfg`` with top-level sections replaced."""
    return replace(cfg, **kwargs)


def config_to_dict(cfg: Config) -> dict:
    """Flatten a configuration into a JSON-safe nested dict (for manifests)."""
    return {
        "grid": {"rows": cfg.grid.rows, "cols": cfg.grid.cols},
        "system": {
            "eta": cfg.system.eta,
            "ambient_rate_hz": cfg.system.n_a,
            "dark_rate_hz": cfg.system.n_d,
            "pulses_per_measurement": cfg.system.n_r,
            "bin_seconds": cfg.system.delta,
            "bins": cfg.system.m,
            "repetition_period_seconds": cfg.system.repetition_period,
            "deadtime_seconds": cfg.system.deadtime,
        },
        "illumination": {
            "window": cfg.illumination.window,
            "epsilon": cfg.illumination.epsilon,
        },
        "pulse": {
            "fwhm_seconds": cfg.pulse_fwhm,
            "photons_per_pulse": cfg.pulse_photons,
            "center_bin": cfg.pulse_center_bin,
        },
        "scene": {
            "radius_m": cfg.scene.radius_m,
            "center_dist_m": cfg.scene.center_dist_m,
            "screen_dist_m": cfg.scene.screen_dist_m,
            "pixel_pitch_m": cfg.scene.pixel_pitch_m,
            "ball_reflectivity": cfg.scene.ball_reflectivity,
            "screen_reflectivity": cfg.scene.screen_reflectivity,
        },
        "reconstruction": {
            "denoise_weight": cfg.recon.denoise_weight,
            "deconvolve_weight": cfg.recon.deconvolve_weight,
            "slice_weight": cfg.recon.slice_weight,
            "median_order": cfg.recon.median_order,
            "curvature_weight": cfg.recon.curvature_weight,
            "rho1": cfg.recon.rho1,
            "rho2": cfg.recon.rho2,
            "max_iters": cfg.recon.max_iters,
            "tol": cfg.recon.tol,
        },
    }


def config_from_dict(d: dict) -> Config:
    """Rebuild a configuration from :func:`config_to_dict` output."""
    return Config(
        grid=GridShape(rows=d["grid"]["rows"], cols=d["grid"]["cols"]),
        system=SystemParams(
            eta=d["system"]["eta"],
            n_a=d["system"]["ambient_rate_hz"],
            n_d=d["system"]["dark_rate_hz"],
            n_r=d["system"]["pulses_per_measurement"],
            delta=d["system"]["bin_seconds"],
            m=d["system"]["bins"],
            repetition_period=d["system"]["repetition_period_seconds"],
            deadtime=d["system"]["deadtime_seconds"],
        ),
        illumination=IlluminationConfig(
            window=d["illumination"]["window"],
            epsilon=d["illumination"]["epsilon"],
        ),
        pulse_fwhm=d["pulse"]["fwhm_seconds"],
        pulse_photons=d["pulse"]["photons_per_pulse"],
        pulse_center_bin=d["pulse"]["center_bin"],
        scene=BallSceneConfig(
            radius_m=d["scene"]["radius_m"],
            center_dist_m=d["scene"]["center_dist_m"],
            screen_dist_m=d["scene"]["screen_dist_m"],
            pixel_pitch_m=d["scene"]["pixel_pitch_m"],
            ball_reflectivity=d["scene"]["ball_reflectivity"],
            screen_reflectivity=d["scene"]["screen_reflectivity"],
        ),
        recon=ReconstructionConfig(
            denoise_weight=d["reconstruction"]["denoise_weight"],
            deconvolve_weight=d["reconstruction"]["deconvolve_weight"],
            slice_weight=d["reconstruction"]["slice_weight"],
            median_order=d["reconstruction"]["median_order"],
            curvature_weight=d["reconstruction"]["curvature_weight"],
            rho1=d["reconstruction"]["rho1"],
            rho2=d["reconstruction"]["rho2"],
            max_iters=d["reconstruction"]["max_iters"],
            tol=d["reconstruction"]["tol"],
        ),
    )
