"""Forward models: illumination blur, pulse shifting, and photon sampling.

Builds the circulant illumination operator from the scan-window geometry,
produces noiseless expected histograms for a scene, and draws synthetic
photon-count measurements (plain Poisson, or event-level Monte-Carlo with a
non-extensible deadtime).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .core import (
    SPEED_OF_LIGHT,
    GridShape,
    IlluminationConfig,
    PulseModel,
    SceneModel,
    SystemParams,
    ValidationError,
    _as_readonly,
)

__all__ = [
    "IlluminationOperator",
    "DepthOperator",
    "HistogramCube",
    "build_illumination_kernel",
    "diffraction_only_operator",
    "depth_to_bins",
    "expected_histograms",
    "sample_poisson",
    "sample_with_deadtime",
    "intensity_observation",
]


@dataclass(frozen=True)
class IlluminationOperator:
    """Circulant pixel-mixing operator defined by its first-row kernel.

    Row k of the matrix is the kernel re-indexed circularly,
    ``H[k, j] = kernel[(j - k) mod n]`` (0-based), so applying it is a
    circular correlation of the image with the kernel.
    """

    shape: GridShape
    config: IlluminationConfig | None
    kernel: np.ndarray

    def __post_init__(self):
        kern = _as_readonly(self.kernel)
        object.__setattr__(self, "kernel", kern)
        if kern.shape != (self.shape.n,):
            raise ValidationError(f"kernel must have length n={self.shape.n}")
        if np.any(kern < 0):
            raise ValidationError("kernel entries must be non-negative")

    @property
    def n(self) -> int:
        return self.shape.n

    def spectrum(self) -> np.ndarray:
        """rfft-domain eigenvalues (conjugate of the kernel rfft)."""
        return np.conj(np.fft.rfft(self.kernel))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Blur one image vector or the columns of a matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ValidationError(f"expected leading dimension {self.n}, got {x.shape[0]}")
        spec = self.spectrum()
        if x.ndim > 1:
            spec = spec.reshape((-1,) + (1,) * (x.ndim - 1))
        return sfft.irfft(spec * sfft.rfft(x, axis=0), n=self.n, axis=0)

    def apply_transpose(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ValidationError(f"expected leading dimension {self.n}, got {x.shape[0]}")
        spec = np.conj(self.spectrum())
        if x.ndim > 1:
            spec = spec.reshape((-1,) + (1,) * (x.ndim - 1))
        return sfft.irfft(spec * sfft.rfft(x, axis=0), n=self.n, axis=0)


def build_illumination_kernel(shape: GridShape, config: IlluminationConfig) -> IlluminationOperator:
    """Construct the kernel of the w x w scan window with leakage epsilon.

    Entry i (1-based) is 1 when pixel i of the column-stacked image falls in
    the w x w block anchored at the top-left corner, epsilon otherwise.  The
    window may not exceed the image extent in either direction.
    """
    w = config.window
    if w > shape.rows or w > shape.cols:
        raise ValidationError(
            f"window {w}x{w} exceeds image extent {shape.rows}x{shape.cols}"
        )
    i = np.arange(1, shape.n + 1)
    row = (i - 1) % shape.rows + 1  # smallest positive residue of i mod rows
    col = (i - row) // shape.rows + 1
    kernel = np.where((row <= w) & (col <= w), 1.0, config.epsilon)
    return IlluminationOperator(shape=shape, config=config, kernel=kernel)


def diffraction_only_operator(shape: GridShape, epsilon: float) -> IlluminationOperator:
    """Operator for an all-mirrors-off capture: every pixel leaks epsilon."""
    if not 0 <= epsilon < 1:
        raise ValidationError(f"leakage must lie in [0, 1), got {epsilon}")
    kernel = np.full(shape.n, epsilon)
    return IlluminationOperator(shape=shape, config=None, kernel=kernel)


@dataclass(frozen=True)
class DepthOperator:
    """Per-pixel time-bin assignment of each pixel's time of flight.

    Stands in for the binary n x m matrix with a single 1 per row; the
    product with the pulse matrix is realized as a circular shift of the
    waveform by ``bin_index - 1``.
    """

    shape: GridShape
    m: int
    bin_index: np.ndarray

    def __post_init__(self):
        idx = np.array(self.bin_index, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "bin_index", idx)
        if idx.shape != (self.shape.n,):
            raise ValidationError(f"bin_index must have length n={self.shape.n}")
        if np.any(idx < 1) or np.any(idx > self.m):
            raise ValidationError(f"bin indices must lie in [1, {self.m}]")

    def dense(self) -> np.ndarray:
        """Materialize the binary matrix (for small problems / oracles)."""
        out = np.zeros((self.shape.n, self.m))
        out[np.arange(self.shape.n), self.bin_index - 1] = 1.0
        return out


def depth_to_bins(scene: SceneModel, params: SystemParams) -> DepthOperator:
    """Quantize scene depths to 1-based time-bins.

    Bin k carries a delay of (k - 1) * delta, so a time of flight tof maps
    to k = round(tof / delta) + 1 (round-half-up).  This makes the bin grid
    the exact inverse of the lag-to-depth map used by the depth pipeline:
    grid-aligned depths round-trip with zero error and arbitrary depths are
    off by at most half a bin.
    """
    tof = 2.0 * scene.depth / SPEED_OF_LIGHT
    bins = np.floor(tof / params.delta + 0.5).astype(np.int64) + 1
    bad = (bins < 1) | (bins > params.m)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise ValidationError(
            f"depth {scene.depth[first]:.6g} m at pixel {first + 1} maps to bin "
            f"{bins[first]}, outside [1, {params.m}]"
        )
    return DepthOperator(shape=scene.shape, m=params.m, bin_index=bins)


def shifted_pulse_rows(bins: np.ndarray, pulse: PulseModel) -> np.ndarray:
    """Rows of the pulse matrix selected by 1-based bin indices.

    Row for bin k is the waveform circularly shifted right by k - 1, which
    moves the pulse onto the pixel's time of flight.
    """
    m = pulse.m
    j = np.arange(m)[None, :]
    src = (j - (np.asarray(bins, dtype=np.int64)[:, None] - 1)) % m
    return pulse.waveform[src]


def expected_histograms(
    scene: SceneModel,
    op: IlluminationOperator,
    pulse: PulseModel,
    params: SystemParams,
) -> np.ndarray:
    """Noiseless mean photon counts per (pixel, bin) over a full measurement.

    Composes the reflectivity-weighted shifted pulses with the illumination
    blur and adds the flat detected-background level, all scaled by the
    pulse count:  N_r * (blur(diag(kappa) @ shifted_pulse) * eta + bg).
    """
    if op.shape != scene.shape:
        raise ValidationError("scene and illumination operator grids differ")
    if pulse.m != params.m:
        raise ValidationError(f"pulse has {pulse.m} bins, system expects {params.m}")
    bins = depth_to_bins(scene, params)
    signal = shifted_pulse_rows(bins.bin_index, pulse)
    signal *= (params.eta * scene.reflectivity)[:, None]
    # the blur of a non-negative signal is non-negative; clear FFT round-off
    mixed = np.maximum(op.apply(signal), 0.0)
    background = params.background_rate * params.delta
    return params.n_r * (mixed + background)


def _pixel_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """One independent, seed-derived stream per pixel (order-invariant)."""
    children = np.random.SeedSequence(entropy=seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


@dataclass(frozen=True)
class HistogramCube:
    """Per-pixel time histograms: the n x m observation matrix.

    Counts are integers when produced by the samplers; noiseless studies may
    carry real-valued expected counts through the same container.
    """

    shape: GridShape
    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        if c.ndim != 2 or c.shape[0] != self.shape.n:
            raise ValidationError(
                f"counts must be (n, m) with n={self.shape.n}, got {c.shape}"
            )
        if np.any(c < 0):
            raise ValidationError("counts must be non-negative")

    @property
    def m(self) -> int:
        return self.counts.shape[1]

    MAGIC = b"PHC1"

    def save(self, path) -> None:
        """Write the documented binary layout: magic, dims, row-major u32."""
        if not np.issubdtype(self.counts.dtype, np.integer):
            raise ValidationError("binary cube format stores integer counts only")
        if np.any(self.counts > np.iinfo(np.uint32).max):
            raise ValidationError("counts exceed u32 range")
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<III", self.shape.rows, self.shape.cols, self.m))
            fh.write(np.ascontiguousarray(self.counts, dtype="<u4").tobytes())

    @classmethod
    def load(cls, path) -> "HistogramCube":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != cls.MAGIC:
                raise ValidationError(f"not a histogram cube file (magic {magic!r})")
            rows, cols, m = struct.unpack("<III", fh.read(12))
            data = np.frombuffer(fh.read(), dtype="<u4")
        shape = GridShape(rows=rows, cols=cols)
        if data.size != shape.n * m:
            raise ValidationError("cube file truncated")
        counts = data.reshape(shape.n, m).astype(np.int64)
        return cls(shape=shape, counts=counts)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.counts, delimiter=",", fmt="%.10g")


def sample_poisson(expected: np.ndarray, seed: int, shape: GridShape | None = None) -> HistogramCube:
    """Draw an integer count cube with the given per-cell means.

    Each pixel row uses its own seed-derived stream, so results do not
    depend on evaluation order or thread count.
    """
    expected = np.asarray(expected, dtype=np.float64)
    if expected.ndim != 2:
        raise ValidationError("expected-count matrix must be 2-D")
    if np.any(expected < 0):
        raise ValidationError("expected counts must be non-negative")
    n = expected.shape[0]
    if shape is None:
        shape = GridShape(rows=n, cols=1)
    elif shape.n != n:
        raise ValidationError(f"grid n={shape.n} does not match matrix rows {n}")
    counts = np.empty(expected.shape, dtype=np.int64)
    for i, rng in enumerate(_pixel_rngs(seed, n)):
        counts[i] = rng.poisson(expected[i])
    return HistogramCube(shape=shape, counts=counts)


def sample_with_deadtime(
    scene: SceneModel,
    op: IlluminationOperator,
    pulse: PulseModel,
    params: SystemParams,
    seed: int,
) -> HistogramCube:
    """Event-level Monte-Carlo measurement with a non-extensible deadtime.

    Per pixel, photon arrivals over all repetitions are drawn from the
    periodic per-bin rate profile (including background in the dead stretch
    between the observation window and the next pulse), time-ordered, and
    scanned: a detection blinds the detector for the deadtime, arrivals in
    that span are discarded and do not extend it.  Surviving arrivals inside
    the observation window are binned.  With deadtime 0 this reduces to the
    plain Poisson sampler in distribution.
    """
    if params.deadtime is None:
        raise ValidationError("sample_with_deadtime requires params.deadtime to be set")
    lam = expected_histograms(scene, op, pulse, params) / params.n_r
    n, m = lam.shape
    t_rep = params.repetition_period
    gap = t_rep - params.t_b
    gap_mass = params.background_rate * gap
    counts = np.zeros((n, m), dtype=np.int64)
    dead = params.deadtime
    for i, rng in enumerate(_pixel_rngs(seed, n)):
        mass = np.append(lam[i], gap_mass)
        total = mass.sum() * params.n_r
        k = rng.poisson(total)
        if k == 0:
            continue
        cum = np.cumsum(mass / mass.sum())
        comp = np.searchsorted(cum, rng.random(k), side="right")
        comp = np.minimum(comp, m)  # guard float round-off at the top edge
        reps = rng.integers(0, params.n_r, size=k)
        width = np.where(comp < m, params.delta, gap)
        start = np.where(comp < m, comp * params.delta, params.t_b)
        times = reps * t_rep + start + rng.random(k) * width
        if dead == 0.0:
            keep_comp = comp
        else:
            order = np.argsort(times, kind="stable")
            times = times[order]
            comp_sorted = comp[order]
            kept = []
            blind_until = -np.inf
            for t, c in zip(times, comp_sorted):
                if t >= blind_until:
                    kept.append(c)
                    blind_until = t + dead
            keep_comp = np.asarray(kept, dtype=np.int64)
        in_window = keep_comp[keep_comp < m]
        np.add.at(counts[i], in_window, 1)
    return HistogramCube(shape=scene.shape, counts=counts)


def intensity_observation(cube: HistogramCube) -> np.ndarray:
    """Total photon counts per pixel (histogram row sums)."""
    return cube.counts.sum(axis=1)
