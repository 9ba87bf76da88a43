"""Four-step intensity recovery: stabilize, denoise, invert, deconvolve.

The total per-pixel counts are Poisson; the variance-stabilizing transform
turns them into near-Gaussian data so an l2 data term applies.  Because the
transform is nonlinear, the blur is *not* undone in the stabilized domain:
the stabilized image is denoised first (floor-constrained), mapped back to
the count domain with the exact-unbiased inverse, and only then deconvolved
under a non-negativity constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .admm import ANSCOMBE_FLOOR, AdmmSettings, DerivativeStack, SolveReport, admm_solve
from .anscombe import InverseTable, anscombe, ml_inverse
from .core import ValidationError
from .forward import HistogramCube, IlluminationOperator, intensity_observation

__all__ = ["IntensityResult", "denoise_stabilized", "deconvolve", "recover_intensity"]


@dataclass
class IntensityResult:
    """Recovered intensity plus every intermediate of the four-step chain."""

    alpha_opt: np.ndarray
    v: np.ndarray
    b_opt: np.ndarray
    b_star: np.ndarray
    denoise_report: SolveReport
    deconvolve_report: SolveReport


def denoise_stabilized(
    v: np.ndarray,
    stack: DerivativeStack,
    mu: float,
    settings: AdmmSettings,
    workers: int | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Denoise the stabilized counts with the floor-constrained TV problem."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValidationError("counts must be non-negative")
    data = anscombe(v)
    b_opt, report = admm_solve(
        data,
        stack,
        replace(settings, reg_weight=mu),
        kernel=None,
        mode="full",
        floor=ANSCOMBE_FLOOR,
        workers=workers,
    )
    return b_opt, report


def deconvolve(
    b_star: np.ndarray,
    op: IlluminationOperator,
    stack: DerivativeStack,
    lam: float,
    settings: AdmmSettings,
    workers: int | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Undo the illumination blur under a non-negativity constraint."""
    b_star = np.asarray(b_star, dtype=np.float64)
    if np.any(b_star < 0):
        raise ValidationError("deconvolution input must be non-negative")
    alpha, report = admm_solve(
        b_star,
        stack,
        replace(settings, reg_weight=lam),
        kernel=op.kernel,
        mode="full",
        floor=0.0,
        workers=workers,
    )
    return alpha, report


def recover_intensity(
    cube: HistogramCube,
    op: IlluminationOperator,
    stack: DerivativeStack,
    table: InverseTable,
    mu: float,
    lam: float,
    settings: AdmmSettings,
    workers: int | None = None,
) -> IntensityResult:
    """Run the full chain on a measured cube and keep all intermediates."""
    if cube.shape != op.shape:
        raise ValidationError("cube and illumination operator grids differ")
    v = intensity_observation(cube).astype(np.float64)
    b_opt, den_report = denoise_stabilized(v, stack, mu, settings, workers=workers)
    b_star = ml_inverse(table, b_opt)
    alpha, dec_report = deconvolve(b_star, op, stack, lam, settings, workers=workers)
    return IntensityResult(
        alpha_opt=alpha,
        v=v,
        b_opt=b_opt,
        b_star=b_star,
        denoise_report=den_report,
        deconvolve_report=dec_report,
    )
