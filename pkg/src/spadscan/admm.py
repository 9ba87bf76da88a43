"""ADMM solvers over circulant operators, plus the derivative stack.

All linear operators here (the illumination blur, the identity, and the
directional derivative stack) are circulants over the column-stacked pixel
index, so they share one Fourier basis and the quadratic step of every ADMM
iteration is solved exactly with a single length-n FFT.  The periodic wrap
therefore crosses column boundaries exactly the way the illumination
operator does.

Three problem shapes are supported, all of the form

    minimize  0.5 * ||A x - y||^2  +  tau * ||D x||_1   s.t.  x >= floor

with A in {blur, identity}, D either the full first+second derivative stack
or its first-derivative half, and floor either 0 or the stabilized-domain
minimum.  ``admm_solve`` accepts a matrix of right-hand sides and solves the
columns as independent problems in one vectorized sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .anscombe import ANSCOMBE_FLOOR
from .core import GridShape, ValidationError

__all__ = [
    "DerivativeStack",
    "AdmmSettings",
    "SolveReport",
    "shrinkage",
    "project",
    "admm_solve",
    "solve_normal_equations",
    "ANSCOMBE_FLOOR",
]


def shrinkage(x: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise soft threshold: the proximal map of ``tau * ||.||_1``."""
    if tau <= 0:
        raise ValidationError(f"shrinkage threshold must be positive, got {tau}")
    x = np.asarray(x, dtype=np.float64)
    # x - clip(x, -tau, tau) in two passes
    return x - np.clip(x, -tau, tau)


def project(x: np.ndarray, floor: float) -> np.ndarray:
    """Elementwise projection onto [floor, +inf)."""
    if not np.isfinite(floor):
        raise ValidationError("projection floor must be finite")
    return np.maximum(np.asarray(x, dtype=np.float64), floor)


class DerivativeStack:
    """First and second directional derivatives of a column-stacked image.

    Stacks eight circulant convolutions: forward differences along the four
    directions y (down), x (right), and the two diagonals, followed by the
    [1, -2, 1] second differences in the same directions scaled by
    ``rho_second``.  Applying it to a length-n vector yields 8n values;
    the first-derivative half alone yields 4n.
    """

    def __init__(self, shape: GridShape, rho_second: float = 0.5):
        if rho_second < 0:
            raise ValidationError("second-derivative weight must be non-negative")
        self.shape = shape
        self.rho_second = float(rho_second)
        r = shape.rows
        # shift offsets in column-stacked order: down, right, down-right, up-right
        self.shifts = (1, r, r + 1, r - 1)

    @property
    def n(self) -> int:
        return self.shape.n

    def apply(self, x: np.ndarray, mode: str = "full") -> np.ndarray:
        """Stack the directional derivatives of ``x`` (vector or columns)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ValidationError(f"expected leading dimension {self.n}, got {x.shape[0]}")
        blocks = 4 if mode == "grad" else 8
        out = np.empty((blocks * self.n,) + x.shape[1:], dtype=np.float64)
        n = self.n
        for b, d in enumerate(self.shifts):
            blk = out[b * n : (b + 1) * n]
            np.subtract(np.roll(x, -d, axis=0), x, out=blk)
        if mode == "full":
            for b, d in enumerate(self.shifts):
                blk = out[(4 + b) * n : (5 + b) * n]
                np.add(np.roll(x, -d, axis=0), np.roll(x, d, axis=0), out=blk)
                blk -= 2.0 * x
                blk *= self.rho_second
        return out

    def apply_transpose(self, w: np.ndarray, mode: str = "full") -> np.ndarray:
        """Adjoint of :meth:`apply` for the same ``mode``."""
        w = np.asarray(w, dtype=np.float64)
        blocks = 4 if mode == "grad" else 8
        if w.shape[0] != blocks * self.n:
            raise ValidationError(f"expected leading dimension {blocks * self.n}, got {w.shape[0]}")
        n = self.n
        out = np.zeros((n,) + w.shape[1:], dtype=np.float64)
        for b, d in enumerate(self.shifts):
            p = w[b * n : (b + 1) * n]
            out += np.roll(p, d, axis=0)
            out -= p
        if mode == "full":
            for b, d in enumerate(self.shifts):
                p = w[(4 + b) * n : (5 + b) * n]
                second = np.roll(p, d, axis=0)
                second += np.roll(p, -d, axis=0)
                second -= 2.0 * p
                out += self.rho_second * second
        return out

    def gram_spectrum(self, mode: str = "full") -> np.ndarray:
        """Real rfft-domain eigenvalues of D^T D."""
        n = self.n
        k = np.arange(n // 2 + 1, dtype=np.float64)
        total = np.zeros_like(k)
        for d in self.shifts:
            c = np.cos(2.0 * np.pi * d * k / n)
            total += 2.0 - 2.0 * c  # |e^{i w d} - 1|^2
            if mode == "full":
                total += self.rho_second**2 * (2.0 * c - 2.0) ** 2
        return total


@dataclass(frozen=True)
class AdmmSettings:
    """Penalty parameters, regularization weight, and stopping rules."""

    rho1: float = 1.0
    rho2: float = 1.0
    reg_weight: float = 0.1
    max_iters: int = 500
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0 or self.reg_weight <= 0:
            raise ValidationError("rho1, rho2 and reg_weight must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValidationError("tolerances must be positive")


@dataclass
class SolveReport:
    """Diagnostics of one ADMM solve (one column of the batch)."""

    iterations: int
    primal_residual: float
    dual_residual: float
    objective_trace: np.ndarray
    primal_trace: np.ndarray
    dual_trace: np.ndarray
    objective: float
    converged: bool

    def to_csv(self, path) -> None:
        rows = np.column_stack(
            [
                np.arange(1, self.iterations + 1),
                self.primal_trace,
                self.dual_trace,
                self.objective_trace,
            ]
        )
        np.savetxt(
            path,
            rows,
            delimiter=",",
            header="iteration,primal_residual,dual_residual,objective",
            comments="",
        )


def _kernel_spectrum(kernel: np.ndarray) -> np.ndarray:
    """rfft-domain eigenvalues of the blur operator built from ``kernel``.

    Row k of the operator is the kernel cyclically re-indexed per
    ``H[k, j] = kernel[(j - k) mod n]``, so its action is a circular
    correlation and its spectrum is the conjugate of the kernel rfft.
    """
    return np.conj(np.fft.rfft(kernel))


def solve_normal_equations(
    rhs: np.ndarray,
    stack: DerivativeStack,
    kernel: np.ndarray | None,
    mode: str,
    rho1: float,
    rho2: float,
) -> np.ndarray:
    """Solve (A^T A + rho1 D^T D + rho2 I) x = rhs exactly in one FFT pass."""
    n = stack.n
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != n:
        raise ValidationError(f"rhs leading dimension {rhs.shape[0]} != n={n}")
    if kernel is None:
        ata = np.ones(n // 2 + 1)
    else:
        spec = _kernel_spectrum(np.asarray(kernel, dtype=np.float64))
        ata = np.abs(spec) ** 2
    denom = ata + rho1 * stack.gram_spectrum(mode) + rho2
    f = sfft.rfft(rhs, axis=0)
    f /= denom.reshape((-1,) + (1,) * (rhs.ndim - 1))
    return sfft.irfft(f, n=n, axis=0)


def admm_solve(
    y: np.ndarray,
    stack: DerivativeStack,
    settings: AdmmSettings,
    kernel: np.ndarray | None = None,
    mode: str = "full",
    floor: float = 0.0,
    workers: int | None = None,
) -> tuple[np.ndarray, SolveReport | list[SolveReport]]:
    """Run the split-variable ADMM for one of the three problem shapes.

    Each iteration solves the quadratic subproblem exactly in the Fourier
    basis, then applies soft thresholding to the derivative split and the
    floor projection to the identity split, then takes the dual ascent
    steps.  Iterations stop when both residual norms fall below
    ``tol * sqrt(dim)`` or ``max_iters`` is reached; the returned iterate is
    the projected split variable, so it satisfies the floor constraint
    exactly.

    Args:
        y: data vector (n,) or matrix (n, k) of independent column problems.
        stack: derivative operator (also fixes the grid).
        settings: penalties, regularization weight tau, stopping rules.
        kernel: circulant blur kernel for A, or None for A = identity.
        mode: "full" for the 8n-row stack, "grad" for first derivatives only.
        floor: projection floor (0 for non-negativity, ANSCOMBE_FLOOR for
            stabilized-domain problems).
        workers: FFT worker threads (results are identical at any count).

    Returns:
        (solution, report): solution matches the shape of ``y``; a single
        report for vector input, a list of per-column reports for matrices.
    """
    if mode not in ("full", "grad"):
        raise ValidationError(f"unknown derivative mode {mode!r}")
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    ymat = y[:, None] if single else y
    n = stack.n
    if ymat.ndim != 2 or ymat.shape[0] != n:
        raise ValidationError(f"data must have leading dimension n={n}, got {y.shape}")
    ncols = ymat.shape[1]
    rho1, rho2, tau = settings.rho1, settings.rho2, settings.reg_weight

    if kernel is None:
        a_spec = None
        at_y = ymat.copy()
    else:
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.shape != (n,):
            raise ValidationError(f"kernel must have shape ({n},), got {kernel.shape}")
        a_spec = _kernel_spectrum(kernel)
        at_y = sfft.irfft(np.conj(a_spec)[:, None] * sfft.rfft(ymat, axis=0), n=n, axis=0)

    ata = np.ones(n // 2 + 1) if a_spec is None else np.abs(a_spec) ** 2
    denom = (ata + rho1 * stack.gram_spectrum(mode) + rho2)[:, None]

    blocks = 8 if mode == "full" else 4
    z1 = np.zeros((blocks * n, ncols))
    z2 = np.zeros((n, ncols))
    u1 = np.zeros_like(z1)
    u2 = np.zeros_like(z2)

    dim_primal = np.sqrt((blocks + 1) * n)
    dim_dual = np.sqrt(n)
    tol_p = settings.tol_primal * dim_primal
    tol_d = settings.tol_dual * dim_dual

    out = np.zeros((n, ncols))
    done = np.zeros(ncols, dtype=bool)
    it_used = np.zeros(ncols, dtype=np.int64)
    fin_primal = np.full(ncols, np.inf)
    fin_dual = np.full(ncols, np.inf)
    traces = np.zeros((settings.max_iters, ncols))
    r_traces = np.zeros((settings.max_iters, ncols))
    s_traces = np.zeros((settings.max_iters, ncols))

    def objective(xcols: np.ndarray, data: np.ndarray) -> np.ndarray:
        if a_spec is None:
            resid = xcols - data
        else:
            resid = (
                sfft.irfft(a_spec[:, None] * sfft.rfft(xcols, axis=0), n=n, axis=0) - data
            )
        reg = np.abs(stack.apply(xcols, mode)).sum(axis=0)
        return 0.5 * (resid**2).sum(axis=0) + tau * reg

    # Columns are independent problems; converged ones are snapshotted and
    # dropped from the working set.  Each column's update sequence is
    # unaffected, so results match a column-at-a-time solve.
    active = np.arange(ncols)
    y_act = ymat
    at_act = at_y
    for it in range(1, settings.max_iters + 1):
        rhs = at_act + rho1 * stack.apply_transpose(z1 - u1, mode) + rho2 * (z2 - u2)
        xhat = sfft.rfft(rhs, axis=0, workers=workers)
        xhat /= denom
        x = sfft.irfft(xhat, n=n, axis=0, workers=workers)

        dx = stack.apply(x, mode)
        z1_prev, z2_prev = z1, z2
        z1 = shrinkage(dx + u1, tau / rho1)
        z2 = project(x + u2, floor)
        u1 = u1 + dx - z1
        u2 = u2 + x - z2

        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"solver produced non-finite iterate at iteration {it}")

        r_norm = np.sqrt(((dx - z1) ** 2).sum(axis=0) + ((x - z2) ** 2).sum(axis=0))
        s_vec = rho1 * stack.apply_transpose(z1 - z1_prev, mode) + rho2 * (z2 - z2_prev)
        s_norm = np.sqrt((s_vec**2).sum(axis=0))
        traces[it - 1, active] = objective(x, y_act)
        r_traces[it - 1, active] = r_norm
        s_traces[it - 1, active] = s_norm

        met = (r_norm <= tol_p) & (s_norm <= tol_d)
        finished = np.ones_like(met) if it == settings.max_iters else met
        if np.any(finished):
            cols = active[finished]
            out[:, cols] = z2[:, finished]
            it_used[cols] = it
            fin_primal[cols] = r_norm[finished]
            fin_dual[cols] = s_norm[finished]
            done[cols] = met[finished]
            keep = ~finished
            if not np.any(keep):
                break
            active = active[keep]
            y_act = y_act[:, keep]
            at_act = at_act[:, keep]
            z1, z2 = z1[:, keep], z2[:, keep]
            u1, u2 = u1[:, keep], u2[:, keep]

    final_obj = objective(out, ymat)
    reports = [
        SolveReport(
            iterations=int(it_used[j]),
            primal_residual=float(fin_primal[j]),
            dual_residual=float(fin_dual[j]),
            objective_trace=traces[: it_used[j], j].copy(),
            primal_trace=r_traces[: it_used[j], j].copy(),
            dual_trace=s_traces[: it_used[j], j].copy(),
            objective=float(final_obj[j]),
            converged=bool(done[j]),
        )
        for j in range(ncols)
    ]
    if single:
        return out[:, 0], reports[0]
    return out, reports
