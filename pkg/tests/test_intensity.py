import numpy as np

from conftest import dense_blur_matrix, dense_derivative_matrix
from spadscan.admm import ANSCOMBE_FLOOR, AdmmSettings, DerivativeStack
from spadscan.anscombe import anscombe, build_inverse_table, ml_inverse
from spadscan.core import (
    SPEED_OF_LIGHT,
    GridShape,
    IlluminationConfig,
    SceneModel,
    SystemParams,
    gaussian_pulse,
)
from spadscan.forward import (
    HistogramCube,
    build_illumination_kernel,
    expected_histograms,
    sample_poisson,
)
from spadscan.intensity import deconvolve, denoise_stabilized, recover_intensity
from spadscan.scenes import psnr


def _tight(mu, iters=4000):
    return AdmmSettings(reg_weight=mu, max_iters=iters,
                        tol_primal=1e-9, tol_dual=1e-9)


class TestDenoise:
    def test_constant_input_is_fixpoint(self):
        shape = GridShape(4, 4)
        stack = DerivativeStack(shape)
        v = np.full(16, 7.0)
        b_opt, _ = denoise_stabilized(v, stack, mu=0.3, settings=_tight(0.3))
        assert np.abs(b_opt - anscombe(v)).max() < 1e-6

    def test_large_weight_flattens(self, rng):
        shape = GridShape(6, 6)
        stack = DerivativeStack(shape)
        v = rng.poisson(20.0, size=36).astype(float)
        b_opt, _ = denoise_stabilized(v, stack, mu=100.0, settings=_tight(100.0))
        tv_in = np.abs(stack.apply(anscombe(v), "grad")).sum()
        tv_out = np.abs(stack.apply(b_opt, "grad")).sum()
        assert tv_out < tv_in
        assert b_opt.std() < 0.05 * anscombe(v).std()

    def test_denoising_reduces_error_to_clean_signal(self, rng):
        # oracle: the noiseless blurred image from the forward model; the
        # blur makes the clean signal smooth, which the TV prior rewards
        shape = GridShape(12, 12)
        stack = DerivativeStack(shape)
        op = build_illumination_kernel(shape, IlluminationConfig(3, 0.001))
        img = np.full((12, 12), 0.3)
        img[3:9, 4:10] = 1.0
        clean_blurred = 12.0 * op.apply(shape.vectorize(img))
        v = rng.poisson(clean_blurred).astype(float)
        b_opt, _ = denoise_stabilized(v, stack, mu=0.3, settings=_tight(0.3))
        mse_before = np.mean((anscombe(v) - anscombe(clean_blurred)) ** 2)
        mse_after = np.mean((b_opt - anscombe(clean_blurred)) ** 2)
        assert mse_after < mse_before

    def test_floor_respected_exactly(self, rng):
        shape = GridShape(4, 4)
        stack = DerivativeStack(shape)
        v = rng.poisson(0.2, size=16).astype(float)
        b_opt, _ = denoise_stabilized(v, stack, mu=0.5, settings=_tight(0.5))
        assert np.all(b_opt >= ANSCOMBE_FLOOR)


class TestDeconvolve:
    def test_identity_operator_small_weight(self, rng):
        shape = GridShape(4, 4)
        op = build_illumination_kernel(shape, IlluminationConfig(1, 0.0))
        stack = DerivativeStack(shape)
        b_star = rng.uniform(1.0, 5.0, size=16)
        alpha, _ = deconvolve(b_star, op, stack, lam=1e-9, settings=_tight(1e-9))
        assert np.abs(alpha - b_star).max() < 1e-6

    def test_consistent_constant_case(self):
        shape = GridShape(5, 5)
        op = build_illumination_kernel(shape, IlluminationConfig(3, 0.01))
        stack = DerivativeStack(shape)
        alpha_true = np.full(25, 2.0)
        b_star = op.apply(alpha_true)
        alpha, _ = deconvolve(b_star, op, stack, lam=1e-9, settings=_tight(1e-9))
        assert np.abs(alpha - alpha_true).max() / 2.0 < 1e-4

    def test_nonnegativity_exact(self, rng):
        shape = GridShape(4, 4)
        op = build_illumination_kernel(shape, IlluminationConfig(2, 0.05))
        stack = DerivativeStack(shape)
        b_star = rng.uniform(0.0, 3.0, size=16)
        alpha, _ = deconvolve(b_star, op, stack, lam=0.2, settings=_tight(0.2))
        assert np.all(alpha >= 0.0)

    def test_deconvolution_beats_blurred_input(self, rng):
        # piecewise-constant phantom blurred by a 5x5 window: recovering
        # must improve PSNR substantially over the blurred image itself
        shape = GridShape(16, 16)
        n = shape.n
        truth = np.full(n, 0.2)
        img = shape.unvectorize(truth).copy()
        img[4:12, 5:11] = 0.9
        truth = shape.vectorize(img)
        op = build_illumination_kernel(shape, IlluminationConfig(5, 0.001))
        stack = DerivativeStack(shape)
        b_star = op.apply(truth)
        b_star_norm = b_star / 25.0  # window gain
        alpha, _ = deconvolve(b_star, op, stack, lam=1e-6,
                              settings=_tight(1e-6, iters=8000))
        p_blurred = psnr(b_star_norm, truth, peak=1.0)
        p_recovered = psnr(alpha, truth, peak=1.0)
        assert p_recovered >= p_blurred + 6.0


def _noiseless_setup(shape, m, bins, kappa, photons):
    params = SystemParams(eta=0.35, n_a=0.0, n_d=0.0, n_r=5_000_000,
                          delta=4e-12, m=m, repetition_period=1 / 70e6)
    depth = (np.asarray(bins) - 1) * params.delta * SPEED_OF_LIGHT / 2
    scene = SceneModel(shape=shape, reflectivity=np.asarray(kappa, float), depth=depth)
    pulse = gaussian_pulse(m, params.delta, fwhm=80e-12, photons=photons)
    return scene, params, pulse


class TestRecoverIntensity:
    def test_all_dark_scene(self):
        shape = GridShape(4, 4)
        scene, params, pulse = _noiseless_setup(shape, 32, np.full(16, 5), np.zeros(16), 1e-3)
        op = build_illumination_kernel(shape, IlluminationConfig(2, 0.001))
        cube = HistogramCube(shape, expected_histograms(scene, op, pulse, params))
        stack = DerivativeStack(shape)
        table = build_inverse_table(10.0, resolution=256)
        res = recover_intensity(cube, op, stack, table, mu=0.1, lam=0.1,
                                settings=_tight(0.1))
        assert np.linalg.norm(res.alpha_opt) < 1e-6 * 16

    def test_stage_constraints_hold(self, rng):
        shape = GridShape(4, 4)
        bins = rng.integers(1, 33, size=16)
        kappa = rng.uniform(0.2, 1.0, size=16)
        scene, params, pulse = _noiseless_setup(shape, 32, bins, kappa, 1e-4)
        op = build_illumination_kernel(shape, IlluminationConfig(2, 0.001))
        expected = expected_histograms(scene, op, pulse, params)
        cube = sample_poisson(expected, seed=5, shape=shape)
        stack = DerivativeStack(shape)
        table = build_inverse_table(1000.0, resolution=512)
        res = recover_intensity(cube, op, stack, table, mu=0.3, lam=0.1,
                                settings=_tight(0.3, iters=2000))
        assert np.all(res.b_opt >= ANSCOMBE_FLOOR)
        assert np.all(res.alpha_opt >= 0.0)
        assert res.v.shape == (16,)
        assert res.b_star.shape == (16,)

    def test_pipeline_determinism(self, rng):
        shape = GridShape(4, 4)
        bins = rng.integers(1, 33, size=16)
        kappa = rng.uniform(0.2, 1.0, size=16)
        scene, params, pulse = _noiseless_setup(shape, 32, bins, kappa, 1e-4)
        op = build_illumination_kernel(shape, IlluminationConfig(2, 0.001))
        expected = expected_histograms(scene, op, pulse, params)
        stack = DerivativeStack(shape)
        table = build_inverse_table(1000.0, resolution=512)

        def run():
            cube = sample_poisson(expected, seed=9, shape=shape)
            res = recover_intensity(cube, op, stack, table, mu=0.3, lam=0.1,
                                    settings=_tight(0.3, iters=1000))
            return res.alpha_opt

        assert np.array_equal(run(), run())

    def test_forward_model_linear_in_reflectivity(self, rng):
        # noise off, leak 0: scaling kappa scales the observation linearly
        shape = GridShape(3, 3)
        bins = rng.integers(1, 17, size=9)
        kappa = rng.uniform(0.1, 1.0, size=9)
        scene1, params, pulse = _noiseless_setup(shape, 16, bins, kappa, 1e-4)
        scene3, _, _ = _noiseless_setup(shape, 16, bins, 3.0 * kappa, 1e-4)
        op = build_illumination_kernel(shape, IlluminationConfig(2, 0.0))
        lam1 = expected_histograms(scene1, op, pulse, params)
        lam3 = expected_histograms(scene3, op, pulse, params)
        assert np.allclose(lam3, 3.0 * lam1, rtol=1e-12)

    def test_end_to_end_matches_dense_reference(self, rng):
        # full pipeline vs a dense-matrix reference implementation (n <= 36)
        shape = GridShape(6, 6)
        n = shape.n
        bins = rng.integers(1, 17, size=n)
        kappa = rng.uniform(0.2, 1.0, size=n)
        scene, params, pulse = _noiseless_setup(shape, 16, bins, kappa, 1e-4)
        op = build_illumination_kernel(shape, IlluminationConfig(3, 0.01))
        expected = expected_histograms(scene, op, pulse, params)
        cube = sample_poisson(expected, seed=21, shape=shape)
        stack = DerivativeStack(shape)
        table = build_inverse_table(2000.0, resolution=1024)
        mu, lam = 0.4, 0.2
        settings = _tight(mu, iters=6000)
        res = recover_intensity(cube, op, stack, table, mu, lam, settings)

        # dense reference: same algorithm, dense linear algebra throughout
        h = dense_blur_matrix(op.kernel)
        d = dense_derivative_matrix(stack, "full")
        v = cube.counts.sum(axis=1).astype(float)

        def dense_admm(a_mat, y, tau, floor, iters=6000):
            rho1 = rho2 = 1.0
            system = a_mat.T @ a_mat + rho1 * (d.T @ d) + rho2 * np.eye(n)
            inv = np.linalg.inv(system)
            z1 = np.zeros(8 * n)
            z2 = np.zeros(n)
            u1 = np.zeros(8 * n)
            u2 = np.zeros(n)
            at_y = a_mat.T @ y
            for _ in range(iters):
                x = inv @ (at_y + rho1 * d.T @ (z1 - u1) + rho2 * (z2 - u2))
                dx = d @ x
                z1 = np.sign(dx + u1) * np.maximum(np.abs(dx + u1) - tau / rho1, 0)
                z2 = np.maximum(x + u2, floor)
                u1 = u1 + dx - z1
                u2 = u2 + x - z2
                r = np.sqrt(np.sum((dx - z1) ** 2) + np.sum((x - z2) ** 2))
                if r < 1e-9 * np.sqrt(9 * n):
                    break
            return z2

        b_opt_ref = dense_admm(np.eye(n), anscombe(v), mu, ANSCOMBE_FLOOR)
        b_star_ref = ml_inverse(table, b_opt_ref)
        alpha_ref = dense_admm(h, b_star_ref, lam, 0.0)
        scale = max(1.0, np.abs(alpha_ref).max())
        assert np.abs(res.b_opt - b_opt_ref).max() < 1e-6
        assert np.abs(res.alpha_opt - alpha_ref).max() / scale < 1e-6
