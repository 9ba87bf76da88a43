import numpy as np
import pytest

from spadscan.core import (
    GridShape,
    SystemParams,
    ValidationError,
    default_profile,
    gaussian_pulse,
)
from spadscan.forward import (
    HistogramCube,
    diffraction_only_operator,
    expected_histograms,
    sample_poisson,
)
from spadscan.scenes import (
    ball_scene_from_config,
    calibrate_epsilon,
    calibrate_pulse_photons,
    depth_rmse,
    load_scene,
    make_ball_scene,
    make_flat_scene,
    photon_statistics,
    psnr,
    save_scene,
)


class TestBallScene:
    def test_default_profile_depth_span(self):
        cfg = default_profile()
        scene = ball_scene_from_config(cfg.grid, cfg.scene, cfg.system)
        # ball center 50 cm minus 11 cm radius up to the 72 cm screen
        assert scene.depth.min() == pytest.approx(0.39, abs=1e-3)
        assert scene.depth.max() == pytest.approx(0.72, abs=1e-12)

    def test_center_pixel_hits_ball_front(self):
        cfg = default_profile()
        scene = ball_scene_from_config(cfg.grid, cfg.scene, cfg.system)
        img = cfg.grid.unvectorize(scene.depth)
        center = img[cfg.grid.rows // 2, cfg.grid.cols // 2]
        # sphere z-buffer at the axis: center distance minus radius
        assert center == pytest.approx(0.39, abs=1e-3)

    def test_zero_radius_gives_plane(self):
        shape = GridShape(10, 10)
        scene = make_ball_scene(shape, 0.0, 0.5, 0.72)
        assert np.all(scene.depth == 0.72)

    def test_reflectivity_regions(self):
        shape = GridShape(21, 21)
        scene = make_ball_scene(shape, 0.02, 0.5, 0.7,
                                reflectivities=(0.9, 0.3), pixel_pitch_m=0.004)
        on_ball = scene.depth < 0.7
        assert np.all(scene.reflectivity[on_ball] == 0.9)
        assert np.all(scene.reflectivity[~on_ball] == 0.3)

    def test_geometry_outside_window_rejected(self):
        params = SystemParams(eta=0.5, n_a=0, n_d=0, n_r=1, delta=4e-12, m=100,
                              repetition_period=1e-6)
        # screen at 0.72 m needs a ToF of 4.8 ns, far beyond 100 bins
        with pytest.raises(ValidationError):
            make_ball_scene(GridShape(4, 4), 0.01, 0.5, 0.72, params=params)

    def test_ball_behind_screen_rejected(self):
        with pytest.raises(ValidationError):
            make_ball_scene(GridShape(4, 4), 0.01, 0.9, 0.72)

    def test_deterministic(self):
        shape = GridShape(16, 16)
        s1 = make_ball_scene(shape, 0.02, 0.1, 0.12, pixel_pitch_m=0.002)
        s2 = make_ball_scene(shape, 0.02, 0.1, 0.12, pixel_pitch_m=0.002)
        assert np.array_equal(s1.depth, s2.depth)
        assert np.array_equal(s1.reflectivity, s2.reflectivity)


class TestMetrics:
    def test_psnr_identical_images(self):
        a = np.ones((4, 4))
        assert psnr(a, a, peak=1.0) == np.inf

    def test_psnr_formula(self):
        a = np.zeros(100)
        b = np.full(100, 0.1)  # MSE = 0.01, peak 1 -> 20 dB
        assert psnr(a, b, peak=1.0) == pytest.approx(20.0)

    def test_psnr_matches_direct_oracle(self, rng):
        a = rng.uniform(0, 1, size=50)
        b = rng.uniform(0, 1, size=50)
        mse = sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)) / 50
        assert psnr(a, b, peak=2.0) == pytest.approx(10 * np.log10(4.0 / mse))

    def test_psnr_dim_mismatch(self):
        with pytest.raises(ValidationError):
            psnr(np.ones(3), np.ones(4), peak=1.0)

    def test_depth_rmse_zero_for_exact(self):
        z = np.linspace(0.1, 0.5, 20)
        assert depth_rmse(z, z) == 0.0

    def test_depth_rmse_single_bin_offset(self):
        # one pixel off by one 4 ps bin over a single-pixel mask: 0.6 mm
        est = np.array([0.1 + 0.5 * 299792458.0 * 4e-12, 0.2])
        tru = np.array([0.1, 0.2])
        mask = np.array([True, False])
        assert depth_rmse(est, tru, mask) == pytest.approx(5.9958e-4, rel=1e-4)

    def test_depth_rmse_matches_direct_oracle(self, rng):
        est = rng.uniform(0, 1, 30)
        tru = rng.uniform(0, 1, 30)
        mask = rng.random(30) > 0.3
        direct = np.sqrt(np.mean([(e - t) ** 2 for e, t, m in zip(est, tru, mask) if m]))
        assert depth_rmse(est, tru, mask) == pytest.approx(direct, rel=1e-12)

    def test_depth_rmse_empty_mask(self):
        with pytest.raises(ValidationError):
            depth_rmse(np.ones(3), np.ones(3), np.zeros(3, dtype=bool))

    def test_photon_statistics_zero_cube(self):
        cube = HistogramCube(GridShape(2, 2), np.zeros((4, 6), dtype=np.int64))
        assert photon_statistics(cube) == (0.0, 0.0)

    def test_photon_statistics_matches_oracle(self, rng):
        counts = rng.integers(0, 9, size=(8, 5))
        cube = HistogramCube(GridShape(4, 2), counts)
        totals = counts.sum(axis=1)
        mean, std = photon_statistics(cube)
        assert mean == pytest.approx(totals.mean())
        assert std == pytest.approx(totals.std())


class TestCalibration:
    def _setup(self):
        shape = GridShape(12, 12)
        scene = make_flat_scene(shape, 0.6, 0.05)
        params = SystemParams(eta=0.35, n_a=0.0, n_d=0.0, n_r=100_000,
                              delta=4e-12, m=512, repetition_period=1 / 70e6)
        return shape, scene, params

    def test_epsilon_reproduces_target_within_5pct(self):
        shape, scene, params = self._setup()
        pulse_photons = 1e-4
        eps = calibrate_epsilon(scene, params, pulse_photons, target_mean=20.0)
        op = diffraction_only_operator(shape, eps)
        pulse = gaussian_pulse(params.m, params.delta, 80e-12, pulse_photons)
        cube = sample_poisson(expected_histograms(scene, op, pulse, params),
                              seed=0, shape=shape)
        mean, _ = photon_statistics(cube)
        assert abs(mean - 20.0) / 20.0 < 0.05

    def test_pulse_photons_reproduces_target(self):
        shape, scene, params = self._setup()
        photons = calibrate_pulse_photons(scene, params, epsilon=1e-3,
                                          target_mean=25.0)
        op = diffraction_only_operator(shape, 1e-3)
        pulse = gaussian_pulse(params.m, params.delta, 80e-12, photons)
        cube = sample_poisson(expected_histograms(scene, op, pulse, params),
                              seed=1, shape=shape)
        mean, _ = photon_statistics(cube)
        assert abs(mean - 25.0) / 25.0 < 0.05

    def test_dark_scene_rejected(self):
        shape, scene, params = self._setup()
        dark = make_flat_scene(shape, 0.0, 0.05)
        with pytest.raises(ValidationError):
            calibrate_epsilon(dark, params, 1e-4, 20.0)


class TestSceneSerialization:
    def test_roundtrip(self, tmp_path, rng):
        shape = GridShape(5, 4)
        scene = make_ball_scene(shape, 0.01, 0.06, 0.08, pixel_pitch_m=0.003)
        path = tmp_path / "scene.txt"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded.shape == scene.shape
        assert np.array_equal(loaded.reflectivity, scene.reflectivity)
        assert np.array_equal(loaded.depth, scene.depth)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.txt"
        path.write_text("not a scene\n")
        with pytest.raises(ValidationError):
            load_scene(path)
