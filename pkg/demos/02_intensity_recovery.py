"""Recover the intensity image from leaked-light-contaminated counts.

Shows the four-stage chain (variance stabilization, floor-constrained
denoising, exact-unbiased inverse, constrained deconvolution) on the desk
phantom, and contrasts the 5x5 overlap-scan arm with plain raster scanning
at the same photon budget.

Run:  python demos/02_intensity_recovery.py
"""

from pathlib import Path

import spadscan as ss
from spadscan.admm import AdmmSettings
from spadscan.fileio import save_preview_8bit
from spadscan.scenes import ball_scene_from_config

out = Path(__file__).parent / "output" / "02_intensity"
out.mkdir(parents=True, exist_ok=True)

cfg = ss.desk_profile()
scene = ball_scene_from_config(cfg.grid, cfg.scene, cfg.system)
pulse = cfg.build_pulse()
stack = ss.DerivativeStack(cfg.grid, cfg.recon.curvature_weight)
table = ss.build_inverse_table(lambda_max=2000.0)
scale = cfg.system.n_r * cfg.system.eta * pulse.photons_per_pulse

mu, lam = cfg.recon.denoise_weight, cfg.recon.deconvolve_weight
settings = AdmmSettings(reg_weight=mu, max_iters=400, tol_primal=1e-6, tol_dual=1e-6)

for w in (5, 1):
    op = ss.build_illumination_kernel(cfg.grid, ss.IlluminationConfig(w, 1e-3))
    expected = ss.expected_histograms(scene, op, pulse, cfg.system)
    cube = ss.sample_poisson(expected, seed=0, shape=cfg.grid)
    result = ss.recover_intensity(cube, op, stack, table, mu, lam, settings)
    quality = ss.psnr(result.alpha_opt / scale, scene.reflectivity, peak=1.0)
    print(f"w={w}: PSNR {quality:5.2f} dB "
          f"(denoise {result.denoise_report.iterations} iters, "
          f"deconvolve {result.deconvolve_report.iterations} iters)")
    save_preview_8bit(out / f"w{w}_raw_counts.png", result.v, cfg.grid)
    save_preview_8bit(out / f"w{w}_recovered.png", result.alpha_opt, cfg.grid)

save_preview_8bit(out / "truth.png", scene.reflectivity, cfg.grid)
print(f"images written to {out}")
print("the 5x5 window collects ~25x the signal photons; after deconvolution")
print("it clears the leaked-light bath that drowns the raster arm")
