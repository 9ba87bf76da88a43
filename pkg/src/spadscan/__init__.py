"""spadscan: simulator and reconstruction toolkit for SPAD/DMD imaging
with overlapping block illumination and leaked (off-state) light.

The package simulates time-correlated photon-count measurements of a scene
under a sliding w x w illumination window, and recovers intensity and depth
images by variance stabilization and FFT-based ADMM deconvolution.
"""

from .admm import (
    ANSCOMBE_FLOOR,
    AdmmSettings,
    DerivativeStack,
    SolveReport,
    admm_solve,
    project,
    shrinkage,
    solve_normal_equations,
)
from .anscombe import (
    InverseTable,
    anscombe,
    anscombe_algebraic_inverse,
    build_inverse_table,
    ml_inverse,
    stabilized_expectation,
)
from .core import (
    SPEED_OF_LIGHT,
    BallSceneConfig,
    Config,
    GridShape,
    IlluminationConfig,
    PulseModel,
    ReconstructionConfig,
    SceneModel,
    SystemParams,
    ValidationError,
    default_profile,
    desk_profile,
    gaussian_pulse,
    load_config,
    pixel_to_rowcol,
    resolve_config,
    rowcol_to_pixel,
    save_config,
)
from .depth import (
    DeconvolvedCube,
    DepthResult,
    deconvolve_slices,
    median_filter_rows,
    recover_depth,
    tof_by_crosscorrelation,
)
from .forward import (
    DepthOperator,
    HistogramCube,
    IlluminationOperator,
    build_illumination_kernel,
    depth_to_bins,
    diffraction_only_operator,
    expected_histograms,
    intensity_observation,
    sample_poisson,
    sample_with_deadtime,
)
from .intensity import IntensityResult, deconvolve, denoise_stabilized, recover_intensity
from .scenes import (
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

__version__ = "0.1.0"
