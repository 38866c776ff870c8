"""Images hidden in the spatial correlations of photon pairs: simulation and recovery."""

__version__ = "0.1.0"

from .analysis import (GaussianFitResult, GaussianSpotFitter, ScalingFitResult,
                       ScalingLawRegressor, compute_snr, fit_double_gaussian, fit_snr_scaling,
                       fit_width_scaling, ncc)
from .config import RunConfig
from .estimator import (CorrelationImage, CorrelationImageEstimator, G2Volume,
                        correlation_image_direct, correlation_image_fft, g2_volume,
                        intensity_image)
from .exceptions import (AliasingError, CapacityError, ConfigError, ConvergenceError,
                         CorrcamError, EmptyMaskWarning, FormatError, QuadratureError)
from .frames import FrameStack, read_stack, write_stack
from .holography import (HologramSet, PhaseMap, PhaseShiftingHolography, calibrate_reference,
                         combine_phases, phase_sweep_curve, subtract_reference)
from .optics import (Field1D, ObjectSpec, OpticalConfig, fourier_image,
                     g2_general_distance_1d, theoretical_correlation_image)
from .pairgen import (CameraModel, PairSourceConfig, render_frames, sample_interference_pairs,
                      sample_pairs, simulate_stack)
