"""qlis: quantum-light interferometric spectroscopy at desk scale.

Few-photon joint spectral amplitudes, passive/active mode-transform
algebra, finite-dimensional matter with multipoint (including
out-of-time-ordered) dipole correlators, fourth-order coincidence signal
engines with gated detection, and an exact-propagation oracle.
"""

__version__ = "0.1.0"

from ._kernels import NUMBA_ENABLED
from .algebra import (ModeTransform, RotatedTwoPhoton, TwoModeFockOperators,
                      beam_splitter, build_fock_operators, casimir_check,
                      commutator_residuals, compose, delayed_balanced_bs,
                      fock_unitary, squeezer, transform_two_photon,
                      two_mode_coincidence)
from .dyson import (coincidence_orders, dyson_state_terms,
                    liouville_fourth_order, oracle_residuals)
from .errors import (CapabilityError, ConfigurationError, CoverageError,
                     GateKindError, QlisError, TruncationOverflowError,
                     ValidationError)
from .matter import (CorrelatorSpec, DipoleChannel, Insertion, MatterSystem,
                     contour_propagator, heisenberg_dipole, liouville_green,
                     load_matter, multipoint_correlator, rwa_correlator,
                     save_matter)
from .oracle import (JointModel, exact_coincidence, propagate,
                     total_excitation_operator)
from .signals import (AmplitudeStack, DetectionGate, HomConfig,
                      NarrowbandResult, SignalScan, config_hash,
                      exchange_cross_term, fixed_delay_signal,
                      gated_coincidence, hom_coincidence,
                      narrowband_spdc_coincidence, pair_density,
                      phase_matching, refine_grid, retarded_field_contribution,
                      richardson_check, run_scan, time_frequency_coincidence,
                      mixed_density, time_frequency_map)
from .states import (FrequencyGrid, NPhotonAmplitude, SpdcParameters,
                     TwoPhotonAmplitude, delta_like_envelope,
                     envelope_to_time, exchange_phase_amplitude,
                     exchange_swap, gaussian_envelope, load_amplitude,
                     product_amplitude, save_amplitude, spdc_amplitude,
                     theta_symmetrize)
