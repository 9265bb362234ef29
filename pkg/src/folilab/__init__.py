"""folilab: numerics for Brownian motion along the leaves of embedded foliations.

The package computes the differential geometry of explicitly embedded
foliated charts (projectors, gradient frame, mean curvature, tension),
integrates the leafwise Stratonovich diffusion driven by that frame,
accumulates flow log-determinants, and estimates the Lyapunov-exponent sum
by three independent routes together with stationarity and total-invariance
diagnostics.
"""

from .errors import (BumpTooLarge, ConfigError, EmptyEnsemble, FolilabError,
                     IllConditioned, InvalidParams, NonImmersion, NotTangent,
                     UnsupportedDrift, WeightDegeneracy)
from .models import (DriftSpec, FoliatedModel, circle_model, clifford_torus,
                     drift_field, get_model, test_function_set, torus_revolution)
from .geometry import (GeometryReport, TangentData, ambient_divergence,
                       directional_derivative, geometry_identities,
                       gradient_frame, jacobian, leaf_divergence,
                       mean_curvature, projections, tangent_data, tension)
from .sde import (Ensemble, PathState, SimConfig, jacobian_flow_oracle,
                  leaf_det, load_noise, logdet_increment, make_path_state,
                  pullback_fields, sample_noise, save_noise, simulate_ensemble,
                  simulate_path, step_stratonovich)
from .ergodic import (EstimatorReport, OccupationHistogram, estimator_report,
                      harmonic_residual, lyapunov_baxendale, lyapunov_geometric,
                      lyapunov_pathwise, measure_action_test, occupation_measure,
                      tv_distance)
from .config import ExperimentConfig, load_config, parse_config, serialize_config

__version__ = "0.1.0"
