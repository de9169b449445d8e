"""Spatial autoregression for data on finite- and infinite-dimensional unit spheres."""

from .bootstrap import BootstrapResult, bootstrap_null_test
from .conformal import (ConformalSet, SplitConformal, calibrate_split_conformal, conformal_radius, predict_point,
                        set_contains)
from .embeddings import (Composition, GridDensity, composition_to_sphere, density_to_sphere, jensen_shannon,
                         sphere_to_composition, sphere_to_density)
from .errors import (AntipodalError, ConvergenceError, DataFormatError, DimensionMismatchError, SingularDesignError,
                     SphsarError, UnidentifiedError)
from .family import TransportFamily
from .gmm import (MomentEstimates, SarFit, TracePolynomial, WaldResult, estimate_spatial_parameter, fit_sar,
                  gram_matrix, moment_estimates, residual_transports, wald_statistic)
from .models import ModelFit, fit_pssar, fit_srmsar
from .regression import (ConditionalMeanField, CovariateTable, conditional_frechet_mean, global_frechet_weights,
                         srmsar_transports)
from .sphere import (FrechetMeanOptions, TransportMap, UnitVector, apply, center_transports, frechet_mean,
                     geodesic_distance, hs_inner, rodrigues_exp, transport_between)
from .weights import (RhoInterval, SpatialWeights, adjacency_population_weights, admissible_rho_interval,
                      grid_first_order_weights, knn_random_weights, s_matrix_action, trace_products)

__version__ = "0.1.0"
