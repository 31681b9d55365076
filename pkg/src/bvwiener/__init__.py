"""Explicit martingale representations and BV calculus on Wiener space.

The package samples Brownian paths exactly and builds the predictable integrands
of functionals of bounded variation. It checks the resulting identities by Monte
Carlo with reported standard errors.
"""

from .bv_measure import BVScalarFunction, SignedMeasure1D, integrate_kernel, total_variation
from .chain_rule import (GaussianConditioner, bv_defining_identity_check, chain_rule_check_phi,
                         disintegrated_check, lhs_levelset, rhs_levelset)
from .clark_ocone import (Cylindrical, RepReport, RunningMax, barrier, digital, expected_value,
                          integrability_bound_check, integrand, integrand_matrix, ito_integral,
                          projection_check, verify_representation)
from .errors import AlignmentError, BVWienerError, ConditioningError, InvalidArgument, NumericError
from .functional import CylindricalFunctional, Direction, ibp_check
from .grid_paths import (BrownianPath, RngStream, TimeGrid, hitting_time, make_grid,
                         running_max, sample_path, sample_paths, wiener_integral)
from .kernels import NormalizedDirection, cyl_kernel, max_density, std_normal_density
from .montecarlo import Estimate, IdentityReport, MCConfig
from .orlicz import Sample, luxembourg_norm, martingale_orlicz_convergence, young_function
from .steps import StepFunction

__version__ = "0.1.0"
