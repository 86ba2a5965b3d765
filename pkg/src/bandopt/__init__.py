"""Optimal four-parameter control bands for Brownian inventory under discounted cost."""

__version__ = "0.1.0"

from .characteristic import (CharacteristicRoots, characteristic_roots, exp_weighted_integral,
                             particular_solution_v0)
from .errors import (BandOptError, ConfigError, DegenerateBandError, DivergenceError,
                     InfeasibleCoefficientsError, InvalidModelError, MalformedCostError,
                     NumericFailureError, StageError)
from .free_boundary import (ControlBand, SolveReport, ToleranceSet, area_lambda1, area_lambda2,
                            band_roots, intersection, overline_B, region_corners, solve_optimal,
                            underline_A)
from .gfunction import (CriticalPoints, GCoefficients, critical_points, eval_g, eval_g_prime,
                        eval_g_second, find_x1, find_x2)
from .holding_cost import (HoldingCost, ModelParams, ValidationReport, default_probe_grid,
                           make_linear, make_piecewise_poly, make_quadratic, validate)
from .policy_sim import BandGridSpec, SimConfig, SimEstimate, grid_search_band, simulate_policy
from .value_function import (GridSpec, PolicyValue, VerificationReport, gbar, policy_value,
                             value_bar, verify_qvi)
