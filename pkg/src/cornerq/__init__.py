"""Conformal factors for the fourth-order corner problem on the half-ball.

The package constructs fields omega on the closed upper half of the unit
four-ball that are biharmonic inside, produce constant third-order
curvature data on both boundary faces, satisfy the second-order corner
condition on the equatorial two-sphere, and realize arbitrary admissible
Neumann data on the two faces.  A verification layer measures every
residual, checks the Gauss-Bonnet bookkeeping, and exercises the conformal
group action that generates further solutions.
"""

from .biharmonic import BasisTerm, RadialPoly, table_row, verify_table
from .conformal import (ConformalElement, act, boost, compose, identity,
                        inversion_conformal_factor, inversion_element,
                        inversion_map, jacobian_det, mobius_apply, rotation)
from .construct import (BoundaryData, ConstraintError, Solution,
                        base_solution, build_solution, check_corner_constraints,
                        extract_zonal_coeffs, pullback_flat_data, seed_field,
                        solve_fullball)
from .expressions import DataExpression, ParseError
from .fields import (CallableField, CompositeField, ConstField, FDScheme,
                     Field, LinearCombination, SeriesField, ZonalPowerField,
                     apply_mu, apply_nu, apply_p2, apply_p3m, apply_p3n,
                     apply_p4, laplacian4)
from .geometry import (Point4, Points, QuadratureGrid, cart_to_sph,
                       gauss_legendre, grid_M, grid_N, grid_Sigma, grid_X,
                       integrate, sph_to_cart)
from .harmonics import (inner_closed, inner_quad, sum_by_parts, zonal,
                        zonal_deriv, zonal_partial_sum)
from .verify import (FLAT, FlatConstants, GaussBonnetReport, ResidualReport,
                     VerifyConfig, corner_fourth_derivative_probe,
                     corner_h_compatibility, curvatures, gauss_bonnet,
                     gauss_bonnet_linear, residual_report)

__version__ = "0.1.0"
