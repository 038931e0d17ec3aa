"""attractorlab: a numerical laboratory for the long-time dynamics of
scalar reaction-diffusion equations u_t - u_xx + f(u) = h with Dirichlet
boundary conditions and merely continuous nonlinear terms.

Subpackages: msflow (set-valued trajectory calculus), spectral (Galerkin
discretization and exponential-IMEX stepping), nonlinearity (certified
reaction terms and branch policies), equilibria (stationary-set search),
attractor (certificates, manifold tracing, connection graph), cli (batch
front end and artifact store).
"""

__version__ = "0.1.0"

from .msflow import (SetOfStates, TrajectoryBundle, TrajectorySample,
                     backward_complete, check_semiflow_inclusion, concatenate,
                     hausdorff_semidist, is_fixed_point, translate)
from .nonlinearity import BranchPolicy, NonlinearTerm, builtin, certify, make_ensemble
from .spectral import (SpectralBasis, SpectralField, energy, energy_series,
                       galerkin_rhs, integrate, make_basis, make_bundle, norms,
                       project, step)
from .equilibria import (Equilibrium, EquilibriumSet, check_regularity,
                         find_all, linearize, newton_solve)
from .attractor import (BoundCertificate, ConnectionGraph, absorbing_ball,
                        build_attractor, certify_dissipation, certify_smoothing,
                        dimension_scan, energy_descent_audit, linf_bound,
                        omega_limit, trace_unstable_manifold)
