"""Steady subsonic Euler-Poisson flow in a two-dimensional convergent nozzle.

The package builds the radially symmetric background flow by ODE
integration, then solves the perturbed flow with nonzero vorticity through
a deformation-curl-Poisson splitting: characteristic transport of entropy
and pseudo-Bernoulli perturbations, a curl-correction Poisson solve, and a
coupled second-order elliptic system for the stream and electric potentials,
iterated to a fixed point.
"""

from .core import (
    GasParams,
    InletState,
    NozzleGeometry,
    ThermoSample,
    density_from_bernoulli,
    linear_coefficients,
    sound_speed_sq,
)
from .background import (
    BackgroundState,
    check_lemma_condition,
    find_threshold_E,
    integrate_background,
)
from .elliptic import (
    Field2D,
    Grid2D,
    coercivity_check,
    recover_velocity,
    solve_aux_poisson,
    solve_potential_system,
)
from .iteration import (
    BoundaryData,
    BumpAmplitudes,
    PerturbationState,
    SolveReport,
    SolverConfig,
    assemble_rhs,
    compute_sigma,
    fixed_point_solve,
    make_bump_boundary_data,
)
from .transport import trace_characteristic, transport_scalar
from .diagnostics import (
    ResidualReport,
    conservation_report,
    nonlinear_residual,
    stability_sweep,
    total_fields,
)

__version__ = "0.1.0"
