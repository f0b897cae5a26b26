"""Mean-field-game optimal control of scalar transport on periodic domains.

Pseudo-spectral solvers for the decoupled tracer-control problem and the
coupled vorticity-control problem (push-forward fixed-point iteration with
interpolation line search), plus particle-ensemble equivalents.
"""

from .costs import CostBreakdown, CostConfig, control_cost, state_cost, terminal_cost
from .errors import (
    ConfigError,
    DegenerateDensity,
    MfgflowError,
    NonFiniteState,
    ZeroMass,
)
from .flow import ModelParams, SteadyStateParams, control_forcing, mvb_rhs, steady_profile
from .mfg1 import Mfg1Solution, solve_mfg1
from .mfg2 import (
    IterationConfig,
    Mfg2Solution,
    evaluate_improvement,
    interpolate_pair,
    iterate_mfg2,
    push_forward,
)
from .particles import (
    Ensemble,
    KdeConfig,
    em_step,
    empirical_density,
    sample_from_density,
    solve_mfg1_sde,
    solve_mfg2_sde,
)
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    adjoint_velocity,
    apply_derivative,
    dealias,
    transform,
    velocity_from_vorticity,
)
from .timestep import FieldTrajectory, TimeWindow, imex_step, solve_backward_hje, solve_forward_continuity

__version__ = "0.1.0"
