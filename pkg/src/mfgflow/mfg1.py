"""Optimal control of a tracer density under a prescribed flow.

Given the flow trajectory q_s, the decoupled system is solved in two passes:

    1. backward:  d(phi)/ds + |grad phi|^2/2 + grad(phi).Tq + D Lap phi = F(x, q_s),
                  phi_T = -G(x, q_T)
    2. control:   alpha_s = grad phi_s
    3. forward:   d(rho)/ds + div[(Tq_s + alpha_s) rho] = D Lap rho,  rho_t = rho0

with F, G the variational derivatives of the running/terminal costs
evaluated at the *given* flow state. At the optimum the realized cost and
the value function coincide: total ~= -int rho0 phi_t dx; the relative gap
is reported as ``value_identity_residual``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import (
    CostBreakdown,
    CostConfig,
    state_derivative_frames,
    terminal_cost,
    total_cost_mfg1,
)
from .errors import ConfigError
from .flow import ModelParams
from .spectral import ScalarField
from .timestep import (
    FieldTrajectory,
    TimeWindow,
    solve_backward_hje,
    solve_forward_continuity,
    trajectory_gradient,
)


@dataclass
class Mfg1Solution:
    rho: FieldTrajectory
    phi: FieldTrajectory
    alpha: FieldTrajectory
    cost: CostBreakdown
    value_identity_residual: float
    diagnostics: dict = field(default_factory=dict)


def cost_source_trajectories(q_traj: FieldTrajectory, cfg: CostConfig):
    """F(x, q_s) per stored frame and the terminal condition -G(x, q_T)."""
    F_frames = state_derivative_frames(q_traj.data, cfg)
    F_traj = FieldTrajectory(q_traj.grid, q_traj.window, F_frames, q_traj.stride)
    G = terminal_cost(q_traj.frame(q_traj.n_frames - 1), cfg).derivative
    phi_T = ScalarField(q_traj.grid, -G.values)
    return F_traj, phi_T


def solve_mfg1(
    q_traj: FieldTrajectory,
    rho0: ScalarField,
    cfg: CostConfig | None,
    params: ModelParams,
    window: TimeWindow,
    stride: int = 1,
) -> Mfg1Solution:
    """One backward HJ solve, control recovery, one forward continuity solve.

    ``cfg=None`` zeroes both cost functionals (uncontrolled baseline: the
    backward solution and the control vanish identically).
    """
    grid = params.grid
    if q_traj.grid != grid or rho0.grid != grid:
        raise ConfigError("q trajectory and rho0 must live on the model grid")
    if not (
        abs(q_traj.window.t_start - window.t_start) < 1e-12
        and abs(q_traj.window.t_end - window.t_end) < 1e-12
    ):
        raise ConfigError("q trajectory does not cover the solve window")
    if np.min(rho0.values) < 0 or rho0.mass() <= 0:
        raise ConfigError("rho0 must be nonnegative with positive mass")

    if cfg is None:
        F_traj = None
        phi_T = ScalarField(grid, np.zeros(grid.shape))
    else:
        F_traj, phi_T = cost_source_trajectories(q_traj, cfg)

    phi = solve_backward_hje(phi_T, q_traj, F_traj, None, params, window, stride)
    alpha = trajectory_gradient(phi)
    rho = solve_forward_continuity(rho0, q_traj, alpha, params, window, stride)

    if cfg is None:
        cost = CostBreakdown(0.0, 0.0, 0.0)
        residual = 0.0
    else:
        cost = total_cost_mfg1(rho, alpha, q_traj, cfg)
        value = -grid.inner(rho0.values, phi.data[0])
        residual = abs(cost.total - value) / max(abs(cost.total), 1.0)

    masses = rho.data.sum(axis=tuple(range(-grid.dim, 0))) * grid.cell_volume
    return Mfg1Solution(
        rho=rho,
        phi=phi,
        alpha=alpha,
        cost=cost,
        value_identity_residual=residual,
        diagnostics={
            "mass_drift": float(np.abs(masses - masses[0]).max() / abs(masses[0])),
            "value_function": float(-grid.inner(rho0.values, phi.data[0])),
        },
    )
