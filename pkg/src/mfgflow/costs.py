"""Running and terminal cost functionals and their variational derivatives.

Two families, both anchored to a reference blend Qbar = gamma*Q_i +
(1-gamma)*Q_f of the initial and target profiles (q' = q - Qbar):

    L2:  F_run(q) = |T q'|^2 / 2 integrated,   dF/dq = T*.(T q')
         G_end(q) = |q - Q_f|^2 / 2 integrated, dG/dq = q - Q_f
    KL:  F_run(q) = int q log(q/Qbar),          dF/dq = 1 + log(q/Qbar)
         G_end(q) = int q log(q/Q_f),           dG/dq = 1 + log(q/Q_f)

plus the control cost int int |alpha|^2/2 * q dx ds. Spatial integrals use
exact grid quadrature (h^d weights); time integrals are trapezoidal on the
stored stride. For the KL family the density is clamped below at
positivity_floor * max(q) before logs; the number of clamped nodes is
reported as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .spectral import Grid, ScalarField, to_coefficients, to_values, velocity_c
from .timestep import FieldTrajectory

KINDS = ("l2", "kl")


@dataclass
class CostConfig:
    """Cost family, blend weight, and reference profiles."""

    kind: str
    gamma: float
    Q_i: ScalarField
    Q_f: ScalarField
    positivity_floor: float = 1e-12

    blend: ScalarField = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"cost kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.Q_i.grid != self.Q_f.grid:
            raise ConfigError("Q_i and Q_f must share one grid")
        if self.kind == "kl":
            if self.positivity_floor <= 0:
                raise ConfigError("positivity_floor must be positive for the KL kind")
            if np.min(self.Q_f.values) <= 0:
                raise ConfigError("Q_f must be strictly positive for the KL kind")
        self.blend = ScalarField(
            self.Q_i.grid, self.gamma * self.Q_i.values + (1.0 - self.gamma) * self.Q_f.values
        )

    @property
    def grid(self) -> Grid:
        return self.Q_i.grid


class CostValue(NamedTuple):
    value: float
    derivative: ScalarField
    clamped: int


@dataclass
class CostBreakdown:
    terminal: float
    running_state: float
    running_control: float

    @property
    def total(self) -> float:
        return self.terminal + self.running_state + self.running_control

    def to_dict(self) -> dict:
        return {
            "terminal": self.terminal,
            "running_state": self.running_state,
            "running_control": self.running_control,
            "total": self.total,
        }


def _clamped_log_ratio(q: np.ndarray, ref: np.ndarray, rel_floor: float):
    """log(q/ref) with q clamped below at rel_floor * max(q); counts clamps."""
    floor = rel_floor * float(np.max(q))
    if floor <= 0.0:
        floor = rel_floor
    clamped = int(np.count_nonzero(q < floor))
    return np.log(np.maximum(q, floor) / ref), clamped


def _trapezoid(values: np.ndarray, dt_frame: float) -> float:
    w = np.ones(len(values))
    w[0] = w[-1] = 0.5
    return float(np.dot(w, values)) * dt_frame


def state_cost(q: ScalarField, cfg: CostConfig) -> CostValue:
    """Running state cost F(q) and its variational derivative."""
    grid = cfg.grid
    if q.grid != grid:
        raise ConfigError("q lives on a different grid than the cost config")
    if cfg.kind == "l2":
        qp_c = to_coefficients(q.values - cfg.blend.values, grid)
        u_c = velocity_c(qp_c, grid)
        u = [to_values(c, grid) for c in u_c]
        value = 0.5 * grid.integrate(sum(ui * ui for ui in u))
        # T*.(T q') applied spectrally: conj multiplier on each component
        d_c = np.conj(grid.velocity_mult[0]) * u_c[0]
        for m, c in zip(grid.velocity_mult[1:], u_c[1:]):
            d_c = d_c + np.conj(m) * c
        return CostValue(value, ScalarField.from_coefficients(grid, d_c), 0)
    log_ratio, clamped = _clamped_log_ratio(q.values, cfg.blend.values, cfg.positivity_floor)
    value = grid.integrate(q.values * log_ratio)
    return CostValue(value, ScalarField(grid, 1.0 + log_ratio), clamped)


def terminal_cost(q_T: ScalarField, cfg: CostConfig) -> CostValue:
    """Terminal cost G(q_T) and its variational derivative."""
    grid = cfg.grid
    if q_T.grid != grid:
        raise ConfigError("q_T lives on a different grid than the cost config")
    if cfg.kind == "l2":
        diff = q_T.values - cfg.Q_f.values
        return CostValue(0.5 * grid.integrate(diff * diff), ScalarField(grid, diff), 0)
    log_ratio, clamped = _clamped_log_ratio(q_T.values, cfg.Q_f.values, cfg.positivity_floor)
    value = grid.integrate(q_T.values * log_ratio)
    return CostValue(value, ScalarField(grid, 1.0 + log_ratio), clamped)


# ---------------------------------------------------------------------------
# batched (per-frame) evaluations over trajectories
# ---------------------------------------------------------------------------

def control_cost_density(alpha_frames: np.ndarray, q_frames: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-frame int |alpha|^2/2 * q dx; alpha_frames shape (F, d, *spatial)."""
    speed2 = np.sum(alpha_frames**2, axis=1)
    return 0.5 * np.sum(speed2 * q_frames, axis=_sum_axes(grid)) * grid.cell_volume


def state_cost_frames(q_frames: np.ndarray, cfg: CostConfig):
    """Per-frame F(q_s); returns (values array, total clamp count)."""
    grid = cfg.grid
    if cfg.kind == "l2":
        u = l2_state_velocity(q_frames, cfg)
        vals = 0.5 * np.sum(np.sum(u**2, axis=1), axis=_sum_axes(grid)) * grid.cell_volume
        return vals, 0
    floors = cfg.positivity_floor * np.max(q_frames, axis=_sum_axes(grid), keepdims=True)
    floors = np.maximum(floors, 1e-300)  # guard frames with nonpositive maxima
    clamped = int(np.count_nonzero(q_frames < floors))
    log_ratio = np.log(np.maximum(q_frames, floors) / cfg.blend.values)
    vals = np.sum(q_frames * log_ratio, axis=_sum_axes(grid)) * grid.cell_volume
    return vals, clamped


def l2_state_velocity(q_frames: np.ndarray, cfg: CostConfig) -> np.ndarray:
    """T(q - Qbar) per frame, shape (F, d, *spatial); the L2 running-cost kernel."""
    grid = cfg.grid
    qp_c = to_coefficients(q_frames - cfg.blend.values, grid)
    return np.stack([to_values(c, grid) for c in velocity_c(qp_c, grid)], axis=1)


def _sum_axes(grid: Grid):
    return tuple(range(-grid.dim, 0))


def _check_aligned(*trajs: FieldTrajectory):
    first = trajs[0]
    for t in trajs[1:]:
        if t.grid != first.grid:
            raise ConfigError("trajectories live on different grids")
        if t.window != first.window or t.stride != first.stride:
            raise ConfigError("trajectories are not aligned in time")


def control_cost(q_traj: FieldTrajectory, alpha_traj: FieldTrajectory) -> float:
    """int_t^T int |alpha|^2/2 * q dx ds, trapezoidal in time."""
    _check_aligned(q_traj, alpha_traj)
    dens = control_cost_density(alpha_traj.data, q_traj.data, q_traj.grid)
    return _trapezoid(dens, q_traj.frame_dt)


def total_cost_mfg2(q_traj: FieldTrajectory, alpha_traj: FieldTrajectory, cfg: CostConfig) -> CostBreakdown:
    """G(q_T) + int [ int |alpha|^2/2 q dx + F(q_s) ] ds for the flow control problem."""
    _check_aligned(q_traj, alpha_traj)
    state_vals, _ = state_cost_frames(q_traj.data, cfg)
    return CostBreakdown(
        terminal=terminal_cost(q_traj.frame(q_traj.n_frames - 1), cfg).value,
        running_state=_trapezoid(state_vals, q_traj.frame_dt),
        running_control=control_cost(q_traj, alpha_traj),
    )


def total_cost_mfg1(
    rho_traj: FieldTrajectory,
    alpha_traj: FieldTrajectory,
    q_traj: FieldTrajectory,
    cfg: CostConfig,
) -> CostBreakdown:
    """Tracer-control cost: terminal int G(x, q_T) rho_T dx and running
    int [ |alpha|^2/2 + F(x, q_s) ] rho_s dx ds, with F, G evaluated at the
    given flow state."""
    _check_aligned(rho_traj, alpha_traj, q_traj)
    grid = rho_traj.grid
    G = terminal_cost(q_traj.frame(q_traj.n_frames - 1), cfg).derivative
    terminal = grid.inner(G.values, rho_traj.data[-1])

    F_frames = state_derivative_frames(q_traj.data, cfg)
    run_state = np.sum(F_frames * rho_traj.data, axis=_sum_axes(grid)) * grid.cell_volume
    return CostBreakdown(
        terminal=terminal,
        running_state=_trapezoid(run_state, rho_traj.frame_dt),
        running_control=control_cost(rho_traj, alpha_traj),
    )


def state_derivative_frames(q_frames: np.ndarray, cfg: CostConfig) -> np.ndarray:
    """F(x, q_s) = dF/dq per frame, batched."""
    grid = cfg.grid
    if cfg.kind == "l2":
        qp_c = to_coefficients(q_frames - cfg.blend.values, grid)
        u_c = velocity_c(qp_c, grid)
        d_c = np.conj(grid.velocity_mult[0]) * u_c[0]
        for m, c in zip(grid.velocity_mult[1:], u_c[1:]):
            d_c = d_c + np.conj(m) * c
        return to_values(d_c, grid)
    floors = cfg.positivity_floor * np.max(q_frames, axis=_sum_axes(grid), keepdims=True)
    floors = np.maximum(floors, 1e-300)
    return 1.0 + np.log(np.maximum(q_frames, floors) / cfg.blend.values)


def terminal_derivative(q_T_values: np.ndarray, cfg: CostConfig) -> np.ndarray:
    """G(x, q_T) = dG/dq at the terminal state (values array in, values out)."""
    if cfg.kind == "l2":
        return q_T_values - cfg.Q_f.values
    floor = cfg.positivity_floor * float(np.max(q_T_values))
    return 1.0 + np.log(np.maximum(q_T_values, max(floor, cfg.positivity_floor)) / cfg.Q_f.values)
