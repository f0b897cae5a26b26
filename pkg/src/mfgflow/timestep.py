"""IMEX time stepping for forward continuity and backward HJ equations.

One step of the 2-stage, second-order scheme advances spectral state y by

    y_half  = (y       + dt/2 * N(y, t))         / (1 + dt/2 * D|k|^2)
    y_next  = (y*(1 - dt/2 * D|k|^2) + dt * N(y_half, t + dt/2))
                                                 / (1 + dt/2 * D|k|^2)

i.e. explicit midpoint for the advective/nonlinear part N and trapezoidal
(Crank-Nicolson) treatment of the stiff diffusion, solved exactly per
Fourier mode. The diffusion part is unconditionally stable; the advective
CFL is the caller's responsibility and a warning is emitted when
dt*max|velocity|/h exceeds 0.5.

The backward Hamilton-Jacobi solve substitutes tau = T - s, under which

    d(psi)/d(tau) = D Lap psi + |grad psi|^2 / 2 + u . grad psi - source

is a well-posed forward heat-type equation integrated with the same split.
Quadratic products are dealiased; sources are not.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteState
from .flow import ModelParams
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    dealias_c,
    grad_c,
    to_coefficients,
    to_values,
    velocity_c,
)


@dataclass(frozen=True)
class TimeWindow:
    """Closed time window [t_start, t_end] stepped at fixed dt."""

    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_end <= self.t_start:
            raise ConfigError("t_end must exceed t_start")
        n = (self.t_end - self.t_start) / self.dt
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ConfigError(f"window length {self.t_end - self.t_start} is not an integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    def times(self, stride: int = 1) -> np.ndarray:
        return self.t_start + self.dt * stride * np.arange(self.n_steps // stride + 1)


class FieldTrajectory:
    """Time-indexed stack of scalar or vector fields at a fixed storage stride.

    Frames live in one ndarray of shape (frames, *spatial) for scalars and
    (frames, d, *spatial) for vectors; frame 0 is the state at t_start and
    frame i the state at t_start + i*stride*dt. Requesting a time between
    stored frames interpolates linearly.
    """

    def __init__(self, grid: Grid, window: TimeWindow, data: np.ndarray, stride: int = 1, is_vector: bool = False):
        stride = int(stride)
        if stride < 1:
            raise ConfigError("stride must be >= 1")
        if window.n_steps % stride != 0:
            raise ConfigError(f"stride {stride} does not divide n_steps {window.n_steps}")
        expected = window.n_steps // stride + 1
        spatial = (grid.dim, *grid.shape) if is_vector else grid.shape
        if data.shape != (expected, *spatial):
            raise ConfigError(f"trajectory data shape {data.shape} != {(expected, *spatial)}")
        self.grid = grid
        self.window = window
        self.data = data
        self.stride = stride
        self.is_vector = is_vector

    @classmethod
    def from_constant(cls, field, window: TimeWindow, stride: int = 1) -> "FieldTrajectory":
        n = window.n_steps // stride + 1
        if isinstance(field, VectorField):
            base = field.stack()
            return cls(field.grid, window, np.broadcast_to(base, (n, *base.shape)), stride, is_vector=True)
        return cls(field.grid, window, np.broadcast_to(field.values, (n, *field.grid.shape)), stride)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def frame_dt(self) -> float:
        return self.window.dt * self.stride

    @property
    def times(self) -> np.ndarray:
        return self.window.times(self.stride)

    def frame(self, i: int):
        if self.is_vector:
            return VectorField(tuple(ScalarField(self.grid, self.data[i, d]) for d in range(self.grid.dim)))
        return ScalarField(self.grid, self.data[i])

    def at_time(self, s: float) -> np.ndarray:
        """Frame values at time s, linearly interpolated between stored frames."""
        pos = (s - self.window.t_start) / self.frame_dt
        i = int(math.floor(pos + 1e-12))
        if i < 0:
            i = 0
        if i >= self.n_frames - 1:
            return self.data[self.n_frames - 1]
        frac = pos - i
        if frac < 1e-12:
            return self.data[i]
        return (1.0 - frac) * self.data[i] + frac * self.data[i + 1]

    def copy(self) -> "FieldTrajectory":
        return FieldTrajectory(self.grid, self.window, np.array(self.data), self.stride, self.is_vector)


def trajectory_gradient(phi_traj: FieldTrajectory) -> FieldTrajectory:
    """grad(phi) frame-wise, batched over stored frames."""
    grid = phi_traj.grid
    coeffs = to_coefficients(phi_traj.data, grid)
    comps = [to_values(c, grid) for c in grad_c(coeffs, grid)]
    return FieldTrajectory(grid, phi_traj.window, np.stack(comps, axis=1), phi_traj.stride, is_vector=True)


def trajectory_velocity(q_traj: FieldTrajectory) -> FieldTrajectory:
    """Transport velocity T(q) frame-wise, batched over stored frames."""
    grid = q_traj.grid
    coeffs = to_coefficients(q_traj.data, grid)
    comps = [to_values(c, grid) for c in velocity_c(coeffs, grid)]
    return FieldTrajectory(grid, q_traj.window, np.stack(comps, axis=1), q_traj.stride, is_vector=True)


class _TimeInterp:
    """Linear-in-time evaluator over a (frames, ...) array."""

    __slots__ = ("data", "t0", "dt_frame", "n")

    def __init__(self, data: np.ndarray, t0: float, dt_frame: float):
        self.data = data
        self.t0 = t0
        self.dt_frame = dt_frame
        self.n = data.shape[0]

    def at(self, s: float) -> np.ndarray:
        pos = (s - self.t0) / self.dt_frame
        i = int(math.floor(pos + 1e-12))
        if i < 0:
            return self.data[0]
        if i >= self.n - 1:
            return self.data[self.n - 1]
        frac = pos - i
        if frac < 1e-12:
            return self.data[i]
        return (1.0 - frac) * self.data[i] + frac * self.data[i + 1]


def _imex_update(yc, nfunc, t, dt, inv_half, decay_half):
    """One 2-stage IMEX step on spectral state yc; nfunc(yc, t) -> N coefficients."""
    y_half = (yc + (0.5 * dt) * nfunc(yc, t)) * inv_half
    return (yc * decay_half + dt * nfunc(y_half, t + 0.5 * dt)) * inv_half


def imex_step(state: ScalarField, explicit_rhs, diffusion_coeff: float, dt: float, t: float = 0.0) -> ScalarField:
    """One IMEX step of d(state)/dt = explicit_rhs(state, t) + D * Lap state.

    ``explicit_rhs(field, t) -> ScalarField`` must exclude the diffusion term.
    """
    grid = state.grid
    lam = diffusion_coeff * grid.k2
    inv_half = 1.0 / (1.0 + 0.5 * dt * lam)
    decay_half = 1.0 - 0.5 * dt * lam

    def nfunc(yc, tt):
        return explicit_rhs(ScalarField.from_coefficients(grid, yc), tt).coefficients

    yc = _imex_update(state.coefficients, nfunc, t, dt, inv_half, decay_half)
    return ScalarField.from_coefficients(grid, yc)


def _march(y0_c, grid: Grid, window: TimeWindow, diffusion: float, nfunc, stride: int, label: str):
    """March spectral state over the window, storing physical frames at stride."""
    n_steps = window.n_steps
    if n_steps % stride != 0:
        raise ConfigError(f"stride {stride} does not divide n_steps {n_steps}")
    lam = diffusion * grid.k2
    dt = window.dt
    inv_half = 1.0 / (1.0 + 0.5 * dt * lam)
    decay_half = 1.0 - 0.5 * dt * lam

    frames = np.empty((n_steps // stride + 1, *grid.shape))
    frames[0] = to_values(y0_c, grid)
    yc = y0_c
    for m in range(n_steps):
        yc = _imex_update(yc, nfunc, window.t_start + m * dt, dt, inv_half, decay_half)
        if (m + 1) % stride == 0:
            f = to_values(yc, grid)
            if not np.isfinite(f).all():
                raise NonFiniteState(f"{label} solve produced non-finite values at step {m + 1}")
            frames[(m + 1) // stride] = f
    return frames


def _control_interp(control: FieldTrajectory | None, grid: Grid):
    """Physical control values over stored frames: alpha directly or grad(phi)."""
    if control is None:
        return None
    if control.grid != grid:
        raise ConfigError("control trajectory lives on a different grid")
    traj = control if control.is_vector else trajectory_gradient(control)
    return _TimeInterp(traj.data, traj.window.t_start, traj.frame_dt)


def _check_cfl(max_speed: float, grid: Grid, dt: float, label: str):
    if dt * max_speed / grid.h > 0.5:
        warnings.warn(
            f"{label}: advective CFL dt*max|velocity|/h = {dt * max_speed / grid.h:.2f} > 0.5",
            RuntimeWarning,
            stacklevel=3,
        )


def solve_forward_continuity(
    rho0: ScalarField,
    advecting,
    control: FieldTrajectory | None,
    params: ModelParams,
    window: TimeWindow,
    stride: int = 1,
) -> FieldTrajectory:
    """Integrate d(rho)/ds + div[(T q + alpha) rho] = D Lap rho forward in time.

    ``advecting`` is a scalar FieldTrajectory of q (fixed advection), the
    string ``"self"`` (q is the evolving state itself), or None (no
    advection). ``control`` is a trajectory of alpha (vector) or of phi
    (scalar, alpha = grad phi), or None. Total mass is conserved exactly by
    the divergence form.
    """
    grid = params.grid
    if rho0.grid != grid:
        raise ConfigError("rho0 lives on a different grid than the model")
    self_advect = isinstance(advecting, str) and advecting == "self"
    u_interp = None
    if not self_advect and advecting is not None:
        if advecting.grid != grid:
            raise ConfigError("advecting trajectory lives on a different grid")
        u_traj = trajectory_velocity(advecting)
        u_interp = _TimeInterp(u_traj.data, u_traj.window.t_start, u_traj.frame_dt)
    a_interp = _control_interp(control, grid)

    speed = 0.0
    if u_interp is not None:
        speed += float(np.sqrt(np.max(np.sum(u_interp.data**2, axis=1))))
    if a_interp is not None:
        speed += float(np.sqrt(np.max(np.sum(a_interp.data**2, axis=1))))
    if speed > 0.0:
        _check_cfl(speed, grid, window.dt, "forward continuity")

    mask = grid.dealias_mask
    ik = grid.ik
    dim = grid.dim

    def nfunc(yc, s):
        rho = to_values(yc, grid)
        if self_advect:
            w = [to_values(c, grid) for c in velocity_c(yc, grid)]
        elif u_interp is not None:
            w = [u_interp.at(s)[d] for d in range(dim)]
        else:
            w = [np.zeros(grid.shape) for _ in range(dim)]
        if a_interp is not None:
            a = a_interp.at(s)
            w = [wd + a[d] for d, wd in enumerate(w)]
        out = ik[0] * to_coefficients(w[0] * rho, grid)
        for d in range(1, dim):
            out = out + ik[d] * to_coefficients(w[d] * rho, grid)
        return -out * mask

    frames = _march(rho0.coefficients, grid, window, params.nu, nfunc, stride, "forward continuity")
    frames[0] = rho0.values
    return FieldTrajectory(grid, window, frames, stride)


def solve_backward_hje(
    phi_T: ScalarField,
    q_traj: FieldTrajectory | None,
    source: FieldTrajectory | None,
    extra_term: FieldTrajectory | None,
    params: ModelParams,
    window: TimeWindow,
    stride: int = 1,
) -> FieldTrajectory:
    """Integrate the HJ equation backward from the terminal condition phi_T.

        d(phi)/ds + |grad phi|^2/2 + grad(phi).Tq + D Lap phi = source + extra

    Returned frames are ordered forward in s; the final frame is the
    supplied phi_T bitwise.
    """
    grid = params.grid
    if phi_T.grid != grid:
        raise ConfigError("phi_T lives on a different grid than the model")
    u_interp = None
    if q_traj is not None:
        if q_traj.grid != grid:
            raise ConfigError("q trajectory lives on a different grid")
        u_traj = trajectory_velocity(q_traj)
        u_interp = _TimeInterp(u_traj.data, u_traj.window.t_start, u_traj.frame_dt)
        _check_cfl(float(np.sqrt(np.max(np.sum(u_traj.data**2, axis=1)))), grid, window.dt, "backward HJ")

    src_interp = None
    if source is not None or extra_term is not None:
        parts = []
        for traj in (source, extra_term):
            if traj is None:
                continue
            if traj.grid != grid or traj.is_vector:
                raise ConfigError("source terms must be scalar trajectories on the model grid")
            parts.append(_TimeInterp(to_coefficients(traj.data, grid), traj.window.t_start, traj.frame_dt))
        src_interp = parts

    T_end = window.t_end
    mask = grid.dealias_mask
    dim = grid.dim

    def nfunc(yc, tau):
        s = T_end - tau
        g = [to_values(c, grid) for c in grad_c(yc, grid)]
        quad = g[0] * g[0]
        for d in range(1, dim):
            quad = quad + g[d] * g[d]
        quad *= 0.5
        if u_interp is not None:
            u = u_interp.at(s)
            for d in range(dim):
                quad += u[d] * g[d]
        out = dealias_c(to_coefficients(quad, grid), grid)
        if src_interp is not None:
            for part in src_interp:
                out = out - part.at(s)
        return out

    tau_window = TimeWindow(0.0, window.t_end - window.t_start, window.dt)
    frames = _march(phi_T.coefficients, grid, tau_window, params.nu, nfunc, stride, "backward HJ")
    frames = frames[::-1].copy()
    frames[-1] = phi_T.values
    return FieldTrajectory(grid, window, frames, stride)
