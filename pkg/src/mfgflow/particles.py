"""Particle-ensemble equivalents of the PDE control solvers.

The tracer solver replaces the forward continuity solve by independent
Euler-Maruyama trajectories

    X <- wrap(X + [Tq(X) + alpha(X)] dt + sqrt(2 D dt) xi),

sampling the initial positions from the given density by inverse-transform
on its piecewise-linear CDF. Densities are recovered on the grid with a
cloud-in-cell deposit followed by spectral Gaussian smoothing; the
finite-player flow control drives each particle with the velocity induced
by the live empirical density (the interacting-particle form of the
coupled system), while the backward sweep and the mu line search reuse the
grid machinery unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .costs import CostBreakdown, CostConfig, terminal_derivative
from .errors import ConfigError, NonFiniteState, ZeroMass
from .flow import ModelParams
from .mfg1 import cost_source_trajectories
from .mfg2 import IterationConfig, Mfg2Solution, iterate_mfg2
from .spectral import Grid, ScalarField, to_coefficients, to_values
from .timestep import (
    FieldTrajectory,
    TimeWindow,
    _TimeInterp,
    solve_backward_hje,
    trajectory_gradient,
    trajectory_velocity,
)


@dataclass
class Ensemble:
    """N particle positions in the periodic box [-L, L)^d."""

    positions: np.ndarray  # (N, d)
    half_width: float
    seed: int
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if self.positions.shape[0] < 1:
            raise ConfigError("ensemble needs at least one particle")
        self.positions = wrap_positions(self.positions, self.half_width)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass
class KdeConfig:
    """Gaussian mollifier for particle-to-grid density recovery."""

    bandwidth: float
    target_mass: float = 1.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")
        if self.target_mass <= 0:
            raise ConfigError("target_mass must be positive")


def wrap_positions(pos: np.ndarray, half_width: float) -> np.ndarray:
    return np.mod(pos + half_width, 2.0 * half_width) - half_width


def _sample_linear_rows(node_values: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """Inverse-transform samples from piecewise-linear densities.

    ``node_values``: (rows, J) nonnegative nodal densities (periodic);
    ``u``: (rows,) uniforms in [0, 1). Returns cell-fraction positions in
    grid units, one sample per row.
    """
    J = node_values.shape[1]
    ext = np.concatenate([node_values, node_values[:, :1]], axis=1)
    cell_mass = 0.5 * h * (ext[:, :-1] + ext[:, 1:])
    cum = np.cumsum(cell_mass, axis=1)
    total = cum[:, -1]
    if np.any(total <= 0):
        raise ZeroMass("a conditional density slice has nonpositive mass")
    r = u * total
    idx = np.sum(cum <= r[:, None], axis=1)
    idx = np.minimum(idx, J - 1)
    prev = np.where(idx > 0, np.take_along_axis(cum, np.maximum(idx - 1, 0)[:, None], 1)[:, 0], 0.0)
    into = r - prev
    a = np.take_along_axis(ext, idx[:, None], 1)[:, 0]
    b = np.take_along_axis(ext, (idx + 1)[:, None], 1)[:, 0]
    slope = b - a
    # solve h*(a t + slope t^2 / 2) = into for t in [0, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(a * a + 2.0 * slope * into / h, 0.0))
        t_quad = (disc - a) / slope
        t_lin = into / (np.maximum(a, 1e-300) * h)
    t = np.where(np.abs(slope) > 1e-14 * np.maximum(a, b), t_quad, t_lin)
    return idx + np.clip(t, 0.0, 1.0)


def sample_from_density(rho: ScalarField, n: int, seed) -> Ensemble:
    """N i.i.d. draws from the (clamped, renormalized) grid density."""
    grid = rho.grid
    vals = np.maximum(rho.values, 0.0)
    if grid.integrate(vals) <= 0:
        raise ZeroMass("density has nonpositive total mass after clamping")
    rng = np.random.default_rng(seed)
    if grid.dim == 1:
        t = _sample_linear_rows(np.broadcast_to(vals, (n, grid.J)), rng.random(n), grid.h)
        pos = (-grid.L + t * grid.h)[:, None]
    else:
        marginal = vals.sum(axis=1) * grid.h
        tx = _sample_linear_rows(np.broadcast_to(marginal, (n, grid.J)), rng.random(n), grid.h)
        ix = np.minimum(tx.astype(np.int64), grid.J - 1)
        fx = tx - ix
        rows = (1.0 - fx)[:, None] * vals[ix] + fx[:, None] * vals[(ix + 1) % grid.J]
        ty = _sample_linear_rows(np.maximum(rows, 0.0), rng.random(n), grid.h)
        pos = np.stack([-grid.L + tx * grid.h, -grid.L + ty * grid.h], axis=1)
    seed_val = seed if isinstance(seed, (int, np.integer)) else -1
    return Ensemble(pos, grid.L, int(seed_val))


def _interp(field_values: np.ndarray, pos: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.dim == 1:
        return _kernels.interp_1d(field_values, pos[:, 0], grid.L, grid.h)
    return _kernels.interp_2d(field_values, pos, grid.L, grid.h)


def _deposit(pos: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.dim == 1:
        return _kernels.deposit_1d(pos[:, 0], grid.L, grid.h, grid.J)
    return _kernels.deposit_2d(pos, grid.L, grid.h, grid.J)


def em_step(ens: Ensemble, drift_field, diffusion: float, dt: float, rng) -> Ensemble:
    """One Euler-Maruyama step; drift interpolated linearly at positions."""
    grid = drift_field.grid
    if ens.dim != grid.dim:
        raise ConfigError("ensemble and drift field dimensions differ")
    drift = np.stack(
        [_interp(c.values, ens.positions, grid) for c in drift_field.components], axis=1
    )
    noise = rng.standard_normal(ens.positions.shape)
    pos = ens.positions + drift * dt + np.sqrt(2.0 * diffusion * dt) * noise
    return Ensemble(wrap_positions(pos, ens.half_width), ens.half_width, ens.seed, ens.time + dt)


def empirical_density(ens: Ensemble, kde: KdeConfig, grid: Grid) -> ScalarField:
    """Mollified particle histogram with exactly the configured mass."""
    if kde.bandwidth < grid.h:
        raise ConfigError(f"bandwidth {kde.bandwidth} must be >= grid spacing {grid.h}")
    raw = _deposit(ens.positions, grid) / (ens.n * grid.cell_volume)
    c = to_coefficients(raw, grid) * np.exp(-0.5 * grid.k2 * kde.bandwidth**2)
    return ScalarField.from_coefficients(grid, kde.target_mass * c)


@dataclass
class Mfg1SdeSolution:
    phi: FieldTrajectory
    alpha: FieldTrajectory
    empirical: FieldTrajectory
    ensemble: Ensemble
    cost: CostBreakdown
    diagnostics: dict = field(default_factory=dict)


def solve_mfg1_sde(
    q_traj: FieldTrajectory,
    rho0: ScalarField,
    cfg: CostConfig,
    n_particles: int,
    seed: int,
    params: ModelParams,
    window: TimeWindow,
    kde: KdeConfig | None = None,
    stride: int = 1,
) -> Mfg1SdeSolution:
    """Tracer control with the forward phase replaced by an ensemble push.

    The backward sweep is identical to the PDE solver; the returned cost is
    the Monte Carlo estimate (particle averages of the running and terminal
    integrands).
    """
    grid = params.grid
    kde = kde or KdeConfig(bandwidth=2 * grid.h, target_mass=rho0.mass())
    if cfg is None:
        F_traj, phi_T = None, ScalarField(grid, np.zeros(grid.shape))
    else:
        F_traj, phi_T = cost_source_trajectories(q_traj, cfg)
    phi = solve_backward_hje(phi_T, q_traj, F_traj, None, params, window, stride)
    alpha = trajectory_gradient(phi)

    u_frames = trajectory_velocity(q_traj)
    u_at = _TimeInterp(u_frames.data, u_frames.window.t_start, u_frames.frame_dt)
    a_at = _TimeInterp(alpha.data, alpha.window.t_start, alpha.frame_dt)
    zero_F = np.zeros(grid.shape)
    F_at = (
        _TimeInterp(F_traj.data, F_traj.window.t_start, F_traj.frame_dt)
        if F_traj is not None
        else None
    )

    ens = sample_from_density(rho0, n_particles, seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    n_steps = window.n_steps
    dt = window.dt
    frames = np.empty((n_steps // stride + 1, *grid.shape))
    frames[0] = empirical_density(ens, kde, grid).values
    run_control = np.empty(n_steps + 1)
    run_state = np.empty(n_steps + 1)
    sqrt_noise = np.sqrt(2.0 * params.nu * dt)

    for m in range(n_steps + 1):
        s = window.t_start + m * dt
        a_vals = a_at.at(s)
        a_p = np.stack([_interp(a_vals[d], ens.positions, grid) for d in range(grid.dim)], axis=1)
        run_control[m] = 0.5 * float(np.mean(np.sum(a_p**2, axis=1)))
        F_vals = F_at.at(s) if F_at is not None else zero_F
        run_state[m] = float(np.mean(_interp(F_vals, ens.positions, grid)))
        if m == n_steps:
            break
        u_vals = u_at.at(s)
        drift = a_p + np.stack(
            [_interp(u_vals[d], ens.positions, grid) for d in range(grid.dim)], axis=1
        )
        pos = ens.positions + drift * dt + sqrt_noise * rng.standard_normal(ens.positions.shape)
        if not np.isfinite(pos).all():
            raise NonFiniteState(f"ensemble push produced non-finite positions at step {m + 1}")
        ens = Ensemble(wrap_positions(pos, grid.L), grid.L, ens.seed, s + dt)
        if (m + 1) % stride == 0:
            frames[(m + 1) // stride] = empirical_density(ens, kde, grid).values

    # particle averages estimate expectations under rho/mass; the cost
    # functional is linear in rho, so scale by the transported mass
    mass = rho0.mass()
    wts = np.ones(n_steps + 1)
    wts[0] = wts[-1] = 0.5
    if cfg is None:
        terminal = 0.0
    else:
        G_vals = terminal_derivative(q_traj.data[-1], cfg)
        terminal = mass * float(np.mean(_interp(G_vals, ens.positions, grid)))
    cost = CostBreakdown(
        terminal=terminal,
        running_state=mass * float(np.dot(wts, run_state)) * dt,
        running_control=mass * float(np.dot(wts, run_control)) * dt,
    )
    empirical = FieldTrajectory(grid, window, frames, stride)
    return Mfg1SdeSolution(
        phi=phi,
        alpha=alpha,
        empirical=empirical,
        ensemble=ens,
        cost=cost,
        diagnostics={"n_particles": n_particles, "seed": seed, "bandwidth": kde.bandwidth},
    )


class EnsembleForward:
    """Forward engine for the finite-player flow control.

    Every push integrates the interacting-particle system: particles are
    advected by the velocity induced by their own mollified empirical
    density (normalized to the initial mass each refresh) plus the supplied
    control, starting from one common initial sample. Brownian increments
    come from per-push child streams of the master seed, so runs are
    reproducible and pushes are independent of each other's draws.
    """

    def __init__(
        self,
        q_init: ScalarField,
        n_particles: int,
        seed: int,
        kde: KdeConfig,
        params: ModelParams,
        window: TimeWindow,
        stride: int = 1,
        refresh_stride: int = 1,
    ):
        self.grid = params.grid
        self.params = params
        self.window = window
        self.stride = stride
        self.refresh = max(int(refresh_stride), 1)
        self.kde = kde
        self.seed_seq = np.random.SeedSequence(seed)
        self.ens0 = sample_from_density(q_init, n_particles, self.seed_seq.spawn(1)[0])
        self.final_ensemble: Ensemble | None = None
        self._smooth = np.exp(-0.5 * self.grid.k2 * kde.bandwidth**2)
        self._push_count = 0

    def _run(self, alpha_traj: FieldTrajectory | None, rng, frozen_u=None) -> FieldTrajectory:
        """Ensemble push; self-advected unless a frozen velocity is supplied."""
        grid, window = self.grid, self.window
        n_steps, dt = window.n_steps, window.dt
        a_at = None
        if alpha_traj is not None:
            a_at = _TimeInterp(alpha_traj.data, alpha_traj.window.t_start, alpha_traj.frame_dt)
        pos = self.ens0.positions.copy()
        n = pos.shape[0]
        frames = np.empty((n_steps // self.stride + 1, *grid.shape))
        sqrt_noise = np.sqrt(2.0 * self.params.nu * dt)
        u_vals = None
        smooth_c = None
        for m in range(n_steps + 1):
            if m % self.refresh == 0 or smooth_c is None:
                raw = _deposit(pos, grid) / (n * grid.cell_volume)
                smooth_c = (
                    to_coefficients(raw, grid) * self._smooth * self.kde.target_mass
                )
                if frozen_u is None:
                    u_vals = [to_values(mult * smooth_c, grid) for mult in grid.velocity_mult]
            if m % self.stride == 0:
                frames[m // self.stride] = to_values(smooth_c, grid)
            if m == n_steps:
                break
            s = window.t_start + m * dt
            if frozen_u is not None:
                uf = frozen_u.at(s)
                u_vals = [uf[d] for d in range(grid.dim)]
            drift = np.stack([_interp(u_vals[d], pos, grid) for d in range(grid.dim)], axis=1)
            if a_at is not None:
                a_vals = a_at.at(s)
                drift += np.stack(
                    [_interp(a_vals[d], pos, grid) for d in range(grid.dim)], axis=1
                )
            pos = pos + drift * dt + sqrt_noise * rng.standard_normal(pos.shape)
            if not np.isfinite(pos).all():
                raise NonFiniteState(f"ensemble push produced non-finite positions at step {m + 1}")
            pos = wrap_positions(pos, grid.L)
        self.final_ensemble = Ensemble(pos, grid.L, self.ens0.seed, window.t_end)
        return FieldTrajectory(grid, window, frames, self.stride)

    def _next_rng(self):
        self._push_count += 1
        return np.random.default_rng(
            np.random.SeedSequence(
                entropy=self.seed_seq.entropy, spawn_key=(1000 + self._push_count,)
            )
        )

    def initial(self, q_init: ScalarField, alpha0: FieldTrajectory) -> FieldTrajectory:
        return self._run(alpha0, self._next_rng())

    def tracer_forward(
        self, q_init: ScalarField, frozen: FieldTrajectory, alpha0: FieldTrajectory
    ) -> FieldTrajectory:
        u = trajectory_velocity(frozen)
        frozen_u = _TimeInterp(u.data, u.window.t_start, u.frame_dt)
        return self._run(alpha0, self._next_rng(), frozen_u=frozen_u)

    def push(self, q_traj: FieldTrajectory, alpha_t: FieldTrajectory, tag: int) -> FieldTrajectory:
        return self._run(alpha_t, self._next_rng())


def solve_mfg2_sde(
    q_init: ScalarField,
    cfg: CostConfig,
    iter_cfg: IterationConfig,
    n_particles: int,
    seed: int,
    params: ModelParams,
    window: TimeWindow,
    kde: KdeConfig | None = None,
    stride: int = 1,
    refresh_stride: int = 1,
) -> Mfg2Solution:
    """Finite-player flow control: the outer iteration of the PDE solver
    with every forward solve replaced by an interacting-ensemble push."""
    kde = kde or KdeConfig(bandwidth=2 * params.grid.h, target_mass=q_init.mass())
    engine = EnsembleForward(
        q_init, n_particles, seed, kde, params, window, stride, refresh_stride
    )
    sol = iterate_mfg2(q_init, cfg, iter_cfg, params, window, stride, engine=engine)
    sol.diagnostics["n_particles"] = n_particles
    sol.diagnostics["seed"] = seed
    sol.diagnostics["bandwidth"] = kde.bandwidth
    return sol
