"""Coupled vorticity control via push-forward iteration with interpolation.

One sweep of the modified decoupled system defines the push-forward map
P(q, alpha) = (q~, alpha~):

    backward:  d(phi~)/ds + |grad phi~|^2/2 + grad(phi~).Tq + D Lap phi~
                   = F(x, q_s) - T*.(q_s alpha_s),      phi~_T = -G(x, q_T)
    control:   alpha~_s = grad phi~_s
    forward:   d(q~)/ds + div[(T q_s + alpha~_s) q~] = D Lap q~,  q~_t = q_t

whose fixed point solves the coupled system. Each outer iteration replaces
the raw update by the convex interpolation

    q^mu = mu q + (1-mu) q~
    alpha^mu = [mu alpha q + (1-mu) alpha~ q~] / [mu q + (1-mu) q~]
               + (1-mu) (Tq - Tq~)

(the unique control keeping q^mu on the continuity-equation manifold) with
mu chosen by a line search minimizing the total cost. mu = 1 reproduces the
current iterate exactly, so the improvement g(1) = 0 and the loss history
is non-increasing by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .costs import CostBreakdown, CostConfig, total_cost_mfg2
from .errors import ConfigError, DegenerateDensity
from .flow import ModelParams
from .mfg1 import cost_source_trajectories
from .spectral import ScalarField, adjoint_velocity_c, to_coefficients, to_values
from .timestep import (
    FieldTrajectory,
    TimeWindow,
    solve_backward_hje,
    solve_forward_continuity,
    trajectory_gradient,
    trajectory_velocity,
)


@dataclass
class IterationConfig:
    """Outer-iteration controls for the coupled solver."""

    n_max: int = 30
    eps: float = 1e-3
    mu_grid: int = 20
    initializer: str = "tracer-control"
    fixed_mu: float | None = None
    degenerate_floor: float | None = None

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.mu_grid < 2:
            raise ConfigError("mu_grid must be >= 2")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.initializer not in ("tracer-control", "zero-control"):
            raise ConfigError(f"unknown initializer {self.initializer!r}")
        if self.fixed_mu is not None and not 0.0 <= self.fixed_mu <= 1.0:
            raise ConfigError("fixed_mu must lie in [0, 1]")


@dataclass
class Mfg2Solution:
    q: FieldTrajectory
    phi: FieldTrajectory
    alpha: FieldTrajectory
    cost: CostBreakdown
    iterations: int
    loss_history: list[float]
    mu_history: list[float]
    fixed_point_residual: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def trajectory_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Time-averaged relative L2 distance between trajectory arrays."""
    w = np.ones(a.shape[0])
    w[0] = w[-1] = 0.5
    axes = tuple(range(1, a.ndim))
    num = float(np.dot(w, np.sum((a - b) ** 2, axis=axes)))
    den = float(np.dot(w, np.sum(b**2, axis=axes)))
    return float(np.sqrt(num / max(den, 1e-300)))


def _adjoint_source(q_traj: FieldTrajectory, alpha_traj: FieldTrajectory) -> FieldTrajectory:
    """-T*.(q_s alpha_s) per stored frame, batched."""
    grid = q_traj.grid
    prods = [
        to_coefficients(q_traj.data * alpha_traj.data[:, d], grid) for d in range(grid.dim)
    ]
    vals = to_values(adjoint_velocity_c(prods, grid), grid)
    return FieldTrajectory(grid, q_traj.window, -vals, q_traj.stride)


def backward_half(
    q_traj: FieldTrajectory,
    alpha_traj: FieldTrajectory,
    cfg: CostConfig,
    params: ModelParams,
    window: TimeWindow,
):
    """Backward sweep of the push-forward map; returns (phi~, alpha~)."""
    F_traj, phi_T = cost_source_trajectories(q_traj, cfg)
    extra = _adjoint_source(q_traj, alpha_traj)
    phi_t = solve_backward_hje(phi_T, q_traj, F_traj, extra, params, window, q_traj.stride)
    return phi_t, trajectory_gradient(phi_t)


def push_forward(
    q_traj: FieldTrajectory,
    alpha_traj: FieldTrajectory,
    cfg: CostConfig,
    params: ModelParams,
    window: TimeWindow,
):
    """One sweep of the decoupled system; returns (q~, phi~, alpha~)."""
    phi_t, alpha_t = backward_half(q_traj, alpha_traj, cfg, params, window)
    q_t = solve_forward_continuity(
        q_traj.frame(0), q_traj, alpha_t, params, window, q_traj.stride
    )
    return q_t, phi_t, alpha_t


def interpolate_pair(
    q_n: FieldTrajectory,
    alpha_n: FieldTrajectory,
    q_t: FieldTrajectory,
    alpha_t: FieldTrajectory,
    mu: float,
    Tq_n: FieldTrajectory | None = None,
    Tq_t: FieldTrajectory | None = None,
    degenerate_floor: float | None = None,
):
    """Convex combination of two constraint-satisfying pairs at parameter mu.

    Raises DegenerateDensity when the combined density signals a genuine
    near-vacuum state: substantially negative nodes (beyond spectral-ringing
    scale), a non-finite control ratio, or -- when ``degenerate_floor`` is
    set -- any node below floor*max (the strict relative-floor criterion).
    Ringing-scale undershoots of transported densities are tolerated: the
    control ratio is a convex combination wherever both densities are
    positive, and it always enters costs and dynamics multiplied by the
    density itself.
    """
    if not 0.0 <= mu <= 1.0:
        raise ConfigError("mu must lie in [0, 1]")
    grid = q_n.grid
    if mu == 1.0:
        return (
            FieldTrajectory(grid, q_n.window, q_n.data, q_n.stride),
            FieldTrajectory(grid, q_n.window, alpha_n.data, alpha_n.stride, is_vector=True),
        )
    if Tq_n is None:
        Tq_n = trajectory_velocity(q_n)
    if Tq_t is None:
        Tq_t = trajectory_velocity(q_t)
    shift = Tq_n.data - Tq_t.data
    if mu == 0.0:
        return (
            FieldTrajectory(grid, q_n.window, q_t.data, q_t.stride),
            FieldTrajectory(grid, q_n.window, alpha_t.data + shift, q_t.stride, is_vector=True),
        )
    q_mu = mu * q_n.data + (1.0 - mu) * q_t.data
    dmin, dmax = float(q_mu.min()), float(q_mu.max())
    if degenerate_floor is not None:
        if dmin < degenerate_floor * dmax:
            raise DegenerateDensity(
                f"combined density at mu={mu:.4g} has min {dmin:.3e} below floor (max {dmax:.3e})"
            )
    elif dmin < -0.01 * max(abs(dmin), abs(dmax)):
        raise DegenerateDensity(
            f"combined density at mu={mu:.4g} is substantially negative: min {dmin:.3e} (max {dmax:.3e})"
        )
    num = mu * alpha_n.data * q_n.data[:, None] + (1.0 - mu) * alpha_t.data * q_t.data[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        a_mu = num / q_mu[:, None] + (1.0 - mu) * shift
    if not np.isfinite(a_mu).all():
        raise DegenerateDensity(f"control ratio at mu={mu:.4g} is non-finite at a vacuum node")
    return (
        FieldTrajectory(grid, q_n.window, q_mu, q_n.stride),
        FieldTrajectory(grid, q_n.window, a_mu, q_n.stride, is_vector=True),
    )


def evaluate_improvement(
    q_n: FieldTrajectory,
    alpha_n: FieldTrajectory,
    q_t: FieldTrajectory,
    alpha_t: FieldTrajectory,
    mu: float,
    cfg: CostConfig,
    base_cost: float | None = None,
    **kwargs,
) -> float:
    """g(mu) = I(q^mu, alpha^mu) - I(q, alpha); g(1) = 0 identically."""
    if base_cost is None:
        base_cost = total_cost_mfg2(q_n, alpha_n, cfg).total
    q_mu, a_mu = interpolate_pair(q_n, alpha_n, q_t, alpha_t, mu, **kwargs)
    return total_cost_mfg2(q_mu, a_mu, cfg).total - base_cost


class PdeForward:
    """Forward solves of the outer iteration done with the continuity PDE."""

    def __init__(self, params: ModelParams, window: TimeWindow, stride: int = 1):
        self.params = params
        self.window = window
        self.stride = stride

    def initial(self, q_init: ScalarField, alpha0: FieldTrajectory) -> FieldTrajectory:
        """Nonlinear (self-advected) controlled solve for the starting iterate."""
        return solve_forward_continuity(q_init, "self", alpha0, self.params, self.window, self.stride)

    def tracer_forward(
        self, q_init: ScalarField, frozen: FieldTrajectory, alpha0: FieldTrajectory
    ) -> FieldTrajectory:
        """Tracer density under the frozen advection (linear, positivity-preserving)."""
        return solve_forward_continuity(q_init, frozen, alpha0, self.params, self.window, self.stride)

    def push(self, q_traj: FieldTrajectory, alpha_t: FieldTrajectory, tag: int) -> FieldTrajectory:
        """Forward half of the push-forward map: advection frozen at the input."""
        return solve_forward_continuity(
            q_traj.frame(0), q_traj, alpha_t, self.params, self.window, self.stride
        )


def initial_pair(q_init, cfg, iter_cfg, params, window, stride, engine):
    """Starting iterate (q0, alpha0).

    tracer-control: the tracer problem against the frozen flow T(q_init)
    supplies both the control and the (positive, linearly transported)
    density; zero-control: the uncontrolled flow itself.
    """
    if iter_cfg.initializer == "tracer-control":
        frozen = FieldTrajectory.from_constant(q_init, window, stride)
        F_traj, phi_T = cost_source_trajectories(frozen, cfg)
        phi0 = solve_backward_hje(phi_T, frozen, F_traj, None, params, window, stride)
        alpha0 = trajectory_gradient(phi0)
        q0 = engine.tracer_forward(q_init, frozen, alpha0)
        return q0, alpha0
    n = window.n_steps // stride + 1
    shape = (n, params.grid.dim, *params.grid.shape)
    alpha0 = FieldTrajectory(params.grid, window, np.zeros(shape), stride, is_vector=True)
    return engine.initial(q_init, alpha0), alpha0


def iterate_mfg2(
    q_init: ScalarField,
    cfg: CostConfig,
    iter_cfg: IterationConfig,
    params: ModelParams,
    window: TimeWindow,
    stride: int = 1,
    compute_residual: bool = True,
    engine=None,
) -> Mfg2Solution:
    """Fixed-point iteration on the push-forward map with mu line search.

    Stops when both trajectory distances d(q_n, q_{n-1}) and
    d(alpha_n, alpha_{n-1}) fall below eps, or after n_max iterations
    (returned with converged=False). The stored phi is the backward solution
    of the final push-forward sweep. ``engine`` swaps the forward solver
    (default: the continuity PDE; the particle module supplies an ensemble
    engine for the finite-player variant).
    """
    grid = params.grid
    if q_init.grid != grid:
        raise ConfigError("q_init lives on a different grid than the model")
    if engine is None:
        engine = PdeForward(params, window, stride)

    q_n, alpha_n = initial_pair(q_init, cfg, iter_cfg, params, window, stride, engine)
    loss = total_cost_mfg2(q_n, alpha_n, cfg)
    loss_history = [loss.total]
    mu_history: list[float] = []
    records: list[dict] = []
    phi_last = None
    converged = False
    iterations = 0
    mass0 = grid.integrate(q_init.values)

    L = iter_cfg.mu_grid
    grid_mus = [i / L for i in range(L + 1)]

    for n in range(iter_cfg.n_max):
        phi_t, alpha_t = backward_half(q_n, alpha_n, cfg, params, window)
        q_t = engine.push(q_n, alpha_t, n)
        phi_last = phi_t
        Tq_n = trajectory_velocity(q_n)
        Tq_t = trajectory_velocity(q_t)

        candidates = grid_mus if iter_cfg.fixed_mu is None else [iter_cfg.fixed_mu]
        g_curve = []
        skipped = []
        best = None  # (cost_total, mu, q_mu, a_mu, breakdown)
        for mu in candidates:
            try:
                q_mu, a_mu = interpolate_pair(
                    q_n, alpha_n, q_t, alpha_t, mu,
                    Tq_n=Tq_n, Tq_t=Tq_t,
                    degenerate_floor=iter_cfg.degenerate_floor,
                )
            except DegenerateDensity:
                skipped.append(mu)
                continue
            breakdown = total_cost_mfg2(q_mu, a_mu, cfg)
            g_curve.append((mu, breakdown.total - loss.total))
            if best is None or breakdown.total <= best[0]:
                best = (breakdown.total, mu, q_mu, a_mu, breakdown)

        if best is None:
            # every candidate degenerated: no-op iteration at mu = 1
            warnings.warn("all interpolation candidates degenerate; keeping current iterate", RuntimeWarning)
            best = (loss.total, 1.0, q_n, alpha_n, loss)

        _, mu_star, q_next, alpha_next, loss_next = best
        d_q = trajectory_distance(q_next.data, q_n.data)
        d_alpha = trajectory_distance(alpha_next.data, alpha_n.data)
        d_push = trajectory_distance(q_t.data, q_n.data)

        quad_coeff = None
        if len(g_curve) >= 3:
            mus = np.array([m for m, _ in g_curve])
            gs = np.array([g for _, g in g_curve])
            quad_coeff = float(np.polyfit(mus, gs, 2)[0])

        records.append(
            {
                "n": n,
                "mu_star": mu_star,
                "terminal": loss_next.terminal,
                "running_state": loss_next.running_state,
                "running_control": loss_next.running_control,
                "total": loss_next.total,
                "d_q": d_q,
                "d_alpha": d_alpha,
                "d_push": d_push,
                "g_curve": g_curve,
                "g_quadratic_coeff": quad_coeff,
                "skipped_mus": skipped,
            }
        )
        q_n, alpha_n, loss = q_next, alpha_next, loss_next
        loss_history.append(loss.total)
        mu_history.append(mu_star)
        iterations = n + 1
        if d_q <= iter_cfg.eps and d_alpha <= iter_cfg.eps:
            converged = True
            break

    fixed_point_residual = float("nan")
    if compute_residual:
        phi_t, alpha_t = backward_half(q_n, alpha_n, cfg, params, window)
        q_t = engine.push(q_n, alpha_t, iter_cfg.n_max)
        phi_last = phi_t
        w = np.ones(q_n.n_frames)
        w[0] = w[-1] = 0.5
        num = float(np.dot(w, np.sum((q_t.data - q_n.data) ** 2, axis=tuple(range(1, q_n.data.ndim)))))
        num += float(np.dot(w, np.sum((alpha_t.data - alpha_n.data) ** 2, axis=tuple(range(1, alpha_n.data.ndim)))))
        den = float(np.dot(w, np.sum(q_n.data**2, axis=tuple(range(1, q_n.data.ndim)))))
        den += float(np.dot(w, np.sum(alpha_n.data**2, axis=tuple(range(1, alpha_n.data.ndim)))))
        fixed_point_residual = float(np.sqrt(num / max(den, 1e-300)))

    masses = q_n.data.sum(axis=tuple(range(-grid.dim, 0))) * grid.cell_volume
    diagnostics = {
        "iterations": records,
        "mass_drift": float(np.abs(masses - mass0).max() / abs(mass0)),
        "monotone": bool(
            all(
                loss_history[i + 1] <= loss_history[i] + 1e-12 * abs(loss_history[i])
                for i in range(len(loss_history) - 1)
            )
        ),
    }
    if not converged:
        warnings.warn(
            f"flow-control iteration hit n_max={iter_cfg.n_max} before reaching eps={iter_cfg.eps}",
            RuntimeWarning,
        )
    return Mfg2Solution(
        q=q_n,
        phi=phi_last,
        alpha=alpha_n,
        cost=loss,
        iterations=iterations,
        loss_history=loss_history,
        mu_history=mu_history,
        fixed_point_residual=fixed_point_residual,
        converged=converged,
        diagnostics=diagnostics,
    )
