"""Modified viscous Burgers (MVB) transport model.

Right-hand side of the controlled flow equation

    dq/ds + div[(u + alpha) q] = nu * Lap q,      u = Tq,

its control forcing f = -div(alpha q), and the sech^2 reference profiles

    Q_{sigma,a}(x) = 2 nu sigma^2 sech^2(sigma * dist(x, a))

used as initial and target states (dist is the periodic distance; in 2D the
periodic Euclidean distance, giving a radially symmetric bump).

Note on steadiness: Q_{sigma,a} solves div(v Q) = nu Lap Q exactly for the
analytic front velocity v = -2 nu sigma tanh(sigma (x-a)), but v differs
from T(Q) by the sawtooth mean(Q)*(x-a) because T drops the zero mode while
Q carries mass. The self-consistent residual mvb_rhs(Q, 0) is therefore
O(mean(Q)) at every resolution; `steady_residual_report` quantifies both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    dealias_c,
    div_c,
    laplacian_c,
    to_coefficients,
    to_values,
    velocity_c,
)


@dataclass(frozen=True)
class SteadyStateParams:
    """Parameters of a sech^2 reference profile: sharpness, center, diffusivity."""

    sigma: float
    center: float | tuple[float, float]
    nu: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.nu <= 0:
            raise ValueError("nu must be positive")


@dataclass(frozen=True)
class ModelParams:
    """MVB model parameters; nu doubles as the diffusion constant D.

    nu = 0 is allowed (inviscid transport, noiseless particles); the sech^2
    reference profiles themselves always need nu > 0.
    """

    nu: float
    grid: Grid

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")


def periodic_distance(grid: Grid, center) -> np.ndarray:
    """Distance to ``center`` minimized over periodic images (Euclidean in 2D)."""
    period = 2.0 * grid.L
    if grid.dim == 1:
        a = float(center) if np.ndim(center) == 0 else float(np.asarray(center)[0])
        d = np.mod(grid.x - a + grid.L, period) - grid.L
        return np.abs(d)
    ax, ay = (float(center), float(center)) if np.ndim(center) == 0 else map(float, center)
    dx = np.mod(grid.x[0] - ax + grid.L, period) - grid.L
    dy = np.mod(grid.x[1] - ay + grid.L, period) - grid.L
    return np.hypot(dx, dy)


def steady_profile(p: SteadyStateParams, grid: Grid) -> ScalarField:
    """Q_{sigma,a} = 2 nu sigma^2 sech^2(sigma * dist(x, a)); strictly positive."""
    if np.max(np.abs(np.atleast_1d(p.center))) > grid.L:
        raise ValueError("profile center must lie within [-L, L]")
    d = periodic_distance(grid, p.center)
    return ScalarField(grid, 2.0 * p.nu * p.sigma**2 / np.cosh(p.sigma * d) ** 2)


def analytic_front_velocity(p: SteadyStateParams, grid: Grid) -> ScalarField:
    """Infinite-domain front velocity v = -2 nu sigma tanh(sigma (x-a)), 1D only.

    Not periodic (it jumps by ~4 nu sigma at the domain seam); used as a
    steadiness diagnostic, never inside the dynamics.
    """
    if grid.dim != 1:
        raise ValueError("analytic front velocity is defined in 1D only")
    a = float(p.center) if np.ndim(p.center) == 0 else float(np.asarray(p.center)[0])
    z = np.mod(grid.x - a + grid.L, 2.0 * grid.L) - grid.L
    return ScalarField(grid, -2.0 * p.nu * p.sigma * np.tanh(p.sigma * z))


def _forcing_c(alpha_values, q_values: np.ndarray, grid: Grid) -> np.ndarray:
    """-div(alpha q) in spectral space, product dealiased."""
    flux = tuple(to_coefficients(a * q_values, grid) for a in alpha_values)
    return -dealias_c(div_c(flux, grid), grid)


def control_forcing(alpha: VectorField, q: ScalarField) -> ScalarField:
    """Control forcing f = -div(alpha q); spatial mean is exactly zero."""
    if alpha.grid != q.grid:
        raise ValueError("alpha and q must share one grid")
    c = _forcing_c(tuple(a.values for a in alpha.components), q.values, q.grid)
    return ScalarField.from_coefficients(q.grid, c)


def mvb_rhs(q: ScalarField, alpha: VectorField | None, p: ModelParams) -> ScalarField:
    """-div[(Tq + alpha) q] + nu Lap q, quadratic terms dealiased."""
    grid = p.grid
    if q.grid != grid:
        raise ValueError("q lives on a different grid than the model")
    qc = q.coefficients
    u = tuple(to_values(c, grid) for c in velocity_c(qc, grid))
    if alpha is not None:
        if alpha.grid != grid:
            raise ValueError("alpha lives on a different grid than the model")
        u = tuple(ui + a.values for ui, a in zip(u, alpha.components))
    c = _forcing_c(u, q.values, grid) + p.nu * laplacian_c(qc, grid)
    return ScalarField.from_coefficients(grid, c)


def steady_residual_report(p: SteadyStateParams, grid: Grid) -> dict:
    """Sup-norm steadiness residuals of Q_{sigma,a} at this resolution.

    ``residual``           -div(T(Q) Q) + nu Lap Q   (self-consistent velocity)
    ``residual_analytic``  same with the analytic front velocity (1D only)
    ``defect_model_gap``   | residual - mean(Q) * d/dx((x-a) Q) | (1D only)
    """
    Q = steady_profile(p, grid)
    model = ModelParams(nu=p.nu, grid=grid)
    r = mvb_rhs(Q, None, model)
    report = {
        "residual": float(np.abs(r.values).max()),
        "mean_q": Q.mean(),
    }
    if grid.dim == 1:
        v = analytic_front_velocity(p, grid)
        flux_c = to_coefficients(v.values * Q.values, grid)
        r_analytic = to_values(-div_c((flux_c,), grid) + p.nu * laplacian_c(Q.coefficients, grid), grid)
        report["residual_analytic"] = float(np.abs(r_analytic).max())
        a = float(p.center) if np.ndim(p.center) == 0 else float(np.asarray(p.center)[0])
        saw = np.mod(grid.x - a + grid.L, 2.0 * grid.L) - grid.L
        defect_c = -Q.mean() * div_c((to_coefficients(saw * Q.values, grid),), grid)
        report["defect_model_gap"] = float(np.abs(r.values - to_values(defect_c, grid)).max())
    return report
