"""Periodic grids, Fourier transforms, and spectral operators.

Fields live on uniform grids over [-L, L)^d (d = 1 or 2) and carry two
consistent views: real point values and Fourier-series coefficients in the
convention

    q(x) = sum_k  qhat_k exp(i k.x),        k = (pi/L) * n,   n = -J/2 .. J/2-1,

so a constant field c has qhat_0 = c and cos(k1 x) has qhat_{+-k1} = 1/2.
The Nyquist column (n = -J/2) is zeroed in every odd-order operator and in
the vorticity-to-velocity map so that outputs stay real and reflection
symmetric; dealiasing follows the 2/3 rule per axis.

The vorticity-to-velocity operator and its discrete adjoint are

    1D:  uhat_k      = (i / k) qhat_k                  (k != 0)
    2D:  uhat_k      = i |k|^-2 (k_y, -k_x) qhat_k     (|k| != 0)
         (T* w)hat_k = conj(multiplier) . what_k

with T* the exact adjoint of the truncated T under the L2 inner product,
which makes <Tq, w> = <q, T*w> hold to roundoff.

Array-level helpers (``to_coefficients``/``to_values`` and the ``*_c``
functions) operate on plain ndarrays whose trailing axes are the spatial
axes, so trajectories of shape (frames, *spatial) transform in one call.
"""

from __future__ import annotations

import numpy as np


class Grid:
    """Uniform periodic grid on [-L, L)^dim with J points per axis.

    Nodes are x_j = -L + j*h, h = 2L/J (right endpoint excluded). All
    spectral multiplier arrays are precomputed once and broadcast against
    trailing spatial axes.
    """

    def __init__(self, dim: int, half_width: float, points: int):
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        points = int(points)
        if points < 8 or points % 2 != 0:
            raise ValueError(f"J must be even and >= 8, got {points}")
        self.dim = dim
        self.L = float(half_width)
        self.J = points
        self.h = 2.0 * self.L / self.J
        self.shape = (self.J,) * dim
        self.size = self.J**dim
        self.cell_volume = self.h**dim

        axis = -self.L + self.h * np.arange(self.J)
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.J, d=self.h)  # = pi*n/L
        n1 = np.rint(np.fft.fftfreq(self.J) * self.J).astype(int)
        kz = k1.copy()
        kz[self.J // 2] = 0.0  # Nyquist dropped from odd-order operators

        if dim == 1:
            self.axes = (axis,)
            self.x = axis
            k_bcast = (kz,)
            n_bcast = (np.abs(n1),)
            k2_full = k1**2
        else:
            self.axes = (axis, axis)
            self.x = np.meshgrid(axis, axis, indexing="ij")
            k_bcast = (kz[:, None], kz[None, :])
            n_bcast = (np.abs(n1)[:, None], np.abs(n1)[None, :])
            k2_full = k1[:, None] ** 2 + k1[None, :] ** 2

        # ik multipliers for gradient/divergence; -|k|^2 for the Laplacian,
        # both built from the Nyquist-zeroed axes so div(grad) == laplacian.
        self.ik = tuple(1j * k for k in k_bcast)
        self.laplacian_mult = -sum(k**2 for k in k_bcast)
        # full |k|^2 (Nyquist included) for the implicit diffusion solve
        self.k2 = k2_full

        nyq_free = np.ones(self.shape, dtype=bool)
        for n in n_bcast:
            nyq_free &= np.broadcast_to(n, self.shape) != self.J // 2
        k2z = sum(np.broadcast_to(k, self.shape) ** 2 for k in k_bcast)
        nonzero = k2z > 0
        inv_k2 = np.where(nonzero, 1.0 / np.where(nonzero, k2z, 1.0), 0.0)
        if dim == 1:
            self.velocity_mult = (1j * np.broadcast_to(k_bcast[0], self.shape) * inv_k2 * nyq_free,)
        else:
            kx = np.broadcast_to(k_bcast[0], self.shape)
            ky = np.broadcast_to(k_bcast[1], self.shape)
            self.velocity_mult = (
                1j * ky * inv_k2 * nyq_free,
                -1j * kx * inv_k2 * nyq_free,
            )

        cutoff = self.J / 3.0
        keep = np.ones(self.shape, dtype=bool)
        for n in n_bcast:
            keep &= np.broadcast_to(n, self.shape) <= cutoff
        self.dealias_mask = keep

        # nodes start at -L, so the series coefficients against exp(i k x)
        # carry a (-1)^n phase per axis relative to the raw DFT
        ph1 = np.where(n1 % 2 == 0, 1.0, -1.0)
        self.phase = ph1 if dim == 1 else np.outer(ph1, ph1)

    def node_coordinates(self):
        """Coordinate arrays over grid nodes (1 array in 1D, 2 meshes in 2D)."""
        return (self.x,) if self.dim == 1 else tuple(self.x)

    def fft_indices(self):
        """Integer mode indices n (fft order) per axis."""
        return np.rint(np.fft.fftfreq(self.J) * self.J).astype(int)

    def integrate(self, values: np.ndarray) -> float:
        """Exact grid quadrature: h^d * sum over nodes."""
        return float(np.sum(values)) * self.cell_volume

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2 inner product <a, b> = integral of a*b."""
        return float(np.sum(a * b)) * self.cell_volume

    def norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(values, values), 0.0)))

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.dim == other.dim
            and self.J == other.J
            and self.L == other.L
        )

    def __hash__(self):
        return hash((self.dim, self.J, self.L))

    def __repr__(self):
        return f"Grid(dim={self.dim}, L={self.L}, J={self.J})"


# ---------------------------------------------------------------------------
# array-level transforms (trailing axes = spatial axes; leading axes batched)
# ---------------------------------------------------------------------------

def _spatial_axes(grid: Grid):
    return tuple(range(-grid.dim, 0))


def to_coefficients(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Forward transform: values -> Fourier-series coefficients."""
    return np.fft.fftn(values, axes=_spatial_axes(grid)) * (grid.phase / grid.size)


def to_values(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse transform: coefficients -> real point values."""
    return np.real(np.fft.ifftn(coeffs * (grid.phase * grid.size), axes=_spatial_axes(grid)))


def grad_c(coeffs: np.ndarray, grid: Grid):
    """Gradient in spectral space: tuple of d coefficient arrays."""
    return tuple(ik * coeffs for ik in grid.ik)


def div_c(components, grid: Grid) -> np.ndarray:
    """Divergence of d spectral component arrays."""
    out = grid.ik[0] * components[0]
    for ik, c in zip(grid.ik[1:], components[1:]):
        out = out + ik * c
    return out


def laplacian_c(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.laplacian_mult * coeffs


def velocity_c(coeffs: np.ndarray, grid: Grid):
    """Vorticity -> velocity, spectral: tuple of d coefficient arrays."""
    return tuple(m * coeffs for m in grid.velocity_mult)


def adjoint_velocity_c(components, grid: Grid) -> np.ndarray:
    """Discrete adjoint of the vorticity->velocity map on spectral components."""
    out = np.conj(grid.velocity_mult[0]) * components[0]
    for m, c in zip(grid.velocity_mult[1:], components[1:]):
        out = out + np.conj(m) * c
    return out


def dealias_c(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """2/3-rule truncation: zero coefficients with |index| > J/3 per axis."""
    return coeffs * grid.dealias_mask


# ---------------------------------------------------------------------------
# field objects
# ---------------------------------------------------------------------------

class ScalarField:
    """Real scalar field on a periodic grid with a cached spectral view."""

    __slots__ = ("grid", "values", "_coeffs")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self._coeffs = None

    @classmethod
    def from_coefficients(cls, grid: Grid, coeffs: np.ndarray) -> "ScalarField":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != grid.shape:
            raise ValueError(f"coeffs shape {coeffs.shape} != grid shape {grid.shape}")
        field = cls(grid, to_values(coeffs, grid))
        field._coeffs = coeffs
        return field

    @property
    def coefficients(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = to_coefficients(self.values, self.grid)
        return self._coeffs

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def mean(self) -> float:
        return float(np.mean(self.values))

    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _raw(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _raw(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _raw(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self):
        return f"ScalarField({self.grid!r}, max|q|={np.abs(self.values).max():.3g})"


def _raw(x):
    return x.values if isinstance(x, ScalarField) else x


class VectorField:
    """d-component vector field; all components share one grid."""

    __slots__ = ("grid", "components")

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ValueError("VectorField needs at least one component")
        grid = components[0].grid
        for c in components[1:]:
            if c.grid != grid:
                raise ValueError("components must share one grid")
        if len(components) != grid.dim:
            raise ValueError(f"expected {grid.dim} components, got {len(components)}")
        self.grid = grid
        self.components = components

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(tuple(ScalarField(grid, np.zeros(grid.shape)) for _ in range(grid.dim)))

    def stack(self) -> np.ndarray:
        """Components stacked along a leading axis, shape (d, *spatial)."""
        return np.stack([c.values for c in self.components])

    def max_speed(self) -> float:
        speed2 = sum(c.values**2 for c in self.components)
        return float(np.sqrt(speed2.max()))

    def __repr__(self):
        return f"VectorField(dim={self.grid.dim}, max|u|={self.max_speed():.3g})"


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------

def transform(field: ScalarField, direction: str = "forward") -> ScalarField:
    """Populate the other representation of a field.

    ``forward`` returns a field whose spectral view is materialized from the
    values; ``inverse`` rebuilds values from the spectral view. Round trips
    reproduce the input to ~1e-15 relative.
    """
    if direction == "forward":
        out = ScalarField(field.grid, field.values)
        out._coeffs = to_coefficients(field.values, field.grid)
        return out
    if direction == "inverse":
        return ScalarField.from_coefficients(field.grid, field.coefficients)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def gradient(field: ScalarField) -> VectorField:
    comps = grad_c(field.coefficients, field.grid)
    return VectorField(tuple(ScalarField.from_coefficients(field.grid, c) for c in comps))


def divergence(vec: VectorField) -> ScalarField:
    c = div_c(tuple(comp.coefficients for comp in vec.components), vec.grid)
    return ScalarField.from_coefficients(vec.grid, c)


def laplacian(field: ScalarField) -> ScalarField:
    return ScalarField.from_coefficients(field.grid, laplacian_c(field.coefficients, field.grid))


def apply_derivative(field=None, kind: str = "grad", input_vector: VectorField | None = None):
    """Spectral differential operators: ``grad``, ``div``, or ``laplacian``.

    ``div`` consumes ``input_vector``; the other kinds consume ``field``.
    """
    if kind == "grad":
        return gradient(field)
    if kind == "laplacian":
        return laplacian(field)
    if kind == "div":
        if input_vector is None:
            raise ValueError("kind='div' requires input_vector")
        return divergence(input_vector)
    raise ValueError(f"unknown derivative kind {kind!r}")


def velocity_from_vorticity(q: ScalarField) -> VectorField:
    """Incompressible transport velocity u = Tq (zero mode excluded)."""
    comps = velocity_c(q.coefficients, q.grid)
    return VectorField(tuple(ScalarField.from_coefficients(q.grid, c) for c in comps))


def adjoint_velocity(w: VectorField) -> ScalarField:
    """T*w, the exact discrete adjoint of velocity_from_vorticity."""
    c = adjoint_velocity_c(tuple(comp.coefficients for comp in w.components), w.grid)
    return ScalarField.from_coefficients(w.grid, c)


def dealias(field: ScalarField) -> ScalarField:
    return ScalarField.from_coefficients(field.grid, dealias_c(field.coefficients, field.grid))
