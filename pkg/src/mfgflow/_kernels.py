"""Hot particle kernels: grid interpolation and cloud-in-cell deposits.

Numba-compiled when available; set MFGFLOW_NUMBA=0 to force the pure-numpy
fallback path (same results up to floating-point summation order in the
deposits). The spectral/PDE code is FFT-bound and stays numpy either way.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("MFGFLOW_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _env not in ("0", "false", "off", "no")
NUMBA_ACTIVE = False

if NUMBA_REQUESTED:
    try:
        from numba import njit, prange

        NUMBA_ACTIVE = True
    except ImportError:  # pragma: no cover
        NUMBA_ACTIVE = False

if not NUMBA_ACTIVE:
    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap(args[0]) if args and callable(args[0]) else wrap

    prange = range


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _cell_index(pos, L, h, J):
    g = (pos + L) / h
    i = np.floor(g).astype(np.int64)
    frac = g - i
    return i % J, frac


def interp_1d_numpy(field, pos, L, h):
    J = field.shape[0]
    i, frac = _cell_index(pos, L, h, J)
    return field[i] * (1.0 - frac) + field[(i + 1) % J] * frac


def interp_2d_numpy(field, pos, L, h):
    J = field.shape[0]
    ix, fx = _cell_index(pos[:, 0], L, h, J)
    iy, fy = _cell_index(pos[:, 1], L, h, J)
    jx, jy = (ix + 1) % J, (iy + 1) % J
    return (
        field[ix, iy] * (1 - fx) * (1 - fy)
        + field[jx, iy] * fx * (1 - fy)
        + field[ix, jy] * (1 - fx) * fy
        + field[jx, jy] * fx * fy
    )


def deposit_1d_numpy(pos, L, h, J):
    i, frac = _cell_index(pos, L, h, J)
    out = np.bincount(i, weights=1.0 - frac, minlength=J)
    out += np.bincount((i + 1) % J, weights=frac, minlength=J)
    return out


def deposit_2d_numpy(pos, L, h, J):
    ix, fx = _cell_index(pos[:, 0], L, h, J)
    iy, fy = _cell_index(pos[:, 1], L, h, J)
    jx, jy = (ix + 1) % J, (iy + 1) % J
    flat = np.zeros(J * J)
    for xi, yi, wgt in (
        (ix, iy, (1 - fx) * (1 - fy)),
        (jx, iy, fx * (1 - fy)),
        (ix, jy, (1 - fx) * fy),
        (jx, jy, fx * fy),
    ):
        flat += np.bincount(xi * J + yi, weights=wgt, minlength=J * J)
    return flat.reshape(J, J)


# ---------------------------------------------------------------------------
# numba kernels (compiled only when active)
# ---------------------------------------------------------------------------

if NUMBA_ACTIVE:

    @njit(cache=True, parallel=True)
    def _interp_1d_nb(field, pos, L, h):
        J = field.shape[0]
        out = np.empty(pos.shape[0])
        for n in prange(pos.shape[0]):
            g = (pos[n] + L) / h
            i = int(np.floor(g))
            frac = g - i
            i = i % J
            out[n] = field[i] * (1.0 - frac) + field[(i + 1) % J] * frac
        return out

    @njit(cache=True, parallel=True)
    def _interp_2d_nb(field, pos, L, h):
        J = field.shape[0]
        out = np.empty(pos.shape[0])
        for n in prange(pos.shape[0]):
            gx = (pos[n, 0] + L) / h
            gy = (pos[n, 1] + L) / h
            ix = int(np.floor(gx))
            iy = int(np.floor(gy))
            fx = gx - ix
            fy = gy - iy
            ix = ix % J
            iy = iy % J
            jx = (ix + 1) % J
            jy = (iy + 1) % J
            out[n] = (
                field[ix, iy] * (1 - fx) * (1 - fy)
                + field[jx, iy] * fx * (1 - fy)
                + field[ix, jy] * (1 - fx) * fy
                + field[jx, jy] * fx * fy
            )
        return out

    @njit(cache=True)
    def _deposit_1d_nb(pos, L, h, J):
        out = np.zeros(J)
        for n in range(pos.shape[0]):
            g = (pos[n] + L) / h
            i = int(np.floor(g))
            frac = g - i
            i = i % J
            out[i] += 1.0 - frac
            out[(i + 1) % J] += frac
        return out

    @njit(cache=True)
    def _deposit_2d_nb(pos, L, h, J):
        out = np.zeros((J, J))
        for n in range(pos.shape[0]):
            gx = (pos[n, 0] + L) / h
            gy = (pos[n, 1] + L) / h
            ix = int(np.floor(gx))
            iy = int(np.floor(gy))
            fx = gx - ix
            fy = gy - iy
            ix = ix % J
            iy = iy % J
            jx = (ix + 1) % J
            jy = (iy + 1) % J
            out[ix, iy] += (1 - fx) * (1 - fy)
            out[jx, iy] += fx * (1 - fy)
            out[ix, jy] += (1 - fx) * fy
            out[jx, jy] += fx * fy
        return out

    def interp_1d(field, pos, L, h):
        return _interp_1d_nb(field, pos, L, h)

    def interp_2d(field, pos, L, h):
        return _interp_2d_nb(field, pos, L, h)

    def deposit_1d(pos, L, h, J):
        return _deposit_1d_nb(pos, L, h, np.int64(J))

    def deposit_2d(pos, L, h, J):
        return _deposit_2d_nb(pos, L, h, np.int64(J))

else:
    interp_1d = interp_1d_numpy
    interp_2d = interp_2d_numpy
    deposit_1d = deposit_1d_numpy
    deposit_2d = deposit_2d_numpy
