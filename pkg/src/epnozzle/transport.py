"""Characteristic transport of entropy and pseudo-Bernoulli perturbations.

Both scalars are conserved along the streamline slope field

    d(eta)/ds = V# / (hat_r(s) (Ubar(s) + U#(s, eta))),

so their value at (r, theta) equals the entrance profile evaluated at the
characteristic foot eta(0; r, theta).  Feet are found by tracing backward
from s = r to s = 0 with RK4 steps of size dr and bilinear interpolation of
the precomputed slope grid; eta is clamped to [-theta0, theta0] after every
stage (the walls are characteristic because V# vanishes there).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import StagnationError

__all__ = [
    "CharacteristicFoot",
    "stagnation_guard",
    "slope_grid",
    "trace_characteristic",
    "trace_feet",
    "transport_scalar",
]

# Tracing aborts if |Ubar + U#| drops below this fraction of min Ubar.
STAGNATION_FRACTION = 0.1


@dataclass(frozen=True)
class CharacteristicFoot:
    """Entrance angle of one traced characteristic, with optional path."""

    theta_foot: float
    path_samples: np.ndarray | None = None  # rows (s, eta(s)), exit to entrance


def stagnation_guard(Ush, background, grid):
    """Return eps_stag and raise StagnationError if Ubar + U# comes too close
    to zero anywhere on the grid."""
    Ubar = background.U(grid.r)[:, None]
    eps_stag = STAGNATION_FRACTION * float(np.min(background.U(grid.r)))
    total = Ubar + np.asarray(Ush)
    if np.min(np.abs(total)) < eps_stag:
        raise StagnationError(
            f"|Ubar + U#| fell below eps_stag = {eps_stag:.3e}"
        )
    return eps_stag


def slope_grid(Ush, Vsh, background, grid):
    """Characteristic slope V# / (hat_r (Ubar + U#)) sampled on the grid."""
    stagnation_guard(Ush, background, grid)
    Ubar = background.U(grid.r)[:, None]
    hat_r = background.geom.hat_r(grid.r)[:, None]
    return np.asarray(Vsh) / (hat_r * (Ubar + np.asarray(Ush)))


def _slope_at(slope, grid, s, eta):
    """Bilinear sample of the slope grid at radius s (scalar) and angles eta."""
    x = s / grid.dr
    i0 = int(np.clip(np.floor(x), 0, grid.Nr - 2))
    t = x - i0
    col = (1.0 - t) * slope[i0] + t * slope[i0 + 1]
    return np.interp(eta, grid.theta, col)


def _rk4_level_step(slope, grid, s, eta, theta0):
    """One backward RK4 step of size dr, from radius s to s - dr."""
    h = grid.dr
    clip = lambda a: np.clip(a, -theta0, theta0)
    k1 = _slope_at(slope, grid, s, eta)
    k2 = _slope_at(slope, grid, s - 0.5 * h, clip(eta - 0.5 * h * k1))
    k3 = _slope_at(slope, grid, s - 0.5 * h, clip(eta - 0.5 * h * k2))
    k4 = _slope_at(slope, grid, s - h, clip(eta - h * k3))
    return clip(eta - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def trace_feet(Ush, Vsh, background, grid, slope=None):
    """Characteristic feet eta(0; r_i, theta_j) for every grid node.

    All characteristics are marched together: starting from the outermost
    radial level, each backward step advances every node whose base radius
    has been reached, so the whole field costs O(Nr^2 Ntheta) interpolations
    in vectorized chunks.
    """
    if slope is None:
        slope = slope_grid(Ush, Vsh, background, grid)
    theta0 = grid.theta0
    feet = np.tile(grid.theta, (grid.Nr, 1))
    for L in range(grid.Nr - 1, 0, -1):
        feet[L:] = _rk4_level_step(slope, grid, grid.r[L], feet[L:], theta0)
    return feet


def trace_characteristic(Ush, Vsh, background, grid, point, step=None,
                         keep_path=False):
    """Trace a single characteristic backward from (r, theta) to the entrance.

    `step` defaults to the radial grid spacing; the final partial step is
    shortened to land exactly on s = 0.
    """
    slope = slope_grid(Ush, Vsh, background, grid)
    r, theta = point
    background.geom.check_r(r)
    theta0 = grid.theta0
    if step is None:
        step = grid.dr
    eta = float(np.clip(theta, -theta0, theta0))
    s = float(r)
    path = [(s, eta)] if keep_path else None
    clip = lambda a: float(np.clip(a, -theta0, theta0))
    while s > 0.0:
        h = min(step, s)
        k1 = _slope_at(slope, grid, s, eta)
        k2 = _slope_at(slope, grid, s - 0.5 * h, clip(eta - 0.5 * h * k1))
        k3 = _slope_at(slope, grid, s - 0.5 * h, clip(eta - 0.5 * h * k2))
        k4 = _slope_at(slope, grid, s - h, clip(eta - h * k3))
        eta = clip(eta - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        s -= h
        if keep_path:
            path.append((s, eta))
    return CharacteristicFoot(
        theta_foot=eta,
        path_samples=np.array(path) if keep_path else None,
    )


def entrance_profile_interpolant(theta_nodes, samples, clamped=True):
    """Cubic interpolant of an entrance profile.

    Clamped zero-derivative ends enforce the wall compatibility
    d/dtheta = 0 at +-theta0 for transported scalars.
    """
    bc = ((1, 0.0), (1, 0.0)) if clamped else "not-a-knot"
    return CubicSpline(theta_nodes, samples, bc_type=bc)


def transport_scalar(entrance_profile, Ush, Vsh, background, grid, feet=None):
    """Transport an entrance perturbation profile along characteristics.

    `entrance_profile` is either a callable theta -> value or an array of
    samples on the grid's theta nodes (interpolated with a clamped cubic).
    Returns the transported field on the full grid.
    """
    if feet is None:
        feet = trace_feet(Ush, Vsh, background, grid)
    if callable(entrance_profile):
        prof = entrance_profile
    else:
        prof = entrance_profile_interpolant(grid.theta, np.asarray(entrance_profile))
    return np.asarray(prof(feet), dtype=float)
