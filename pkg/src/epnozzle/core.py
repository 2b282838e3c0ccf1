"""Problem definition types, thermodynamic closures and linearized coefficients.

Working variables follow the reversed radial coordinate of the convergent
nozzle: r = r2 - r_tilde runs from 0 (wide entrance) to R = r2 - r1 (narrow
exit), and hat_r(r) = r2 - r is the physical radius.  The gas is ideal
polytropic, P = e^S rho^gamma, with sound speed c^2 = gamma e^S rho^(gamma-1).

Entropy is carried as S itself (so pressure is e^S rho^gamma); storing e^S
would overflow for large |S|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveEnthalpy, OutOfDomain

__all__ = [
    "GasParams",
    "NozzleGeometry",
    "InletState",
    "ThermoSample",
    "LinearCoefficients",
    "density_from_bernoulli",
    "sound_speed_sq",
    "linear_coefficients",
]

# Vacuum guard: the enthalpy argument of the density closure must exceed
# VACUUM_EPS_REL times the problem's Bernoulli scale.
VACUUM_EPS_REL = 1e-12


@dataclass(frozen=True)
class GasParams:
    """Ideal polytropic gas and fixed background ion charge density."""

    gamma: float  # adiabatic exponent, > 1
    b0: float     # background ion density, > 0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.b0 > 0.0:
            raise ValueError(f"b0 must be positive, got {self.b0}")


@dataclass(frozen=True)
class NozzleGeometry:
    """Annular-sector nozzle: radii r1 < r2 and half-angle theta0."""

    r1: float
    r2: float
    theta0: float  # radians, in (0, pi/2)

    def __post_init__(self):
        if not 0.0 < self.r1 < self.r2:
            raise ValueError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if not 0.0 < self.theta0 < math.pi / 2:
            raise ValueError(f"theta0 must lie in (0, pi/2), got {self.theta0}")

    @property
    def R(self) -> float:
        """Radial extent of the reversed coordinate, R = r2 - r1."""
        return self.r2 - self.r1

    def hat_r(self, r):
        """Physical radius hat_r = r2 - r; defined for r in [0, R]."""
        return self.r2 - r

    def check_r(self, r):
        """Raise OutOfDomain unless r (scalar or array) lies in [0, R]."""
        r = np.asarray(r, dtype=float)
        slack = 1e-12 * max(self.R, 1.0)
        if np.any(r < -slack) or np.any(r > self.R + slack):
            raise OutOfDomain(
                f"radial coordinate outside [0, {self.R}]: "
                f"range [{float(np.min(r))}, {float(np.max(r))}]"
            )


@dataclass(frozen=True)
class InletState:
    """Entrance data (rho0, U0, P0, E0) at r = 0 plus derived conserved scalars.

    Derived quantities:
      J0    = r2 rho0 U0                    -- mass flux through hat_r = r2
      S0    = ln(P0 / rho0^gamma)           -- entropy, constant on streamlines
      M0sq  = rho0 U0^2 / (gamma P0)        -- inlet Mach number squared
      K0    = U0^2/2 + gamma e^S0 rho0^(gamma-1)/(gamma-1)  -- pseudo-Bernoulli
      mu0   = (J0^2 / (gamma e^S0))^(1/(gamma+1))           -- density scale
    """

    rho0: float
    U0: float
    P0: float
    E0: float
    gas: GasParams
    geom: NozzleGeometry
    J0: float = field(init=False)
    S0: float = field(init=False)
    M0sq: float = field(init=False)
    K0: float = field(init=False)
    mu0: float = field(init=False)

    def __post_init__(self):
        if not (self.rho0 > 0 and self.U0 > 0 and self.P0 > 0):
            raise ValueError("inlet rho0, U0, P0 must all be positive")
        g = self.gas.gamma
        object.__setattr__(self, "J0", self.geom.r2 * self.rho0 * self.U0)
        object.__setattr__(self, "S0", math.log(self.P0 / self.rho0**g))
        object.__setattr__(self, "M0sq", self.rho0 * self.U0**2 / (g * self.P0))
        object.__setattr__(
            self,
            "K0",
            0.5 * self.U0**2
            + g * math.exp(self.S0) * self.rho0 ** (g - 1.0) / (g - 1.0),
        )
        object.__setattr__(
            self, "mu0", (self.J0**2 / (g * math.exp(self.S0))) ** (1.0 / (g + 1.0))
        )
        if not self.M0sq < 1.0:
            raise ValueError(f"inlet flow must be subsonic, got M0^2 = {self.M0sq}")


def density_from_bernoulli(S, K, U, V, Phi, gamma, vacuum_scale=None):
    """Density from the Bernoulli closure.

    H(S, K, U, V, Phi) = ((gamma-1)/(gamma e^S) (K + Phi - (U^2+V^2)/2))^(1/(gamma-1))

    All arguments broadcast; scalars in give a scalar out.

    Raises
    ------
    NonPositiveEnthalpy
        If the enthalpy argument K + Phi - (U^2+V^2)/2 falls at or below
        the vacuum guard VACUUM_EPS_REL * vacuum_scale (default scale:
        max |K|), signalling vacuum or breakdown of the subsonic ansatz.
    """
    S, K, U, V, Phi = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (S, K, U, V, Phi))
    )
    arg = K + Phi - 0.5 * (U * U + V * V)
    if vacuum_scale is None:
        vacuum_scale = float(np.max(np.abs(K))) if K.size else 1.0
    guard = VACUUM_EPS_REL * abs(vacuum_scale)
    if np.any(arg <= guard) or not np.all(np.isfinite(arg)):
        bad = float(np.min(arg)) if np.all(np.isfinite(arg)) else float("nan")
        raise NonPositiveEnthalpy(
            f"enthalpy argument {bad} <= vacuum guard {guard}"
        )
    rho = ((gamma - 1.0) / (gamma * np.exp(S)) * arg) ** (1.0 / (gamma - 1.0))
    if rho.ndim == 0:
        return float(rho)
    return rho


def sound_speed_sq(S, rho, gamma):
    """Squared sound speed c^2 = gamma e^S rho^(gamma-1); requires rho > 0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise ValueError("sound_speed_sq requires rho > 0")
    csq = gamma * np.exp(np.asarray(S, dtype=float)) * rho ** (gamma - 1.0)
    if csq.ndim == 0:
        return float(csq)
    return csq


@dataclass(frozen=True)
class ThermoSample:
    """One thermodynamic state closed via the Bernoulli law.

    rho, P and csq are derived from (S, K, U, V, Phi); `subsonic` records
    whether U^2 + V^2 < csq at this sample.
    """

    S: float
    K: float
    U: float
    V: float
    Phi: float
    rho: float = field(init=False)
    P: float = field(init=False)
    csq: float = field(init=False)
    subsonic: bool = field(init=False)

    gamma: float = 1.4

    def __post_init__(self):
        rho = density_from_bernoulli(
            self.S, self.K, self.U, self.V, self.Phi, self.gamma
        )
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "P", math.exp(self.S) * rho**self.gamma)
        object.__setattr__(self, "csq", sound_speed_sq(self.S, rho, self.gamma))
        object.__setattr__(self, "subsonic", self.U**2 + self.V**2 < self.csq)


@dataclass(frozen=True)
class LinearCoefficients:
    """Radial coefficient profiles of the linearized elliptic system.

    b1 and c1 are one shared array (aliased on purpose) so the structural
    identity b1 == c1 holds bit-for-bit.
    """

    A11: np.ndarray  # hat_r rho (1 - M^2)     -- radial flux weight for calU
    A22: np.ndarray  # hat_r rho               -- paper-form angular weight
    b1: np.ndarray   # hat_r rho U / c^2       -- potential coupling, flux side
    c1: np.ndarray   # identical to b1         -- potential coupling, Poisson side
    c2: np.ndarray   # -hat_r rho / c^2
    a11: np.ndarray  # hat_r rho (1 - M^2)     -- stream-potential radial weight
    a22: np.ndarray  # rho                     -- stream-potential angular weight


def linear_coefficients(background, r):
    """Evaluate all coefficient functions of the linearized system at r.

    `background` is any object exposing cubic-interpolated profiles
    rho(r), Msq(r), U(r), csq(r) and the geometry (a BackgroundState).
    r may be scalar or array; values outside [0, R] raise OutOfDomain.
    """
    background.geom.check_r(r)
    hat_r = background.geom.hat_r(np.asarray(r, dtype=float))
    rho = background.rho(r)
    Msq = background.Msq(r)
    U = background.U(r)
    csq = background.csq(r)
    A11 = hat_r * rho * (1.0 - Msq)
    A22 = hat_r * rho
    b1 = hat_r * rho * U / csq
    c2 = -hat_r * rho / csq
    return LinearCoefficients(A11=A11, A22=A22, b1=b1, c1=b1, c2=c2, a11=A11, a22=rho)
