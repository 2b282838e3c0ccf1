"""Radially symmetric background flow.

The reduced initial value problem integrates (M^2, hat_r E) in the reversed
radial coordinate r in [0, R]:

    (M^2)'    = h1(r, M^2, E) = M^2/(1-M^2) ((gamma+1) E / c^2
                                 + (2 + (gamma-1) M^2) / hat_r)
    (hat_r E)' = h2(r, M^2)   = -hat_r (mu0 (1/(hat_r^2 M^2))^(1/(gamma+1)) - b0)

with c^2 = gamma e^S0 mu0^(gamma-1) (hat_r^2 M^2)^(-(gamma-1)/(gamma+1)) and
initial data (M0^2, r2 E0).  Primitive profiles are reconstructed from the
conserved mass flux J0 and entropy S0; the electric potential uses the gauge
Phi(0) = 0, i.e. Phi(r) = -int_0^r E.

The constancy of the pseudo-Bernoulli invariant K = U^2/2
+ gamma e^S0 rho^(gamma-1)/(gamma-1) - Phi is the integrator's primary
self-check: it is conserved exactly by the continuum system, so its discrete
defect measures the combined RK4/quadrature error.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import GasParams, InletState, NozzleGeometry
from .errors import (
    InvalidBracket,
    SonicBreakdown,
    SonicDegenerate,
    VacuumBreakdown,
)

__all__ = [
    "BackgroundState",
    "h1",
    "h2",
    "integrate_background",
    "check_lemma_condition",
    "find_threshold_E",
    "ThresholdReport",
]

EPS_SONIC = 1e-8   # guard distance from M^2 = 1 (the 1/(1-M^2) singularity)
EPS_M = 1e-10      # guard distance from M^2 = 0
KBAR_SANITY = 1e-6  # reject reconstructions whose K-defect exceeds this


def _csq_of(r, Msq, gas: GasParams, inlet: InletState):
    """Sound speed squared along the reduced ODE trajectory."""
    hat_r = inlet.geom.hat_r(r)
    g = gas.gamma
    return (
        g
        * math.exp(inlet.S0)
        * inlet.mu0 ** (g - 1.0)
        * (hat_r * hat_r * Msq) ** (-(g - 1.0) / (g + 1.0))
    )


def h1(r, Msq, E, gas: GasParams, inlet: InletState):
    """Right-hand side of the Mach-squared equation, d(M^2)/dr.

    Raises SonicDegenerate when |1 - M^2| < EPS_SONIC.
    """
    if abs(1.0 - Msq) < EPS_SONIC:
        raise SonicDegenerate(f"M^2 = {Msq} too close to 1")
    g = gas.gamma
    csq = _csq_of(r, Msq, gas, inlet)
    hat_r = inlet.geom.hat_r(r)
    bracket = (g + 1.0) * E / csq + (2.0 + (g - 1.0) * Msq) / hat_r
    return Msq / (1.0 - Msq) * bracket


def h2(r, Msq, E, gas: GasParams, inlet: InletState):
    """Right-hand side of the scaled field equation, d(hat_r E)/dr.

    E is accepted for signature uniformity but does not enter.
    """
    if not Msq > 0.0:
        raise ValueError(f"h2 requires M^2 > 0, got {Msq}")
    g = gas.gamma
    hat_r = inlet.geom.hat_r(r)
    rho = inlet.mu0 * (1.0 / (hat_r * hat_r * Msq)) ** (1.0 / (g + 1.0))
    return -hat_r * (rho - gas.b0)


def check_lemma_condition(gas: GasParams, geom: NozzleGeometry) -> bool:
    """Geometric smallness condition ln(r2/r1) < (gamma+1)/(2(gamma-1)).

    Sufficient (not necessary) for the existence of the strictly decreasing
    subsonic branch at strongly negative inlet fields.
    """
    return math.log(geom.r2 / geom.r1) < (gas.gamma + 1.0) / (2.0 * (gas.gamma - 1.0))


def _cumquad4(y: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative integral of samples y on a uniform grid, 4th order.

    Composite Simpson pairs reach even nodes; odd nodes are closed with a
    Simpson 3/8 panel over the trailing three intervals (a single cubic
    panel for the first node).
    """
    n = y.size
    out = np.zeros(n)
    if n < 2:
        return out
    if n == 2:  # trapezoid is all the data supports
        out[1] = 0.5 * dx * (y[0] + y[1])
        return out
    # even nodes: chained Simpson pairs
    for i in range(2, n, 2):
        out[i] = out[i - 2] + dx / 3.0 * (y[i - 2] + 4.0 * y[i - 1] + y[i])
    # first odd node: cubic through the first four samples (quadratic if n == 3)
    if n >= 4:
        out[1] = dx / 24.0 * (9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3])
    else:
        out[1] = dx / 12.0 * (5.0 * y[0] + 8.0 * y[1] - y[2])
    # remaining odd nodes: 3/8 closure from the preceding even node
    for i in range(3, n, 2):
        out[i] = out[i - 3] + 3.0 * dx / 8.0 * (
            y[i - 3] + 3.0 * y[i - 2] + 3.0 * y[i - 1] + y[i]
        )
    return out


@dataclass(frozen=True)
class BackgroundState:
    """Radial background profiles on a uniform grid with cubic interpolants.

    All profile accessors (rho, U, P, Phi, B, Msq, E, csq) take scalar or
    array r in [0, R] and evaluate a cubic spline of the stored samples.
    """

    gas: GasParams
    geom: NozzleGeometry
    inlet: InletState
    grid: np.ndarray
    Msq_samples: np.ndarray
    E_samples: np.ndarray
    rho_samples: np.ndarray
    U_samples: np.ndarray
    P_samples: np.ndarray
    Phi_samples: np.ndarray
    B_samples: np.ndarray
    kbar_defect: float  # max |K - K0| / |K0| over the grid
    _splines: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_splines", {})

    @property
    def J0(self):
        return self.inlet.J0

    @property
    def S0(self):
        return self.inlet.S0

    @property
    def K0(self):
        return self.inlet.K0

    def _spline(self, name):
        sp = self._splines.get(name)
        if sp is None:
            sp = CubicSpline(self.grid, getattr(self, name + "_samples"))
            self._splines[name] = sp
        return sp

    def _eval(self, name, r):
        self.geom.check_r(r)
        rr = np.clip(np.asarray(r, dtype=float), 0.0, self.geom.R)
        out = self._spline(name)(rr)
        if out.ndim == 0:
            return float(out)
        return out

    def Msq(self, r):
        return self._eval("Msq", r)

    def E(self, r):
        return self._eval("E", r)

    def rho(self, r):
        return self._eval("rho", r)

    def U(self, r):
        return self._eval("U", r)

    def P(self, r):
        return self._eval("P", r)

    def Phi(self, r):
        return self._eval("Phi", r)

    def B(self, r):
        return self._eval("B", r)

    def csq(self, r):
        g = self.gas.gamma
        return g * math.exp(self.S0) * self.rho(r) ** (g - 1.0)

    def to_csv(self) -> str:
        """Serialize profiles: columns r, Msq, E, rho, U, P, Phi, B."""
        buf = io.StringIO()
        buf.write("r,Msq,E,rho,U,P,Phi,B\n")
        cols = (
            self.grid,
            self.Msq_samples,
            self.E_samples,
            self.rho_samples,
            self.U_samples,
            self.P_samples,
            self.Phi_samples,
            self.B_samples,
        )
        for row in zip(*cols):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @staticmethod
    def parse_csv(text: str) -> dict:
        """Parse a profile CSV back into named column arrays."""
        lines = [ln for ln in text.strip().split("\n") if ln]
        names = lines[0].split(",")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        return {name: data[:, k] for k, name in enumerate(names)}


def _rhs(r, y, gas, inlet):
    """ODE right-hand side for the state y = (M^2, hat_r E)."""
    Msq, w = y
    if not (EPS_M < Msq < 1.0 - EPS_M) or not np.all(np.isfinite(y)):
        raise SonicBreakdown(f"M^2 = {Msq} left the subsonic range at r = {r}")
    E = w / inlet.geom.hat_r(r)
    try:
        d1 = h1(r, Msq, E, gas, inlet)
    except SonicDegenerate as exc:
        raise SonicBreakdown(str(exc)) from exc
    d2 = h2(r, Msq, E, gas, inlet)
    return np.array([d1, d2])


def integrate_background(
    gas: GasParams, geom: NozzleGeometry, inlet: InletState, Nr: int = 1001
) -> BackgroundState:
    """Integrate the reduced IVP with classical RK4 and reconstruct profiles.

    Parameters
    ----------
    Nr : number of uniform grid nodes on [0, R]; the fixed step is R/(Nr-1).

    Raises
    ------
    SonicBreakdown
        M^2 left (EPS_M, 1 - EPS_M) at a stage node, or hit the sonic
        guard of h1; the solution is not uniformly subsonic.
    VacuumBreakdown
        Reconstruction produced rho <= 0.
    """
    if Nr < 3:
        raise ValueError("Nr must be at least 3")
    R = geom.R
    h = R / (Nr - 1)
    grid = np.linspace(0.0, R, Nr)
    y = np.array([inlet.M0sq, geom.r2 * inlet.E0])
    states = np.empty((Nr, 2))
    states[0] = y
    for k in range(Nr - 1):
        r = grid[k]
        k1 = _rhs(r, y, gas, inlet)
        k2 = _rhs(r + 0.5 * h, y + 0.5 * h * k1, gas, inlet)
        k3 = _rhs(r + 0.5 * h, y + 0.5 * h * k2, gas, inlet)
        k4 = _rhs(r + h, y + h * k3, gas, inlet)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (EPS_M < y[0] < 1.0 - EPS_M) or not np.all(np.isfinite(y)):
            raise SonicBreakdown(
                f"M^2 = {y[0]} left the subsonic range at r = {grid[k + 1]}"
            )
        states[k + 1] = y

    Msq = states[:, 0]
    hat_r = geom.hat_r(grid)
    E = states[:, 1] / hat_r
    g = gas.gamma
    rho = inlet.mu0 * (1.0 / (hat_r * hat_r * Msq)) ** (1.0 / (g + 1.0))
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise VacuumBreakdown("reconstructed density is not strictly positive")
    U = inlet.J0 / (hat_r * rho)
    eS0 = math.exp(inlet.S0)
    P = eS0 * rho**g
    Phi = -_cumquad4(E, h)
    B = 0.5 * U * U + g * eS0 * rho ** (g - 1.0) / (g - 1.0)
    kbar = B - Phi
    defect = float(np.max(np.abs(kbar - inlet.K0)) / abs(inlet.K0))
    if defect > KBAR_SANITY:
        raise ValueError(
            f"pseudo-Bernoulli defect {defect:.3e} exceeds {KBAR_SANITY}; "
            "increase Nr"
        )
    return BackgroundState(
        gas=gas,
        geom=geom,
        inlet=inlet,
        grid=grid,
        Msq_samples=Msq,
        E_samples=E,
        rho_samples=rho,
        U_samples=U,
        P_samples=P,
        Phi_samples=Phi,
        B_samples=B,
        kbar_defect=defect,
    )


@dataclass(frozen=True)
class ThresholdReport:
    """Outcome of the empirical critical-field bisection."""

    E_star: float
    bracket_lo: float
    bracket_hi: float
    tol: float
    iterations: int
    failure_mode: str  # failure classification at the upper bracket end


def _classify(E0, gas, geom, inlet_proto, Nr):
    """'ok' if integration succeeds with strictly decreasing M^2."""
    inlet = InletState(
        rho0=inlet_proto.rho0,
        U0=inlet_proto.U0,
        P0=inlet_proto.P0,
        E0=E0,
        gas=gas,
        geom=geom,
    )
    try:
        bg = integrate_background(gas, geom, inlet, Nr=Nr)
    except (SonicBreakdown, VacuumBreakdown) as exc:
        return "breakdown", type(exc).__name__
    if np.all(np.diff(bg.Msq_samples) < 0.0):
        return "ok", ""
    return "nonmonotone", "NonMonotoneMsq"


def find_threshold_E(
    gas: GasParams,
    geom: NozzleGeometry,
    inlet_without_E0: InletState,
    bracket: tuple,
    tol: float = 1e-6,
    Nr: int = 501,
) -> ThresholdReport:
    """Bisect the empirical boundary E* of the good subsonic regime.

    Below E* the integration stays subsonic with strictly decreasing M^2;
    at the upper bracket end it must fail (sonic/vacuum breakdown or loss
    of monotonicity).  The E0 of `inlet_without_E0` is ignored.

    Raises InvalidBracket if both endpoints behave identically.
    """
    lo, hi = bracket
    if not lo < hi:
        raise InvalidBracket(f"bracket must satisfy lo < hi, got {bracket}")
    lo_cls, _ = _classify(lo, gas, geom, inlet_without_E0, Nr)
    hi_cls, hi_mode = _classify(hi, gas, geom, inlet_without_E0, Nr)
    if lo_cls != "ok":
        raise InvalidBracket(f"lower bracket end {lo} is not in the good regime")
    if hi_cls == "ok":
        raise InvalidBracket(f"upper bracket end {hi} did not fail")
    iters = 0
    failure_mode = hi_mode
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cls, mode = _classify(mid, gas, geom, inlet_without_E0, Nr)
        if cls == "ok":
            lo = mid
        else:
            hi = mid
            failure_mode = mode
        iters += 1
        if iters > 200:
            break
    return ThresholdReport(
        E_star=0.5 * (lo + hi),
        bracket_lo=lo,
        bracket_hi=hi,
        tol=tol,
        iterations=iters,
        failure_mode=failure_mode,
    )
