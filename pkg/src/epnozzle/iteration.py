"""Nonlinear right-hand sides and the fixed-point driver.

One sweep of the solution map takes the current iterate
V# = (U#, V#, Phi#, S#, K#), transports the entropy and pseudo-Bernoulli
perturbations along the V#-streamlines, evaluates the nonlinear remainders
f1..f4 and the exit trace h, removes the curl defect with the auxiliary
Poisson solve, homogenizes the boundary data (lift r h + g for the stream
potential, linear lift Phi* for the electric potential), solves the coupled
potential system and recovers the next iterate.  All remainders vanish
identically when the boundary data equals the background traces, so the
origin is an exact fixed point.

The remainders are grouped so that each one is the exact nonlinear
flux/source minus the same linear part that appears on the left-hand side;
at a fixed point the linear parts cancel and the iterate solves the full
system.  The backgrounds entering the remainders are recomputed through the
Bernoulli closure itself (rho_cmp = H(S0, K0, Ubar, 0, Phibar)), which makes
the cancellation at the trivial fixed point bit-exact instead of
integrator-tolerance-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .background import BackgroundState, _cumquad4
from .core import density_from_bernoulli, linear_coefficients
from .elliptic import (
    AuxPoissonSolver,
    Field2D,
    Grid2D,
    PotentialSystemSolver,
    d_profile,
    d_r,
    d_theta,
    recover_velocity,
)
from .errors import CompatibilityError, DivergenceError
from .transport import (
    entrance_profile_interpolant,
    stagnation_guard,
    trace_feet,
    transport_scalar,
)

__all__ = [
    "BoundaryData",
    "PerturbationState",
    "SolveReport",
    "SolverConfig",
    "BumpAmplitudes",
    "compute_sigma",
    "assemble_rhs",
    "RhsBundle",
    "fixed_point_solve",
    "make_bump_boundary_data",
    "c1_field_norm",
]

PROFILE_NAMES = ("V_en", "Phi_en", "K_en", "S_en", "Phi_ex", "P_ex")


def c1_field_norm(f, grid: Grid2D) -> float:
    """Discrete C1 surrogate norm: sup of values and first differences."""
    f = np.asarray(f, dtype=float)
    return float(
        np.max(np.abs(f))
        + np.max(np.abs(d_r(f, grid.dr)))
        + np.max(np.abs(d_theta(f, grid.dtheta)))
    )


@dataclass
class PerturbationState:
    """The iterate V = (calU, calV, checkPhi, calS, calK) on the 2D grid."""

    calU: np.ndarray
    calV: np.ndarray
    checkPhi: np.ndarray
    calS: np.ndarray
    calK: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid2D):
        return cls(*(grid.zeros() for _ in range(5)))

    def fields(self):
        return (self.calU, self.calV, self.checkPhi, self.calS, self.calK)

    def norm(self, grid: Grid2D) -> float:
        return float(sum(c1_field_norm(f, grid) for f in self.fields()))

    def diff_norm(self, other: "PerturbationState", grid: Grid2D) -> float:
        return float(
            sum(
                c1_field_norm(a - b, grid)
                for a, b in zip(self.fields(), other.fields())
            )
        )

    def blend(self, other: "PerturbationState", weight: float):
        """(1 - weight) * self + weight * other."""
        return PerturbationState(
            *(
                (1.0 - weight) * a + weight * b
                for a, b in zip(self.fields(), other.fields())
            )
        )


def _second_diff(p, dth):
    """2nd-order second difference of a theta profile, one-sided at the ends."""
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    out[1:-1] = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dth**2
    out[0] = (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) / dth**2
    out[-1] = (2.0 * p[-1] - 5.0 * p[-2] + 4.0 * p[-3] - p[-4]) / dth**2
    return out


@dataclass
class BoundaryData:
    """Entrance/exit profiles sampled on the grid's theta nodes, plus the
    background-charge field b on the full 2D grid.

    Compatibility at the wall corners -- V_en(+-theta0) = 0 and vanishing
    first derivatives of the five scalar profiles -- is checked discretely
    at construction.
    """

    theta: np.ndarray
    V_en: np.ndarray
    Phi_en: np.ndarray
    K_en: np.ndarray
    S_en: np.ndarray
    Phi_ex: np.ndarray
    P_ex: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n = self.theta.size
        for name in PROFILE_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"profile {name} must have shape ({n},)")
            setattr(self, name, arr)
        self.b = np.asarray(self.b, dtype=float)

    def check_compatibility(self, dtheta, strict=True):
        """Discrete corner-compatibility defects; raise when far off.

        Defects are end values (V_en) or end derivatives (scalar profiles)
        normalized by the profile's own variation scale, floored so that
        constant profiles pass trivially.
        """
        defects = {}
        span = self.theta[-1] - self.theta[0]
        scale_v = max(
            float(np.max(np.abs(self.V_en))),
            1e-9 * (1.0 + float(np.max(np.abs(self.V_en)))),
        )
        defects["V_en"] = max(abs(self.V_en[0]), abs(self.V_en[-1])) / scale_v
        for name in PROFILE_NAMES[1:]:
            p = getattr(self, name)
            dp = d_profile(p, dtheta)
            floor = 1e-9 * (1.0 + float(np.max(np.abs(p)))) / span
            scale = max(float(np.max(np.abs(dp))), floor)
            defects[name] = max(abs(dp[0]), abs(dp[-1])) / scale
        if strict:
            bad = {k: v for k, v in defects.items() if v > 0.05}
            if bad:
                raise CompatibilityError(
                    f"boundary profiles violate wall compatibility: {bad}"
                )
        return defects


@dataclass(frozen=True)
class BumpAmplitudes:
    """Amplitudes of the smooth test bumps added to the background traces."""

    v_en: float = 0.0
    phi_en: float = 0.0
    k_en: float = 0.0
    s_en: float = 0.0
    phi_ex: float = 0.0
    p_ex: float = 0.0
    b: float = 0.0

    def scaled(self, factor: float) -> "BumpAmplitudes":
        return BumpAmplitudes(
            **{k: factor * v for k, v in asdict(self).items()}
        )


def make_bump_boundary_data(
    amplitudes: BumpAmplitudes, background: BackgroundState, grid: Grid2D
) -> BoundaryData:
    """Boundary data built from background traces plus compatible bumps.

    Scalar profiles get a * cos^2(pi theta / (2 theta0)) bumps (first
    derivative vanishes at the walls); V_en gets a * sin(pi theta / theta0),
    which vanishes at the walls; b gets a separable 2D bump.  Zero
    amplitudes reproduce the background traces exactly.
    """
    a = amplitudes
    th = grid.theta
    th0 = grid.theta0
    R = background.geom.R
    even = np.cos(0.5 * np.pi * th / th0) ** 2
    v_shape = np.sin(np.pi * th / th0)
    bump2d = np.sin(np.pi * grid.r / R)[:, None] * even[None, :]
    return BoundaryData(
        theta=th.copy(),
        V_en=a.v_en * v_shape,
        Phi_en=background.Phi(0.0) + a.phi_en * even,
        K_en=background.K0 + a.k_en * even,
        S_en=background.S0 + a.s_en * even,
        Phi_ex=background.Phi(R) + a.phi_ex * even,
        P_ex=background.P(R) + a.p_ex * even,
        b=background.gas.b0 + a.b * bump2d,
    )


def compute_sigma(boundary_data: BoundaryData, background: BackgroundState) -> float:
    """Discrete surrogate of the boundary-perturbation size sigma.

    Sum over the six profiles of sup |deviation| plus sup of its first and
    second difference quotients, plus sup |b - b0|.  Deviations are taken
    from the background traces (0, Phibar(0), K0, S0, Phibar(R), Pbar(R)).
    """
    bd = boundary_data
    R = background.geom.R
    traces = {
        "V_en": 0.0,
        "Phi_en": background.Phi(0.0),
        "K_en": background.K0,
        "S_en": background.S0,
        "Phi_ex": background.Phi(R),
        "P_ex": background.P(R),
    }
    dth = bd.theta[1] - bd.theta[0]
    total = 0.0
    for name in PROFILE_NAMES:
        dev = getattr(bd, name) - traces[name]
        total += float(np.max(np.abs(dev)))
        total += float(np.max(np.abs(d_profile(dev, dth))))
        total += float(np.max(np.abs(_second_diff(dev, dth))))
    total += float(np.max(np.abs(bd.b - background.gas.b0)))
    return total


@dataclass
class RhsBundle:
    """Everything one sweep of the solution map assembles ahead of the
    potential solve."""

    f1: Field2D
    f2: Field2D
    f3: Field2D
    f4: Field2D
    h: np.ndarray        # exit trace of calU
    g: np.ndarray        # entrance stream-potential lift
    gprime: np.ndarray   # r2 V_en, the exact derivative of g
    hprime: np.ndarray   # discrete derivative of h
    phi_aux: Field2D
    phi_star: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    aux_residual: float

    def max_remainder(self) -> float:
        """Largest magnitude over the assembled remainders (f1..f4, h, g)."""
        vals = [
            float(np.max(np.abs(x)))
            for x in (
                self.f1.values,
                self.f2.values,
                self.f3.values,
                self.f4.values,
                self.h,
                self.g,
            )
        ]
        return max(vals)


def assemble_rhs(
    Vsharp: PerturbationState,
    calS,
    calK,
    boundary_data: BoundaryData,
    background: BackgroundState,
    grid: Grid2D,
    aux_solver: AuxPoissonSolver | None = None,
) -> RhsBundle:
    """Evaluate the nonlinear remainders, boundary traces and homogenized data.

    calS, calK are the freshly transported perturbations (they belong to the
    new iterate, while the velocity/potential entries come from Vsharp).
    """
    g = background.gas.gamma
    bd = boundary_data
    Ush, Vsh, Phish = Vsharp.calU, Vsharp.calV, Vsharp.checkPhi
    stagnation_guard(Ush, background, grid)

    r = grid.r
    hat = grid.hat_r()[:, None]
    Ubar = background.U(r)[:, None]
    Phibar = background.Phi(r)[:, None]
    cn = linear_coefficients(background, r)
    A11 = cn.A11[:, None]
    a22 = cn.a22[:, None]
    b1 = cn.b1[:, None]
    c1 = cn.c1[:, None]
    c2 = cn.c2[:, None]

    S0, K0 = background.S0, background.K0
    S_tot = S0 + np.asarray(calS)
    K_tot = K0 + np.asarray(calK)
    U_tot = Ubar + Ush
    Phi_tot = Phibar + Phish
    H_tot = density_from_bernoulli(S_tot, K_tot, U_tot, Vsh, Phi_tot, g,
                                   vacuum_scale=K0)
    rho_cmp = density_from_bernoulli(S0, K0, Ubar, 0.0, Phibar, g,
                                     vacuum_scale=K0)

    f1 = A11 * Ush + b1 * Phish - hat * (H_tot * U_tot - rho_cmp * Ubar)
    f2 = (a22 - H_tot) * Vsh
    f3 = hat * (H_tot - rho_cmp - (bd.b - background.gas.b0)) \
        + c1 * Ush + c2 * Phish
    dS = d_theta(calS, grid.dtheta)
    dK = d_theta(calK, grid.dtheta)
    f4 = (np.exp(S_tot) * H_tot ** (g - 1.0) / (g - 1.0) * dS - dK) / U_tot

    # exit trace of calU from the Bernoulli relation
    R = background.geom.R
    UbarR = background.U(R)
    PhibarR = background.Phi(R)
    PbarR = background.P(R)
    ex = (g / (g - 1.0))
    SR = np.asarray(calS)[-1, :]
    KR = np.asarray(calK)[-1, :]
    term_ex = bd.Phi_ex - ex * np.exp((S0 + SR) / g) * bd.P_ex ** (1.0 - 1.0 / g)
    term_bg = PhibarR - ex * math.exp(S0 / g) * PbarR ** (1.0 - 1.0 / g)
    quad = (Ush[-1, :] ** 2 + Vsh[-1, :] ** 2) / (2.0 * UbarR)
    h = (KR + term_ex - term_bg) / UbarR - quad

    # entrance lift g(theta) = int r2 V_en and its exact derivative
    gprime = background.geom.r2 * bd.V_en
    g_lift = _cumquad4(gprime, grid.dtheta)

    if aux_solver is None:
        aux_solver = AuxPoissonSolver(grid)
    phi_aux, aux_report = aux_solver.solve(f4)
    dphi_t = d_theta(phi_aux.values, grid.dtheta)
    dphi_r = d_r(phi_aux.values, grid.dr)
    fk1 = f1 + A11 * dphi_t
    fk2 = f2 - a22 * dphi_r
    fk3 = f3 + c1 * dphi_t

    Phi0 = background.Phi(0.0)
    pen = bd.Phi_en - Phi0
    pex = bd.Phi_ex - PhibarR
    lam = (r / R)[:, None]
    phi_star = (1.0 - lam) * pen[None, :] + lam * pex[None, :]
    sp_en = entrance_profile_interpolant(bd.theta, pen)
    sp_ex = entrance_profile_interpolant(bd.theta, pex)
    pen2 = sp_en(bd.theta, 2)
    pex2 = sp_ex(bd.theta, 2)
    phi_star_tt = (1.0 - lam) * pen2[None, :] + lam * pex2[None, :]
    q = (pex - pen) / R
    div_r_phi_star = -q[None, :] * np.ones((grid.Nr, 1))

    hprime = d_profile(h, grid.dtheta)
    F1 = fk1 - cn.a11[:, None] * h[None, :] - b1 * phi_star
    F2 = fk2 - (cn.a22 / grid.hat_r())[:, None] * (
        r[:, None] * hprime[None, :] + gprime[None, :]
    )
    F3 = fk3 - div_r_phi_star - phi_star_tt / hat - c1 * h[None, :] \
        - c2 * phi_star

    return RhsBundle(
        f1=Field2D(f1, role="rhs_f1"),
        f2=Field2D(f2, role="rhs_f2"),
        f3=Field2D(f3, role="rhs_f3"),
        f4=Field2D(f4, role="rhs_f4"),
        h=np.asarray(h, dtype=float),
        g=g_lift,
        gprime=gprime,
        hprime=hprime,
        phi_aux=phi_aux,
        phi_star=phi_star,
        F1=F1,
        F2=F2,
        F3=F3,
        aux_residual=aux_report.residual,
    )


@dataclass(frozen=True)
class SolverConfig:
    """Tunables of the fixed-point iteration."""

    tol_fp: float = 1e-10      # on the increment norm scaled by max(sigma, eps)
    max_iter: int = 50
    c_cal: float = 10.0        # trust-ball calibration, delta = 2 c_cal sigma
    relaxation: float = 1.0    # 1.0 reproduces the undamped map
    sigma_cap: float = 1.0     # reject data outside the small-data regime
    eps_floor: float = 1e-6    # lower scale bound in the stopping rule


@dataclass
class SolveReport:
    """Convergence history of one fixed-point solve."""

    iterations: int
    increments: list
    ratios: list
    sigma_p: float
    delta: float
    converged: bool
    norm_V: float
    final_linear_residual: float
    max_rhs_at_start: float
    stopped_on: str = "tolerance"

    def terminal_ratio(self) -> float:
        """Median of the last (up to) three contraction ratios."""
        if not self.ratios:
            return 0.0
        tail = self.ratios[-3:]
        return float(np.median(tail))

    def to_json(self, **extra) -> str:
        payload = {
            "iterations": self.iterations,
            "increments": list(map(float, self.increments)),
            "ratios": list(map(float, self.ratios)),
            "sigma_p": self.sigma_p,
            "delta": self.delta,
            "converged": self.converged,
            "norm_V": self.norm_V,
            "final_linear_residual": self.final_linear_residual,
            "max_rhs_at_start": self.max_rhs_at_start,
            "terminal_ratio": self.terminal_ratio(),
        }
        payload.update(extra)
        return json.dumps(payload, indent=2)


def fixed_point_solve(
    boundary_data: BoundaryData,
    background: BackgroundState,
    grid: Grid2D,
    config: SolverConfig = SolverConfig(),
):
    """Drive the solution map to its fixed point from the zero iterate.

    Returns (PerturbationState, SolveReport).  Raises DivergenceError when
    the contraction ratio stays >= 1 for three consecutive iterations or an
    iterate leaves the trust ball ||V|| <= delta = 2 c_cal sigma_p.
    """
    bd = boundary_data
    bd.check_compatibility(grid.dtheta)
    sigma_p = compute_sigma(bd, background)
    if sigma_p > config.sigma_cap:
        raise DivergenceError(
            f"sigma_p = {sigma_p:.3e} exceeds the configured cap "
            f"{config.sigma_cap}"
        )
    delta = 2.0 * config.c_cal * sigma_p + 1e-12

    dev_S = bd.S_en - background.S0
    dev_K = bd.K_en - background.K0
    sp_S = entrance_profile_interpolant(bd.theta, dev_S)
    sp_K = entrance_profile_interpolant(bd.theta, dev_K)

    aux_solver = AuxPoissonSolver(grid)
    pot_solver = PotentialSystemSolver(background, grid)

    V = PerturbationState.zeros(grid)
    increments, ratios = [], []
    converged = False
    stopped_on = "max_iter"
    rising = 0
    flat = 0
    lin_res = 0.0
    max_rhs0 = 0.0

    for k in range(1, config.max_iter + 1):
        feet = trace_feet(V.calU, V.calV, background, grid)
        calS = transport_scalar(sp_S, V.calU, V.calV, background, grid, feet=feet)
        calK = transport_scalar(sp_K, V.calU, V.calV, background, grid, feet=feet)
        bundle = assemble_rhs(V, calS, calK, bd, background, grid,
                              aux_solver=aux_solver)
        if k == 1:
            max_rhs0 = bundle.max_remainder()
        varphi, Psi, rep = pot_solver.solve(bundle.F1, bundle.F2, bundle.F3)
        lin_res = rep.residual
        calU, calV, checkPhi = recover_velocity(
            varphi,
            Psi,
            bundle.phi_aux,
            bundle.h,
            bundle.g,
            background,
            grid,
            gprime=bundle.gprime,
            phi_star=bundle.phi_star,
        )
        V_next = PerturbationState(
            calU.values, calV.values, checkPhi.values, calS, calK
        )
        if config.relaxation != 1.0:
            V_next = V.blend(V_next, config.relaxation)

        incr = V_next.diff_norm(V, grid)
        increments.append(incr)
        stop = config.tol_fp * max(sigma_p, config.eps_floor)
        if len(increments) >= 2 and increments[-2] > 0.0:
            ratio = incr / increments[-2]
            # ratios measured below ~10x the stopping threshold are
            # linear-solver noise, not contraction estimates
            if increments[-2] > 10.0 * stop:
                ratios.append(ratio)
                rising = rising + 1 if ratio >= 1.0 else 0
            flat = flat + 1 if incr > 0.5 * increments[-2] else 0
        V = V_next
        norm_V = V.norm(grid)

        if sigma_p > 0.0 and norm_V > delta:
            raise DivergenceError(
                f"iterate left the trust ball: ||V|| = {norm_V:.3e} > "
                f"delta = {delta:.3e}"
            )
        if rising >= 3:
            raise DivergenceError(
                "contraction ratio >= 1 for three consecutive iterations"
            )
        if incr <= stop:
            converged = True
            stopped_on = "tolerance"
            break
        # three consecutive non-contracting increments deep below the first
        # correction mean the iterates jitter at the linear-algebra floor
        if flat >= 3 and incr <= 1e-3 * increments[0]:
            converged = True
            stopped_on = "noise_floor"
            break

    report = SolveReport(
        iterations=len(increments),
        increments=increments,
        ratios=ratios,
        sigma_p=sigma_p,
        delta=delta,
        converged=converged,
        norm_V=V.norm(grid),
        final_linear_residual=lin_res,
        max_rhs_at_start=max_rhs0,
        stopped_on=stopped_on,
    )
    return V, report
