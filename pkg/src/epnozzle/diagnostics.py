"""Nonlinear residuals and conservation diagnostics on total fields.

Residuals certify the computed solution against the full polar system in the
reversed coordinate (continuity in Bernoulli-closed form, the scaled Poisson
equation, the vorticity relation and the two transport laws), independently
of the decomposition bookkeeping used to produce it.  All derivatives are
2nd-order central differences at interior nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .background import BackgroundState, _cumquad4
from .core import density_from_bernoulli
from .elliptic import Grid2D
from .errors import DivergenceError, EPNozzleError
from .iteration import (
    BoundaryData,
    BumpAmplitudes,
    PerturbationState,
    SolverConfig,
    compute_sigma,
    fixed_point_solve,
    make_bump_boundary_data,
)
from .transport import trace_feet

__all__ = [
    "TotalFields",
    "ResidualReport",
    "total_fields",
    "nonlinear_residual",
    "conservation_report",
    "stability_sweep",
]


@dataclass
class TotalFields:
    """Primitive total fields (background plus perturbation) on the grid."""

    rho: np.ndarray
    U: np.ndarray
    V: np.ndarray
    P: np.ndarray
    Phi: np.ndarray
    S: np.ndarray
    K: np.ndarray

    def mach(self, gamma) -> np.ndarray:
        csq = gamma * np.exp(self.S) * self.rho ** (gamma - 1.0)
        return np.sqrt((self.U**2 + self.V**2) / csq)


def total_fields(
    state: PerturbationState, background: BackgroundState, grid: Grid2D
) -> TotalFields:
    """Assemble total fields; density comes from the Bernoulli closure."""
    g = background.gas.gamma
    r = grid.r
    S = background.S0 + state.calS
    K = background.K0 + state.calK
    U = background.U(r)[:, None] + state.calU
    V = state.calV
    Phi = background.Phi(r)[:, None] + state.checkPhi
    rho = density_from_bernoulli(S, K, U, V, Phi, g, vacuum_scale=background.K0)
    P = np.exp(S) * rho**g
    return TotalFields(rho=rho, U=U, V=V, P=P, Phi=Phi, S=S, K=K)


def _norms(res, grid):
    interior = res[1:-1, 1:-1]
    l2 = float(np.sqrt(np.sum(interior**2) * grid.dr * grid.dtheta))
    return {"max": float(np.max(np.abs(interior))), "l2": l2}


@dataclass
class ResidualReport:
    """Discrete residual norms of the five-equation system."""

    continuity_res: dict
    vorticity_res: dict
    entropy_transport_res: dict
    bernoulli_transport_res: dict
    poisson_res: dict
    dr: float
    dtheta: float

    def to_json(self, **extra) -> str:
        payload = asdict(self)
        payload.update(extra)
        return json.dumps(payload, indent=2)

    def max_norms(self):
        return {
            "continuity": self.continuity_res["max"],
            "vorticity": self.vorticity_res["max"],
            "entropy_transport": self.entropy_transport_res["max"],
            "bernoulli_transport": self.bernoulli_transport_res["max"],
            "poisson": self.poisson_res["max"],
        }


def nonlinear_residual(
    fields: TotalFields, background: BackgroundState, grid: Grid2D, b=None
) -> ResidualReport:
    """Evaluate the five equations on total fields at interior nodes.

    Requires strictly positive density and nonvanishing radial velocity.
    `b` is the background-charge field entering the Poisson equation
    (defaults to the constant b0).
    """
    if np.any(fields.rho <= 0.0):
        raise ValueError("residual evaluation requires rho > 0")
    if np.min(np.abs(fields.U)) <= 0.0:
        raise ValueError("residual evaluation requires U != 0")
    g = background.gas.gamma
    dr, dt = grid.dr, grid.dtheta
    hat = grid.hat_r()[:, None]
    if b is None:
        b = background.gas.b0

    def Dr(f):
        out = np.zeros_like(f)
        out[1:-1] = (f[2:] - f[:-2]) / (2.0 * dr)
        return out

    def Dt(f):
        out = np.zeros_like(f)
        out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * dt)
        return out

    def Drr(f):
        out = np.zeros_like(f)
        out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dr**2
        return out

    def Dtt(f):
        out = np.zeros_like(f)
        out[:, 1:-1] = (f[:, 2:] - 2.0 * f[:, 1:-1] + f[:, :-2]) / dt**2
        return out

    rho, U, V, Phi, S, K = (
        fields.rho,
        fields.U,
        fields.V,
        fields.Phi,
        fields.S,
        fields.K,
    )
    res_cont = Dr(hat * rho * U) + Dt(rho * V)
    res_poi = hat * Drr(Phi) - Dr(Phi) + Dtt(Phi) / hat - hat * (rho - b)
    res_vort = U * (hat * Dr(V) - V - Dt(U)) - (
        np.exp(S) * rho ** (g - 1.0) / (g - 1.0) * Dt(S) - Dt(K)
    )
    res_K = U * Dr(K) + V / hat * Dt(K)
    res_S = U * Dr(S) + V / hat * Dt(S)

    return ResidualReport(
        continuity_res=_norms(res_cont, grid),
        vorticity_res=_norms(res_vort, grid),
        entropy_transport_res=_norms(res_S, grid),
        bernoulli_transport_res=_norms(res_K, grid),
        poisson_res=_norms(res_poi, grid),
        dr=dr,
        dtheta=dt,
    )


def conservation_report(
    fields: TotalFields, background: BackgroundState, grid: Grid2D
) -> dict:
    """Cross-sectional mass flux drift, streamline invariance and wall fidelity."""
    hat = grid.hat_r()[:, None]
    integrand = hat * fields.rho * fields.U
    Q = np.array(
        [_cumquad4(integrand[i], grid.dtheta)[-1] for i in range(grid.Nr)]
    )
    drift = float(np.max(np.abs(Q - Q[0])) / abs(Q[0]))

    # invariance of S and K along streamlines of the total velocity
    Ubar = background.U(grid.r)[:, None]
    feet = trace_feet(fields.U - Ubar, fields.V, background, grid)
    S_foot = np.vstack(
        [np.interp(feet[i], grid.theta, fields.S[0]) for i in range(grid.Nr)]
    )
    K_foot = np.vstack(
        [np.interp(feet[i], grid.theta, fields.K[0]) for i in range(grid.Nr)]
    )
    s_dev = float(np.max(np.abs(fields.S - S_foot)))
    k_dev = float(np.max(np.abs(fields.K - K_foot)))

    dphi_wall = (
        np.abs(
            -3.0 * fields.Phi[:, 0] + 4.0 * fields.Phi[:, 1] - fields.Phi[:, 2]
        )
        / (2.0 * grid.dtheta),
        np.abs(
            3.0 * fields.Phi[:, -1] - 4.0 * fields.Phi[:, -2] + fields.Phi[:, -3]
        )
        / (2.0 * grid.dtheta),
    )
    return {
        "mass_flux_drift": drift,
        "Q_entrance": float(Q[0]),
        "S_streamline_dev": s_dev,
        "K_streamline_dev": k_dev,
        "wall_V_max": float(np.max(np.abs(fields.V[:, [0, -1]]))),
        "wall_dPhi_dtheta_max": float(max(np.max(dphi_wall[0]), np.max(dphi_wall[1]))),
    }


def stability_sweep(
    amplitudes,
    background: BackgroundState,
    grid: Grid2D,
    config: SolverConfig = SolverConfig(),
    base: BumpAmplitudes | None = None,
) -> list:
    """Solve at each amplitude scale and tabulate the linear response.

    Each row records (amplitude, sigma_p, ||V||, ||V||/sigma_p, iterations,
    terminal contraction ratio, status).  Rows that diverge are marked
    'failed' and the sweep continues.
    """
    if base is None:
        base = BumpAmplitudes(
            v_en=1.0, phi_en=1.0, k_en=1.0, s_en=1.0, phi_ex=1.0, p_ex=1.0,
            b=0.5,
        )
    rows = []
    for amp in amplitudes:
        bd = make_bump_boundary_data(base.scaled(amp), background, grid)
        sigma_p = compute_sigma(bd, background)
        row = {
            "amplitude": float(amp),
            "sigma_p": sigma_p,
            "norm_V": float("nan"),
            "response_ratio": float("nan"),
            "iterations": 0,
            "terminal_ratio": float("nan"),
            "status": "ok",
        }
        try:
            V, rep = fixed_point_solve(bd, background, grid, config)
            row["norm_V"] = rep.norm_V
            row["iterations"] = rep.iterations
            row["terminal_ratio"] = rep.terminal_ratio()
            row["response_ratio"] = (
                rep.norm_V / sigma_p if sigma_p > 0 else 0.0
            )
            if not rep.converged:
                row["status"] = "not_converged"
        except (DivergenceError, EPNozzleError) as exc:
            row["status"] = f"failed: {type(exc).__name__}"
        rows.append(row)

    ratios = [
        r["response_ratio"]
        for r in rows
        if r["status"] == "ok" and r["sigma_p"] > 0
    ]
    if ratios:
        spread = (max(ratios) - min(ratios)) / max(ratios)
        for r in rows:
            r["response_spread"] = spread
            r["linear_response_ok"] = bool(spread <= 0.25)
    return rows
