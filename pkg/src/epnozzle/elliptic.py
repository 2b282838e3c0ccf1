"""Sparse elliptic solvers for the curl correction and the potential system.

Two boundary value problems are discretized with second-order flux-form
finite volumes on the uniform tensor grid:

  aux Poisson   d_r(hat_r phi_r) + phi_tt = f4,
                phi_r(0,.) = 0,  phi(R,.) = 0,  phi(., +-theta0) = 0

  potential     L1(varphi, Psi) = d_r F1 + d_t F2
  system        L2(varphi, Psi) = F3
                varphi = Psi = 0 on the entrance, d_r varphi = Psi = 0 on the
                exit, d_t varphi = d_t Psi = 0 on the walls,

with L1 = d_r(a11 d_r .) + d_t(a22/hat_r d_t .) + d_r(b1 Psi) and
L2 = d_r(hat_r d_r .) + (1/hat_r) d_tt . + c1 d_r . + c2 Psi.

Every equation row is the dual-cell average of the PDE: boundary rows use
half cells whose outward face flux is the (zero) boundary datum, which keeps
the principal blocks exactly symmetric and the scheme second-order.  The
divergence-form data d_r F1 + d_t F2 is differenced with the same face
stencil (face values are node averages; faces on the outflow boundary and the
walls carry zero data, matching the weak formulation's surface terms), so F1
and F2 are never differentiated pointwise.

The angular weight of L1 is a22/hat_r rather than the bare a22: the flux of
the underlying continuity equation in the reversed polar frame is rho*V, so
the stream-potential form picks up 1/hat_r from d_t psi = hat_r * V.  All
structural properties (ellipticity, b1 = c1 cancellation) are unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import NozzleGeometry, linear_coefficients
from .errors import NonConvergedLinearSolve, SingularSystem

__all__ = [
    "Grid2D",
    "Field2D",
    "EllipticSolveReport",
    "AuxPoissonSolver",
    "PotentialSystemSolver",
    "solve_aux_poisson",
    "solve_potential_system",
    "recover_velocity",
    "coercivity_check",
    "d_r",
    "d_theta",
    "d_profile",
]

LINEAR_TOL = 1e-11      # relative residual required of every sparse solve
REFINE_TARGET = 1e-13   # refinement aims well below the contract tolerance


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid on [0, R] x [-theta0, theta0]."""

    Nr: int
    Ntheta: int
    geom: NozzleGeometry
    r: np.ndarray = field(init=False, repr=False, compare=False)
    theta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.Nr < 3 or self.Ntheta < 3:
            raise ValueError("Grid2D needs Nr, Ntheta >= 3")
        object.__setattr__(self, "r", np.linspace(0.0, self.geom.R, self.Nr))
        object.__setattr__(
            self,
            "theta",
            np.linspace(-self.geom.theta0, self.geom.theta0, self.Ntheta),
        )

    @property
    def dr(self) -> float:
        return self.geom.R / (self.Nr - 1)

    @property
    def dtheta(self) -> float:
        return 2.0 * self.geom.theta0 / (self.Ntheta - 1)

    @property
    def theta0(self) -> float:
        return self.geom.theta0

    @property
    def shape(self):
        return (self.Nr, self.Ntheta)

    @property
    def size(self) -> int:
        return self.Nr * self.Ntheta

    def hat_r(self) -> np.ndarray:
        return self.geom.hat_r(self.r)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass
class Field2D:
    """Grid function with a role tag (scalar potential, velocity, RHS, ...)."""

    values: np.ndarray
    role: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def validate(self, grid: Grid2D):
        if self.values.shape != grid.shape:
            raise ValueError(
                f"field '{self.role}' has shape {self.values.shape}, "
                f"grid expects {grid.shape}"
            )
        return self


def _values(x):
    return x.values if isinstance(x, Field2D) else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class EllipticSolveReport:
    """Linear-solve certificate: residual and boundary-condition defects."""

    factorized: bool
    residual: float            # ||Ax - b||_inf / max(||b||_inf, tiny)
    bc_defect: float           # max boundary-condition violation of the output
    unknowns: int


def d_r(f, dr):
    """2nd-order d/dr along axis 0 (central inside, one-sided at the ends).

    The boundary rows apply the central stencil to a cubic-extrapolated
    ghost value, i.e. (-4 f0 + 7 f1 - 4 f2 + f3)/(2h).  Its leading error
    +h^2/6 f''' matches the central stencil's, so differentiating the
    result again stays 2nd-order accurate across the stencil switch (the
    plain 3-point one-sided formula would leave an O(h) ring next to each
    boundary).
    """
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * dr)
    if f.shape[0] >= 4:
        out[0] = (-4.0 * f[0] + 7.0 * f[1] - 4.0 * f[2] + f[3]) / (2.0 * dr)
        out[-1] = (4.0 * f[-1] - 7.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (2.0 * dr)
    else:
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dr)
        out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dr)
    return out


def d_theta(f, dtheta):
    """2nd-order d/dtheta along axis 1 (ghost-matched one-sided ends)."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * dtheta)
    if f.shape[1] >= 4:
        out[:, 0] = (
            -4.0 * f[:, 0] + 7.0 * f[:, 1] - 4.0 * f[:, 2] + f[:, 3]
        ) / (2.0 * dtheta)
        out[:, -1] = (
            4.0 * f[:, -1] - 7.0 * f[:, -2] + 4.0 * f[:, -3] - f[:, -4]
        ) / (2.0 * dtheta)
    else:
        out[:, 0] = (-3.0 * f[:, 0] + 4.0 * f[:, 1] - f[:, 2]) / (2.0 * dtheta)
        out[:, -1] = (3.0 * f[:, -1] - 4.0 * f[:, -2] + f[:, -3]) / (2.0 * dtheta)
    return out


def d_profile(p, dtheta):
    """2nd-order derivative of a 1D theta profile."""
    return d_theta(np.asarray(p, dtype=float)[None, :], dtheta)[0]


def _cell_weights(n):
    w = np.ones(n)
    w[0] = 0.5
    w[-1] = 0.5
    return w


def _divform_entries(grid, ar_mid, a_th, dirichlet, drop_dirichlet_cols=False):
    """COO entries of d_r(ar d_r .) + d_t(a_th d_t .) over dual cells.

    ar_mid: (Nr-1,) radial coefficient at midpoints; a_th: (Nr,) angular
    coefficient per radial node (theta-independent).  Faces on Neumann
    boundaries are simply absent (zero flux); `dirichlet` is a boolean node
    mask whose rows are skipped (identity rows are added by the caller).
    Entries are generated in symmetric face pairs, so the free-node block is
    exactly symmetric.
    """
    Nr, Nt = grid.Nr, grid.Ntheta
    dr, dt = grid.dr, grid.dtheta
    wr = _cell_weights(Nr)
    wt = _cell_weights(Nt)
    rows, cols, vals = [], [], []

    def add(r, c, v, keep):
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])

    # radial faces between (i, j) and (i+1, j)
    I, J = np.meshgrid(np.arange(Nr - 1), np.arange(Nt), indexing="ij")
    k_lo = (I * Nt + J).ravel()
    k_hi = ((I + 1) * Nt + J).ravel()
    g = (wt[J] * ar_mid[I] / dr**2).ravel()
    lo_free = ~dirichlet[k_lo]
    hi_free = ~dirichlet[k_hi]
    lo_col_ok = lo_free | np.full_like(lo_free, not drop_dirichlet_cols)
    hi_col_ok = hi_free | np.full_like(hi_free, not drop_dirichlet_cols)
    add(k_lo, k_lo, -g, lo_free)
    add(k_lo, k_hi, +g, lo_free & hi_col_ok)
    add(k_hi, k_hi, -g, hi_free)
    add(k_hi, k_lo, +g, hi_free & lo_col_ok)

    # angular faces between (i, j) and (i, j+1)
    I, J = np.meshgrid(np.arange(Nr), np.arange(Nt - 1), indexing="ij")
    k_lo = (I * Nt + J).ravel()
    k_hi = (I * Nt + J + 1).ravel()
    g = (wr[I] * a_th[I] / dt**2).ravel()
    lo_free = ~dirichlet[k_lo]
    hi_free = ~dirichlet[k_hi]
    lo_col_ok = lo_free | np.full_like(lo_free, not drop_dirichlet_cols)
    hi_col_ok = hi_free | np.full_like(hi_free, not drop_dirichlet_cols)
    add(k_lo, k_lo, -g, lo_free)
    add(k_lo, k_hi, +g, lo_free & hi_col_ok)
    add(k_hi, k_hi, -g, hi_free)
    add(k_hi, k_lo, +g, hi_free & lo_col_ok)

    return (
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
    )


def _identity_entries(dirichlet):
    idx = np.nonzero(dirichlet)[0]
    return idx, idx, np.ones(idx.size)


def _flux_rhs(grid, F1, F2, dirichlet):
    """Dual-cell averages of d_r F1 + d_t F2 with zero outflow/wall data."""
    Nr, Nt = grid.Nr, grid.Ntheta
    wr = _cell_weights(Nr)[:, None]
    wt = _cell_weights(Nt)[None, :]
    F1m = 0.5 * (F1[:-1] + F1[1:])
    F2m = 0.5 * (F2[:, :-1] + F2[:, 1:])
    rpart = np.zeros(grid.shape)
    rpart[:-1] += F1m
    rpart[1:] -= F1m           # exit face (r = R) carries zero data
    tpart = np.zeros(grid.shape)
    tpart[:, :-1] += F2m
    tpart[:, 1:] -= F2m        # wall faces carry zero data (compatibility)
    rhs = (wt * rpart / grid.dr + wr * tpart / grid.dtheta).ravel()
    rhs[dirichlet] = 0.0
    return rhs


def _solve_refined(lu, A, b):
    """LU solve with iterative refinement down to the relative residual tol."""
    x = lu.solve(b)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    res = float(np.max(np.abs(A @ x - b))) / scale
    for _ in range(4):
        if not np.isfinite(res):
            raise SingularSystem("linear solve returned non-finite values")
        if res <= REFINE_TARGET:
            break
        x_new = x + lu.solve(b - A @ x)
        res_new = float(np.max(np.abs(A @ x_new - b))) / scale
        if not res_new < res:
            break
        x, res = x_new, res_new
    if not np.isfinite(res):
        raise SingularSystem("linear solve returned non-finite values")
    if res > LINEAR_TOL:
        raise NonConvergedLinearSolve(
            f"relative residual {res:.3e} exceeds {LINEAR_TOL}"
        )
    return x, res


def dump_matrix_coo(A, stream):
    """Write a sparse matrix as 'row col value' lines for offline inspection."""
    coo = A.tocoo()
    for r, c, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{r} {c} {v:.17g}\n")


class AuxPoissonSolver:
    """Factorized solver for the curl-correction Poisson problem."""

    def __init__(self, grid: Grid2D):
        self.grid = grid
        Nr, Nt = grid.Nr, grid.Ntheta
        hat_mid = grid.geom.hat_r(0.5 * (grid.r[:-1] + grid.r[1:]))
        dirichlet = np.zeros(grid.size, dtype=bool)
        idx = np.arange(grid.size).reshape(Nr, Nt)
        dirichlet[idx[-1, :]] = True   # exit
        dirichlet[idx[:, 0]] = True    # walls (Dirichlet wins at corners)
        dirichlet[idx[:, -1]] = True
        self.dirichlet = dirichlet
        rows, cols, vals = _divform_entries(
            grid, hat_mid, np.ones(Nr), dirichlet
        )
        ri, ci, vi = _identity_entries(dirichlet)
        A = sp.coo_matrix(
            (
                np.concatenate([vals, vi]),
                (np.concatenate([rows, ri]), np.concatenate([cols, ci])),
            ),
            shape=(grid.size, grid.size),
        ).tocsc()
        self.matrix = A
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularSystem(f"aux Poisson operator is singular: {exc}")

    def solve(self, f4):
        grid = self.grid
        f4v = _values(f4)
        wr = _cell_weights(grid.Nr)[:, None]
        wt = _cell_weights(grid.Ntheta)[None, :]
        b = (wr * wt * f4v).ravel()
        b[self.dirichlet] = 0.0
        x, res = _solve_refined(self.lu, self.matrix, b)
        phi = x.reshape(grid.shape)
        bc = max(
            float(np.max(np.abs(phi[-1, :]))),
            float(np.max(np.abs(phi[:, 0]))),
            float(np.max(np.abs(phi[:, -1]))),
        )
        report = EllipticSolveReport(
            factorized=True, residual=res, bc_defect=bc, unknowns=grid.size
        )
        return Field2D(phi, role="curl_correction_potential"), report


def solve_aux_poisson(f4, grid: Grid2D, solver: AuxPoissonSolver | None = None):
    """Solve d_r(hat_r phi_r) + phi_tt = f4 with the mixed BCs above.

    f4 must vanish on the walls (corner compatibility); the wall rows carry
    Dirichlet zeros so a defect there only perturbs at rounding level.
    """
    if solver is None:
        solver = AuxPoissonSolver(grid)
    return solver.solve(f4)


class PotentialSystemSolver:
    """Factorized monolithic solver for the coupled (varphi, Psi) system.

    The matrix depends only on the background and the grid, so one
    factorization serves every fixed-point iteration.
    """

    def __init__(self, background, grid: Grid2D):
        self.grid = grid
        self.background = background
        Nr, Nt = grid.Nr, grid.Ntheta
        N = grid.size
        dr = grid.dr
        r_mid = 0.5 * (grid.r[:-1] + grid.r[1:])
        hat = grid.hat_r()
        hat_mid = grid.geom.hat_r(r_mid)
        coeff_node = linear_coefficients(background, grid.r)
        coeff_mid = linear_coefficients(background, r_mid)
        idx = np.arange(N).reshape(Nr, Nt)

        d_phi = np.zeros(N, dtype=bool)
        d_phi[idx[0, :]] = True                  # entrance Dirichlet
        d_psi = np.zeros(N, dtype=bool)
        d_psi[idx[0, :]] = True
        d_psi[idx[-1, :]] = True                 # entrance and exit Dirichlet
        self.d_phi, self.d_psi = d_phi, d_psi

        # principal blocks
        a22_t = coeff_node.a22 / hat             # angular weight rho/hat_r
        rows_p, cols_p, vals_p = _divform_entries(
            grid, coeff_mid.a11, a22_t, d_phi
        )
        rows_s, cols_s, vals_s = _divform_entries(
            grid, hat_mid, 1.0 / hat, d_psi
        )

        # assemble COO triplets for the 2N x 2N system
        R, C, V = [], [], []

        def put(r, c, v):
            R.append(np.asarray(r))
            C.append(np.asarray(c))
            V.append(np.asarray(v))

        put(rows_p, cols_p, vals_p)                    # phi-phi
        put(rows_s + N, cols_s + N, vals_s)            # psi-psi

        # b1 coupling in the varphi equation: face flux b1*(Psi_lo+Psi_hi)/2
        wt = _cell_weights(Nt)
        I, J = np.meshgrid(np.arange(Nr - 1), np.arange(Nt), indexing="ij")
        k_lo = (I * Nt + J).ravel()
        k_hi = ((I + 1) * Nt + J).ravel()
        bval = (wt[J] * coeff_mid.b1[I] / (2.0 * dr)).ravel()
        lo_free = ~d_phi[k_lo]
        hi_free = ~d_phi[k_hi]
        put(k_lo[lo_free], N + k_lo[lo_free], +bval[lo_free])
        put(k_lo[lo_free], N + k_hi[lo_free], +bval[lo_free])
        put(k_hi[hi_free], N + k_lo[hi_free], -bval[hi_free])
        put(k_hi[hi_free], N + k_hi[hi_free], -bval[hi_free])

        # c1 d_r varphi and c2 Psi in the Psi equation (free psi rows only)
        wr = _cell_weights(Nr)
        I, J = np.meshgrid(np.arange(1, Nr - 1), np.arange(Nt), indexing="ij")
        k = (I * Nt + J).ravel()
        wcell = (wr[I] * wt[J]).ravel()
        cval = wcell * coeff_node.c1[I.ravel()] / (2.0 * dr)
        put(N + k, k + Nt, +cval)   # varphi at (i+1, j)
        put(N + k, k - Nt, -cval)   # varphi at (i-1, j)
        put(N + k, N + k, wcell * coeff_node.c2[I.ravel()])

        # identity rows for the essential conditions
        ri, ci, vi = _identity_entries(d_phi)
        put(ri, ci, vi)
        ri, ci, vi = _identity_entries(d_psi)
        put(ri + N, ci + N, vi)

        A = sp.coo_matrix(
            (np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
            shape=(2 * N, 2 * N),
        ).tocsc()
        self.matrix = A
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularSystem(
                f"potential system is singular (background nearly sonic?): {exc}"
            )

    def principal_block_phi(self):
        """Free-node principal operator of L1 (for symmetry diagnostics)."""
        grid = self.grid
        r_mid = 0.5 * (grid.r[:-1] + grid.r[1:])
        coeff_mid = linear_coefficients(self.background, r_mid)
        coeff_node = linear_coefficients(self.background, grid.r)
        rows, cols, vals = _divform_entries(
            grid,
            coeff_mid.a11,
            coeff_node.a22 / grid.hat_r(),
            self.d_phi,
            drop_dirichlet_cols=True,
        )
        A = sp.coo_matrix(
            (vals, (rows, cols)), shape=(grid.size, grid.size)
        ).tocsr()
        free = ~self.d_phi
        return A[free][:, free]

    def solve(self, F1, F2, F3):
        grid = self.grid
        N = grid.size
        F1v, F2v, F3v = (_values(F) for F in (F1, F2, F3))
        wr = _cell_weights(grid.Nr)[:, None]
        wt = _cell_weights(grid.Ntheta)[None, :]
        b = np.empty(2 * N)
        b[:N] = _flux_rhs(grid, F1v, F2v, self.d_phi)
        b_psi = (wr * wt * F3v).ravel()
        b_psi[self.d_psi] = 0.0
        b[N:] = b_psi
        x, res = _solve_refined(self.lu, self.matrix, b)
        varphi = x[:N].reshape(grid.shape)
        Psi = x[N:].reshape(grid.shape)
        bc = max(
            float(np.max(np.abs(varphi[0, :]))),
            float(np.max(np.abs(Psi[0, :]))),
            float(np.max(np.abs(Psi[-1, :]))),
        )
        report = EllipticSolveReport(
            factorized=True,
            residual=res,
            bc_defect=bc,
            unknowns=2 * N,
        )
        return (
            Field2D(varphi, role="stream_potential"),
            Field2D(Psi, role="electric_potential"),
            report,
        )


def solve_potential_system(
    F1, F2, F3, background, grid: Grid2D, solver: PotentialSystemSolver | None = None
):
    """Solve the homogenized coupled system for (varphi, Psi)."""
    if solver is None:
        solver = PotentialSystemSolver(background, grid)
    return solver.solve(F1, F2, F3)


def recover_velocity(
    varphi,
    Psi,
    phi,
    h,
    g,
    background,
    grid: Grid2D,
    *,
    gprime=None,
    phi_star=None,
):
    """Undo the homogenization and the curl shift to recover (calU, calV, checkPhi).

    psi = varphi + r h(theta) + g(theta) gives Ucheck = d_r psi and
    Vcheck = d_t psi / hat_r; the curl correction then yields
    calU = Ucheck - d_t phi, calV = Vcheck + d_r phi, and the electric
    perturbation is checkPhi = Psi + Phi*.

    `gprime` defaults to the discrete derivative of g; passing the exact
    r2*V_en makes the recovered entrance trace of calV reproduce V_en
    identically.  `phi_star` is the linear-in-r electric lift (zeros if
    omitted).  h is differentiated discretely so that the discrete curl of
    (calU, calV) matches the curl-correction Poisson residual exactly.
    """
    vphi = _values(varphi)
    psi_e = _values(Psi)
    phi_a = _values(phi)
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    dr, dt = grid.dr, grid.dtheta
    hat = grid.hat_r()[:, None]
    if gprime is None:
        gprime = d_profile(g, dt)
    hprime = d_profile(h, dt)
    Ucheck = d_r(vphi, dr) + h[None, :]
    rVcheck = d_theta(vphi, dt) + grid.r[:, None] * hprime[None, :] + gprime[None, :]
    Vcheck = rVcheck / hat
    calU = Ucheck - d_theta(phi_a, dt)
    calV = Vcheck + d_r(phi_a, dr)
    if phi_star is None:
        phi_star = np.zeros(grid.shape)
    checkPhi = psi_e + _values(phi_star)
    return (
        Field2D(calU, role="calU"),
        Field2D(calV, role="calV"),
        Field2D(checkPhi, role="checkPhi"),
    )


def bilinear_form(background, grid: Grid2D, xi, omega, xi2, omega2):
    """Discrete bilinear form of the weak formulation.

    Midpoint-difference quadrature of
      a11 p_r q_r + (a22/hat_r) p_t q_t + b1 P q_r
      + hat_r P_r Q_r + (1/hat_r) P_t Q_t - c1 p_r Q - c2 P Q
    over the cell faces, evaluated at ((p, P), (q, Q)) = ((xi, omega),
    (xi2, omega2)).  The b1 and c1 terms use one shared coefficient array
    and the same multiplication order, so they cancel bit-exactly in the
    quadratic form.
    """
    dr, dt = grid.dr, grid.dtheta
    r_mid = 0.5 * (grid.r[:-1] + grid.r[1:])
    cm = linear_coefficients(background, r_mid)
    cn = linear_coefficients(background, grid.r)
    hat = grid.hat_r()
    hat_mid = grid.geom.hat_r(r_mid)
    wt = _cell_weights(grid.Ntheta)[None, :]
    wr = _cell_weights(grid.Nr)[:, None]
    area = dr * dt

    def dr_face(f):
        return (f[1:] - f[:-1]) / dr

    def dt_face(f):
        return (f[:, 1:] - f[:, :-1]) / dt

    def avg_r(f):
        return 0.5 * (f[1:] + f[:-1])

    total = 0.0
    # radial-face terms (quadrature weight wt in theta)
    fr1 = dr_face(xi)
    fr2 = dr_face(xi2)
    gr1 = dr_face(omega)
    gr2 = dr_face(omega2)
    total += area * np.sum(wt * (cm.a11[:, None] * fr1 * fr2))
    total += area * np.sum(wt * (hat_mid[:, None] * gr1 * gr2))
    total += area * np.sum(wt * (cm.b1[:, None] * avg_r(omega) * fr2))
    total -= area * np.sum(wt * (cm.c1[:, None] * avg_r(omega2) * fr1))
    # angular-face terms (quadrature weight wr in r)
    ft1 = dt_face(xi)
    ft2 = dt_face(xi2)
    gt1 = dt_face(omega)
    gt2 = dt_face(omega2)
    total += area * np.sum(wr * ((cn.a22 / hat)[:, None] * ft1 * ft2))
    total += area * np.sum(wr * ((1.0 / hat)[:, None] * gt1 * gt2))
    # zeroth-order term
    total -= area * np.sum(
        wr * wt * (cn.c2[:, None] * omega * omega2)
    )
    return float(total)


def _h1_norm_sq(grid, xi, omega):
    dr, dt = grid.dr, grid.dtheta
    area = dr * dt
    wt = _cell_weights(grid.Ntheta)[None, :]
    wr = _cell_weights(grid.Nr)[:, None]
    total = area * np.sum(wr * wt * (xi * xi + omega * omega))
    for f in (xi, omega):
        total += area * np.sum(wt * ((f[1:] - f[:-1]) / dr) ** 2)
        total += area * np.sum(wr * ((f[:, 1:] - f[:, :-1]) / dt) ** 2)
    return float(total)


def apply_essential_bc(xi, omega):
    """Project a test pair onto the weak solution space (in place)."""
    xi[0, :] = 0.0
    omega[0, :] = 0.0
    omega[-1, :] = 0.0
    return xi, omega


def coercivity_check(background, grid: Grid2D, trials: int = 100, seed: int = 0):
    """Minimum Rayleigh quotient of the weak form over random test pairs.

    A positive value certifies discrete coercivity of the linearized
    system on this background.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(trials):
        xi = rng.standard_normal(grid.shape)
        omega = rng.standard_normal(grid.shape)
        apply_essential_bc(xi, omega)
        q = bilinear_form(background, grid, xi, omega, xi, omega)
        n2 = _h1_norm_sq(grid, xi, omega)
        if n2 > 0:
            best = min(best, q / n2)
    return best
