"""Forward solver for the half-line problem L(Q, A, h).

Computes the Jost solution and Jost matrix, regular and adjoint solutions,
Weyl solutions and the Weyl matrix, and the block diagnostic P comparing
two problems with the same projector A.

The outgoing solution is computed in the scaled variable
E(x) = e(x, rho) * exp(-i rho x), which stays O(1) for Im rho > 0; this
lets the solver evaluate far up the imaginary axis (rho = 400i) without
overflow.  Successive approximation of the scaled Volterra equation

    E(x) = I + (1 / 2 i rho) [e^{-2 i rho x} I2(x) - I0(x)],
    I2(x) = int_x^X e^{2 i rho t} Q E dt,   I0(x) = int_x^X Q E dt,

uses 4th-order cumulative tail quadrature, so each sweep costs O(N).
Differentiating the representation gives E'(x) = -e^{-2 i rho x} I2(x)
exactly, so no numerical differencing enters the Jost matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    BoundaryCondition,
    ConvergenceError,
    MatrixWave,
    PoleProximityError,
    PotentialGrid,
    SpectralPoint,
    apply_T,
    matnorm,
    sin_over,
    tail_integrals,
)

__all__ = [
    "Problem",
    "AsymptoticsReport",
    "solve_jost",
    "jost_matrix",
    "solve_regular",
    "solve_adjoint",
    "weyl_matrix",
    "weyl_solution",
    "adjoint_weyl_solution",
    "adjoint_weyl_matrix",
    "check_m_equals_mstar",
    "scan_jost_zeros",
    "p_matrix_diagnostic",
    "omega",
    "kappa",
    "transpose_problem",
    "fit_decay_order",
    "jost_expansion_residuals",
    "jost_matrix_expansion_residuals",
    "weyl_expansion_residuals",
    "asymptotics_report",
    "zero_potential",
]

COND_LIMIT = 1e10
JOST_TOL = 1e-12
JOST_MAX_ITER = 50


@dataclass(frozen=True)
class Problem:
    """A potential together with projector-form boundary data."""

    potential: PotentialGrid
    bc: BoundaryCondition

    def __post_init__(self):
        if self.potential.dim != self.bc.dim:
            raise ValueError(
                f"potential dim {self.potential.dim} != boundary dim {self.bc.dim}"
            )

    @property
    def dim(self) -> int:
        return self.bc.dim


def zero_potential(n: int, x_max: float = 1.0, nodes: int = 201) -> PotentialGrid:
    """Q identically zero; handy model and test fixture."""
    x = np.linspace(0.0, x_max, nodes)
    return PotentialGrid(x_nodes=x, values=np.zeros((nodes, n, n), dtype=complex))


def transpose_problem(problem: Problem) -> Problem:
    """The problem with Q, A, h transposed.

    The adjoint equation -Z'' + Z Q = lambda Z is the transpose of the
    direct equation with Q -> Q^T, so every adjoint object is obtained by
    transposing the corresponding object of this problem.
    """
    pot = PotentialGrid(
        x_nodes=problem.potential.x_nodes,
        values=np.transpose(problem.potential.values, (0, 2, 1)),
    )
    bc = BoundaryCondition(A=problem.bc.A.T, h=problem.bc.h.T)
    return Problem(potential=pot, bc=bc)


# ---------------------------------------------------------------------------
# Jost solution
# ---------------------------------------------------------------------------

def _jost_scaled(problem: Problem, pt: SpectralPoint, tol=JOST_TOL,
                 max_iter=JOST_MAX_ITER):
    """Scaled Jost solution E = e * exp(-i rho x) and E' on the grid."""
    rho = pt.rho
    pot = problem.potential
    x = pot.x_nodes
    Q = pot.values
    n = pot.dim
    N = x.size
    dx = pot.dx
    eye = np.eye(n, dtype=complex)

    if not np.any(Q):
        E = np.broadcast_to(eye, (N, n, n)).copy()
        return E, np.zeros((N, n, n), dtype=complex)

    E = np.broadcast_to(eye, (N, n, n)).copy()
    last = np.inf
    for _ in range(max_iter):
        P = Q @ E
        J2 = _scaled_tail_integrals(P, rho, dx)
        I0 = tail_integrals(P, dx)
        E_new = eye + (J2 - I0) / (2j * rho)
        last = matnorm(E_new - E)
        E = E_new
        if last <= tol:
            break
    else:
        raise ConvergenceError(
            f"Jost iteration did not reach {tol} in {max_iter} sweeps "
            f"(last update {last:.3e})",
            residual=last,
        )
    Eprime = -_scaled_tail_integrals(Q @ E, rho, dx)
    return E, Eprime


def _scaled_tail_integrals(g, rho: complex, dx: float):
    """J_i = int_{x_i}^{x_N} exp(2 i rho (t - x_i)) g(t) dt for sampled g.

    The kernel is pre-scaled to the left endpoint so |exp(.)| <= 1 for
    Im rho >= 0 and nothing overflows at large |rho|.  Backward recurrence
    J_i = a J_{i+1} + trapezoid step with a = exp(2 i rho dx), plus the
    trapezoid endpoint correction (dx^2/12)(f'(x_i) - scaled f'(x_N)) with
    f = exp(2 i rho (t - x_i)) g, which restores 4th-order accuracy.
    """
    g = np.asarray(g, dtype=complex)
    N = g.shape[0]
    a = np.exp(2j * rho * dx)
    J = np.zeros_like(g)
    for i in range(N - 2, -1, -1):
        J[i] = a * J[i + 1] + 0.5 * dx * (g[i] + a * g[i + 1])
    gp = np.gradient(g, dx, axis=0, edge_order=2)
    x_rel = np.arange(N)[::-1] * dx  # x_N - x_i
    decay = np.exp(2j * rho * x_rel).reshape((N,) + (1,) * (g.ndim - 1))
    corr_lo = gp + 2j * rho * g
    corr_hi = decay * (gp[-1] + 2j * rho * g[-1])
    J += (dx * dx / 12.0) * (corr_lo - corr_hi)
    J[-1] = 0.0
    return J


def solve_jost(problem: Problem, pt: SpectralPoint, tol=JOST_TOL,
               max_iter=JOST_MAX_ITER) -> MatrixWave:
    """Jost solution e(., rho) and e'(., rho) on the potential grid.

    Q is treated as zero beyond x_max, where e = exp(i rho x) I holds
    exactly.  Raises ConvergenceError if the successive approximations do
    not settle within the sweep budget.
    """
    rho = pt.rho
    E, Eprime = _jost_scaled(problem, pt, tol=tol, max_iter=max_iter)
    x = problem.potential.x_nodes
    phase = np.exp(1j * rho * x)[:, None, None]
    value = E * phase
    derivative = (1j * rho * E + Eprime) * phase
    return MatrixWave(grid=x, value=value, derivative=derivative, at=pt)


def jost_matrix(problem: Problem, pt: SpectralPoint) -> np.ndarray:
    """Jost matrix J(rho) = T(e(., rho))."""
    E, Eprime = _jost_scaled(problem, pt)
    e0 = E[0]
    e0p = 1j * pt.rho * E[0] + Eprime[0]
    return apply_T(problem.bc, e0, e0p)


def omega(problem: Problem, x: float, rho: complex) -> np.ndarray:
    """Tail transform omega(x, rho) = (1/2) int_x^X Q(t) e^{2 i rho (t-x)} dt."""
    pot = problem.potential
    i = pot.index_of(x)
    return 0.5 * _scaled_tail_integrals(pot.values[i:], rho, pot.dx)[0]


def kappa(problem: Problem, rho: complex) -> np.ndarray:
    """kappa(rho) = (A_perp - A) omega(0, rho)."""
    return (problem.bc.A_perp - problem.bc.A) @ omega(problem, 0.0, rho)


# ---------------------------------------------------------------------------
# Regular solutions (exponential midpoint stepper)
# ---------------------------------------------------------------------------

def _propagators(pot: PotentialGrid, lam: complex):
    """Per-step propagator blocks for Y'' = (Q - lambda) Y.

    Q is frozen at the step midpoint and the step map is the exact
    exponential of the frozen system, so the phase accuracy is uniform in
    |lambda| (no error growth at large |rho|, unlike a fixed-step
    Runge-Kutta scheme).
    """
    n = pot.dim
    dx = pot.dx
    Qm = 0.5 * (pot.values[:-1] + pot.values[1:])
    if n == 1:
        c = (lam - Qm[:, 0, 0]).astype(complex)
        sq = np.sqrt(c)
        cosb = np.cos(sq * dx)
        sincb = sin_over(sq, dx)
        return cosb[:, None, None], sincb[:, None, None], (-c * sincb)[:, None, None]
    eye = np.eye(n)
    cosb = np.empty((Qm.shape[0], n, n), dtype=complex)
    sincb = np.empty_like(cosb)
    csinb = np.empty_like(cosb)
    for k in range(Qm.shape[0]):
        C = lam * eye - Qm[k]
        big = np.zeros((2 * n, 2 * n), dtype=complex)
        big[:n, n:] = eye
        big[n:, :n] = -C
        P = scipy.linalg.expm(big * dx)
        cosb[k] = P[:n, :n]
        sincb[k] = P[:n, n:]
        csinb[k] = P[n:, :n]
    return cosb, sincb, csinb


def _march(pot: PotentialGrid, lam: complex, Y0, Y0p):
    """Initial-value march of an (n x m) solution block across the grid."""
    N = pot.x_nodes.size
    n = pot.dim
    m = Y0.shape[1]
    val = np.empty((N, n, m), dtype=complex)
    der = np.empty((N, n, m), dtype=complex)
    val[0] = Y0
    der[0] = Y0p
    cosb, sincb, csinb = _propagators(pot, lam)
    for k in range(N - 1):
        val[k + 1] = cosb[k] @ val[k] + sincb[k] @ der[k]
        der[k + 1] = csinb[k] @ val[k] + cosb[k] @ der[k]
    return val, der


def solve_regular(problem: Problem, pt: SpectralPoint):
    """Regular solutions (phi, S) fixed by their data at x = 0:

    phi(0) = A, phi'(0) = A_perp + h;  S(0) = -A_perp, S'(0) = A.
    Both are propagated together through the same step maps.
    """
    bc = problem.bc
    pot = problem.potential
    n = bc.dim
    Y0 = np.hstack([bc.A, -bc.A_perp])
    Y0p = np.hstack([bc.A_perp + bc.h, bc.A])
    val, der = _march(pot, pt.lam, Y0, Y0p)
    phi = MatrixWave(grid=pot.x_nodes, value=val[:, :, :n],
                     derivative=der[:, :, :n], at=pt)
    S = MatrixWave(grid=pot.x_nodes, value=val[:, :, n:],
                   derivative=der[:, :, n:], at=pt)
    return phi, S


def _transpose_wave(w: MatrixWave, pt: SpectralPoint) -> MatrixWave:
    return MatrixWave(
        grid=w.grid,
        value=np.transpose(w.value, (0, 2, 1)),
        derivative=np.transpose(w.derivative, (0, 2, 1)),
        at=pt,
    )


def solve_adjoint(problem: Problem, pt: SpectralPoint):
    """Adjoint solutions (phi*, S*, e*) of -Z'' + Z Q = lambda Z,

    with phi*(0) = A, phi*'(0) = A_perp + h, S*(0) = -A_perp, S*'(0) = A.
    Computed by transposition of the direct solver."""
    tp = transpose_problem(problem)
    phi_t, S_t = solve_regular(tp, pt)
    e_t = solve_jost(tp, pt)
    return (_transpose_wave(phi_t, pt), _transpose_wave(S_t, pt),
            _transpose_wave(e_t, pt))


# ---------------------------------------------------------------------------
# Weyl objects
# ---------------------------------------------------------------------------

def _checked_inv(J, cond_limit=COND_LIMIT):
    cond = np.linalg.cond(J, 1)
    if not np.isfinite(cond) or cond > cond_limit:
        raise PoleProximityError(
            f"Jost matrix nearly singular (cond = {cond:.3e})", cond=cond
        )
    return np.linalg.inv(J)


def weyl_matrix(problem: Problem, pt: SpectralPoint,
                cond_limit=COND_LIMIT) -> np.ndarray:
    """Weyl matrix M(lambda) = [A e(0) + A_perp e'(0)] J(rho)^{-1}."""
    E, Eprime = _jost_scaled(problem, pt)
    e0 = E[0]
    e0p = 1j * pt.rho * E[0] + Eprime[0]
    J = apply_T(problem.bc, e0, e0p)
    Jinv = _checked_inv(J, cond_limit)
    return (problem.bc.A @ e0 + problem.bc.A_perp @ e0p) @ Jinv


def weyl_solution(problem: Problem, pt: SpectralPoint, check_tol=None,
                  cond_limit=COND_LIMIT) -> MatrixWave:
    """Weyl solution Phi(x, lambda) = e(x, rho) J(rho)^{-1}.

    With check_tol set, asserts T(Phi) = I and the decomposition
    Phi = S + phi M to that tolerance (both hold exactly in the continuum;
    discretization noise grows with |rho| * dx, so the check is opt-in).
    """
    e = solve_jost(problem, pt)
    J = apply_T(problem.bc, e.value[0], e.derivative[0])
    Jinv = _checked_inv(J, cond_limit)
    Phi = MatrixWave(grid=e.grid, value=e.value @ Jinv,
                     derivative=e.derivative @ Jinv, at=pt)
    if check_tol is not None:
        tres = matnorm(apply_T(problem.bc, Phi.value[0], Phi.derivative[0])
                       - np.eye(problem.dim))
        M = (problem.bc.A @ e.value[0] + problem.bc.A_perp @ e.derivative[0]) @ Jinv
        phi, S = solve_regular(problem, pt)
        dres = matnorm(Phi.value - S.value - phi.value @ M)
        if tres > check_tol or dres > check_tol:
            raise PoleProximityError(
                f"Weyl solution postcondition failed: |T(Phi)-I| = {tres:.3e}, "
                f"|Phi - S - phi M| = {dres:.3e}"
            )
    return Phi


def adjoint_weyl_solution(problem: Problem, pt: SpectralPoint,
                          cond_limit=COND_LIMIT) -> MatrixWave:
    """Adjoint Weyl solution Phi* = (T*(e*))^{-1} e*."""
    tp = transpose_problem(problem)
    Phi_t = weyl_solution(tp, pt, cond_limit=cond_limit)
    return _transpose_wave(Phi_t, pt)


def adjoint_weyl_matrix(problem: Problem, pt: SpectralPoint,
                        cond_limit=COND_LIMIT) -> np.ndarray:
    """Adjoint Weyl matrix M*(lambda) = Phi*(0) A + Phi*'(0) A_perp."""
    Phi_s = adjoint_weyl_solution(problem, pt, cond_limit=cond_limit)
    return Phi_s.value[0] @ problem.bc.A + Phi_s.derivative[0] @ problem.bc.A_perp


def check_m_equals_mstar(problem: Problem, pts) -> float:
    """Max norm of M(lambda) - M*(lambda) over the given points."""
    worst = 0.0
    for pt in pts:
        M = weyl_matrix(problem, pt)
        Ms = adjoint_weyl_matrix(problem, pt)
        worst = max(worst, matnorm(M - Ms))
    return worst


# ---------------------------------------------------------------------------
# Jost-zero scan
# ---------------------------------------------------------------------------

def _detJ(problem, rho):
    return np.linalg.det(jost_matrix(problem, SpectralPoint(rho)))


def scan_jost_zeros(problem: Problem, radius: float, grid_density: int = 24,
                    default_min: float = 1.0):
    """Scan Omega for zeros of det J(rho) up to |rho| = radius.

    Evaluates |det J| on a polar grid, refines local minima by a secant
    iteration, and keeps refined points with |det J| < 1e-6.  Returns
    (zeros as lambda values, suggested r0) where
    r0 = 1.5 * max(max|rho_0|^2, default_min).  An empty list is a valid
    outcome; the zero set is always bounded.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    radii = np.linspace(radius / grid_density, radius, grid_density)
    angles = np.linspace(0.0, np.pi, grid_density + 1)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    grid = rr * np.exp(1j * aa)
    # keep grid points inside Omega (tiny imaginary dust from exp is fine)
    grid = np.where(grid.imag < 0, grid.real + 0j, grid)
    vals = np.empty(grid.shape)
    for idx in np.ndindex(grid.shape):
        vals[idx] = abs(_detJ(problem, grid[idx]))

    cands = []
    ni, nj = grid.shape
    for i in range(ni):
        for j in range(nj):
            v = vals[i, j]
            neigh = [vals[a, b]
                     for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
                     if 0 <= a < ni and 0 <= b < nj]
            if v <= min(neigh):
                cands.append(grid[i, j])

    zeros = []
    step = radius / grid_density
    for rho0 in cands:
        rho = _refine_zero(problem, rho0, step)
        if rho is None:
            continue
        try:
            ok = abs(_detJ(problem, rho)) < 1e-6
        except Exception:
            continue
        # rho = 0 sits on the boundary of the domain, not inside it
        if ok and abs(rho) > 1e-8 and all(abs(rho - z) > 1e-6 for z in zeros):
            zeros.append(rho)

    lam_zeros = [z * z for z in zeros]
    if zeros:
        r0 = 1.5 * max(max(abs(z) ** 2 for z in zeros), default_min)
    else:
        r0 = 1.5 * default_min
    return lam_zeros, r0


def _refine_zero(problem, rho0, step, iters=40):
    """Secant iteration on det J from a starting guess; None on escape."""
    z0, z1 = complex(rho0), complex(rho0) + step * 1e-2
    try:
        f0, f1 = _detJ(problem, z0), _detJ(problem, z1)
    except Exception:
        return None
    for _ in range(iters):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        if z2.imag < 0:
            if z2.imag < -1e-8:
                return None
            z2 = complex(z2.real, 0.0)
        if z2 == 0:
            return None
        z0, f0 = z1, f1
        z1 = z2
        try:
            f1 = _detJ(problem, z1)
        except Exception:
            return None
        if abs(z1 - z0) < 1e-12:
            break
    return z1


# ---------------------------------------------------------------------------
# P-matrix diagnostic
# ---------------------------------------------------------------------------

def p_matrix_diagnostic(problem: Problem, model: Problem, pt: SpectralPoint,
                        x: float):
    """Block diagnostic P(x, lambda) between two problems sharing A:

        P_j1 = phi^(j-1) Phi~*' - Phi^(j-1) phi~*',
        P_j2 = Phi^(j-1) phi~*  - phi^(j-1) Phi~*,

    where phi, Phi belong to `problem` and the starred objects are the
    adjoint regular / adjoint Weyl solutions of `model`.
    """
    if matnorm(problem.bc.A - model.bc.A) > 1e-10:
        raise ValueError("P diagnostic requires identical projectors A")
    phi, _ = solve_regular(problem, pt)
    Phi = weyl_solution(problem, pt)
    phi_s, _, _ = solve_adjoint(model, pt)
    Phi_s = adjoint_weyl_solution(model, pt)
    i = phi.index_of(x)

    P11 = phi.value[i] @ Phi_s.derivative[i] - Phi.value[i] @ phi_s.derivative[i]
    P21 = phi.derivative[i] @ Phi_s.derivative[i] - Phi.derivative[i] @ phi_s.derivative[i]
    P12 = Phi.value[i] @ phi_s.value[i] - phi.value[i] @ Phi_s.value[i]
    P22 = Phi.derivative[i] @ phi_s.value[i] - phi.derivative[i] @ Phi_s.value[i]
    return P11, P12, P21, P22


# ---------------------------------------------------------------------------
# Asymptotic expansion residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticsReport:
    """Residual norms of an asymptotic expansion along a probe sequence."""

    probes: tuple
    residuals: tuple
    order: float

    def __post_init__(self):
        if len(self.probes) != len(self.residuals):
            raise ValueError("one residual per probe point required")


def fit_decay_order(rho_abs, residuals) -> float:
    """Least-squares slope of log(residual) against log|rho|, negated.

    An order of 2.0 means the residuals fall off like 1/|rho|^2.
    """
    r = np.asarray(residuals, dtype=float)
    a = np.asarray(rho_abs, dtype=float)
    mask = r > 0
    slope = np.polyfit(np.log(a[mask]), np.log(r[mask]), 1)[0]
    return float(-slope)


def jost_expansion_residuals(problem: Problem, probes, derivative=False):
    """Residual of the two-term large-|rho| expansion of e (or of e')."""
    out = []
    eye = np.eye(problem.dim)
    w0 = omega(problem, 0.0, 0.0)
    for pt in probes:
        rho = pt.rho
        E, Eprime = _jost_scaled(problem, pt)
        wr = omega(problem, 0.0, rho)
        if derivative:
            lead = (1j * rho * E[0] + Eprime[0]) / (1j * rho)
            expansion = eye - (w0 + wr) / (1j * rho)
        else:
            lead = E[0]
            expansion = eye + (-w0 + wr) / (1j * rho)
        out.append(matnorm(lead - expansion))
    return out


def jost_matrix_expansion_residuals(problem: Problem, probes):
    """Residual of J0(rho)^{-1} J(rho) against its two-term expansion."""
    out = []
    A, Ap, h = problem.bc.A, problem.bc.A_perp, problem.bc.h
    eye = np.eye(problem.dim)
    w0 = omega(problem, 0.0, 0.0)
    for pt in probes:
        rho = pt.rho
        J = jost_matrix(problem, pt)
        J0inv = A / (1j * rho) - Ap
        expansion = eye - (h + w0) / (1j * rho) + kappa(problem, rho) / (1j * rho)
        out.append(matnorm(J0inv @ J - expansion))
    return out


def weyl_expansion_residuals(problem: Problem, probes):
    """Weighted residual of the Weyl-matrix expansion.

    Compares (A + i rho A_perp)^{-1} M (i rho A - A_perp) against
    I + h/(i rho) - 2 kappa/(i rho); the sandwich removes the unbounded
    outer factors so the remainder decays cleanly.
    """
    out = []
    A, Ap, h = problem.bc.A, problem.bc.A_perp, problem.bc.h
    eye = np.eye(problem.dim)
    for pt in probes:
        rho = pt.rho
        M = weyl_matrix(problem, pt)
        left_inv = A + Ap / (1j * rho)       # = (A + i rho A_perp)^{-1}
        right = 1j * rho * A - Ap
        inner = left_inv @ M @ right
        expansion = eye + h / (1j * rho) - 2.0 * kappa(problem, rho) / (1j * rho)
        out.append(matnorm(inner - expansion))
    return out


def asymptotics_report(problem: Problem, probes, which: str) -> AsymptoticsReport:
    """Residual report for one expansion: 'jost', 'jost_derivative',

    'jost_matrix' or 'weyl', with the fitted decay order attached."""
    probes = tuple(probes)
    if which == "jost":
        res = jost_expansion_residuals(problem, probes)
    elif which == "jost_derivative":
        res = jost_expansion_residuals(problem, probes, derivative=True)
    elif which == "jost_matrix":
        res = jost_matrix_expansion_residuals(problem, probes)
    elif which == "weyl":
        res = weyl_expansion_residuals(problem, probes)
    else:
        raise ValueError(f"unknown expansion {which!r}")
    order = fit_decay_order([abs(p.rho) for p in probes], res)
    return AsymptoticsReport(probes=probes, residuals=tuple(res), order=order)
