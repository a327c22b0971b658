"""Reconstruction of (Q, A, h) from Weyl-matrix samples on a contour.

Pipeline: read the projector A off the large-|rho| tail of M, take the
zero model (Q = 0, h = 0, same A), assemble the linear integral equation

    phi~(x, lam) = phi(x, lam) + (1/2 pi i) int_gamma phi(x, mu) r~(x, lam, mu) d mu,
    r~(x, lam, mu) = (M(mu) - M~(mu)) D~(x, lam, mu),

discretize it by collocation at the quadrature nodes (Nystrom), solve for
phi(x, .) at every x, and extract Q and h from the recovered solution.

The unknown multiplies the kernel from the left, so the discrete system
acts on transposed blocks.  Unknowns are equilibrated with the weight
A + i rho A_perp (bounded on the contour for the exact solution), which
keeps the system well scaled along the unbounded cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .contour import Contour, ContourNode, _param_weights
from .core import (
    DataQualityError,
    PotentialGrid,
    ReconstructionError,
    SpectralPoint,
    lambda_to_point,
    matnorm,
    prefix_integrals,
    sin_over,
    sinc,
)
from .forward import Problem, solve_adjoint, solve_regular, weyl_matrix

__all__ = [
    "WeylData",
    "MainEquationSolution",
    "ReconstructionResult",
    "InvertConfig",
    "model_weyl",
    "model_phi",
    "extract_A",
    "model_D",
    "problem_D",
    "kernel_rtilde",
    "solve_main_equation",
    "nystrom_phi_at",
    "main_equation_residual",
    "closure_residual",
    "recover_potential",
    "invert",
    "generate_weyl_data",
]


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylData:
    """Weyl-matrix samples on a contour plus large-|rho| tail samples."""

    contour: Contour
    M_samples: np.ndarray              # (K, n, n)
    tail_samples: tuple                # ((SpectralPoint, matrix), ...)

    def __post_init__(self):
        M = np.asarray(self.M_samples, dtype=complex)
        if M.shape[0] != len(self.contour):
            raise ValueError("one M sample per contour node required")
        if M.ndim != 3 or M.shape[1] != M.shape[2]:
            raise ValueError(f"M samples must be (K, n, n), got {M.shape}")
        tail = tuple(sorted(self.tail_samples, key=lambda t: abs(t[0].rho)))
        object.__setattr__(self, "M_samples", M)
        object.__setattr__(self, "tail_samples", tail)

    @property
    def dim(self) -> int:
        return self.M_samples.shape[1]


@dataclass(frozen=True)
class MainEquationSolution:
    """Recovered phi(x, .) at the contour nodes for one x."""

    x: float
    phi_nodes: np.ndarray         # (K, n, n)
    phi_tilde_nodes: np.ndarray   # (K, n, n)

    def __post_init__(self):
        if self.phi_nodes.shape != self.phi_tilde_nodes.shape:
            raise ValueError("phi and phi~ node arrays must have equal shapes")


@dataclass(frozen=True)
class ReconstructionResult:
    """Recovered boundary data and potential, with residual diagnostics."""

    A: np.ndarray
    h: np.ndarray
    Q: PotentialGrid
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InvertConfig:
    """Knobs of the inversion pipeline.

    lambda_probes are the energies at which Q is read off the recovered
    solution; they should avoid the positive real axis.

    passes > 1 enables the self-consistent tail extension: the first
    reconstruction supplies an asymptotic model of the kernel beyond the
    data truncation radius (out to tail_extension_factor * sqrt(R) in
    rho), which enters later passes as a Born-approximated source term.
    This sharpens the band limit of the recovered Q without growing the
    linear system.
    """

    x_max: float
    x_nodes: int
    lambda_probes: tuple = (-2.0, -5.0)
    phi_cond_limit: float = 1e8
    system_cond_limit: float = 1e12
    passes: int = 2
    tail_extension_factor: float = 7.0

    def __post_init__(self):
        if self.x_nodes < 3 or self.x_nodes % 2 == 0:
            raise ValueError("x_nodes must be odd and >= 3")
        if self.x_max <= 0:
            raise ValueError("x_max must be positive")
        if len(self.lambda_probes) < 2:
            raise ValueError("need at least two lambda probes")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if self.tail_extension_factor < 1.0:
            raise ValueError("tail_extension_factor must be >= 1")


# ---------------------------------------------------------------------------
# Zero-model closed forms
# ---------------------------------------------------------------------------

def model_weyl(A, pt: SpectralPoint) -> np.ndarray:
    """Weyl matrix of the zero model: M~ = A/(i rho) - i rho A_perp."""
    A = np.asarray(A, dtype=complex)
    Ap = np.eye(A.shape[0]) - A
    rho = pt.rho
    return A / (1j * rho) - 1j * rho * Ap


def model_phi(A, x, pt: SpectralPoint):
    """Zero-model regular solution phi~ and its x-derivative.

    phi~(x) = A cos(rho x) + A_perp sin(rho x)/rho.
    """
    A = np.asarray(A, dtype=complex)
    Ap = np.eye(A.shape[0]) - A
    rho = pt.rho
    x = np.asarray(x)
    if x.ndim:
        cos = np.cos(rho * x)[:, None, None]
        sin = np.sin(rho * x)[:, None, None]
        sov = np.asarray(sin_over(rho, x))[:, None, None]
    else:
        cos, sin, sov = np.cos(rho * x), np.sin(rho * x), sin_over(rho, x)
    val = A * cos + Ap * sov
    der = -A * rho * sin + Ap * cos
    return val, der


def model_D(A, x: float, lam: SpectralPoint, mu: SpectralPoint) -> np.ndarray:
    """Zero-model kernel D~(x, lambda, mu) in closed form:

        (A tau rho - A_perp) sin((rho+tau) x) / (2 tau rho (rho+tau))
      + (A tau rho + A_perp) sin((rho-tau) x) / (2 tau rho (rho-tau)),

    with the removable singularities at tau = -+ rho handled by series.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    A = np.asarray(A, dtype=complex)
    Ap = np.eye(A.shape[0]) - A
    rho, tau = lam.rho, mu.rho
    sp = sin_over(rho + tau, x)
    sm = sin_over(rho - tau, x)
    cA = (sp + sm) / 2.0
    cP = (sm - sp) / (2.0 * tau * rho)
    return cA * A + cP * Ap


def _model_D_coeffs(x: float, rhos, taus):
    """Coefficient grids (cA, cP) with D~ = cA*A + cP*A_perp, broadcast

    over a rho grid (rows) and tau grid (columns)."""
    r = np.asarray(rhos)[:, None]
    t = np.asarray(taus)[None, :]
    sp = sin_over(r + t, x)
    sm = sin_over(r - t, x)
    cA = (sp + sm) / 2.0
    cP = (sm - sp) / (2.0 * t * r)
    return cA, cP


def problem_D(problem: Problem, x: float, lam: SpectralPoint,
              mu: SpectralPoint) -> np.ndarray:
    """Kernel D(x, lambda, mu) = int_0^x phi*(t, mu) phi(t, lambda) dt

    by quadrature of the solved regular and adjoint solutions."""
    pot = problem.potential
    i = pot.index_of(x)
    phi, _ = solve_regular(problem, lam)
    phi_s, _, _ = solve_adjoint(problem, mu)
    return prefix_integrals(phi_s.value @ phi.value, pot.dx)[i]


def kernel_rtilde(A, Mhat_at_mu, x: float, lam: SpectralPoint,
                  mu: SpectralPoint) -> np.ndarray:
    """Main-equation kernel r~(x, lambda, mu) = M^(mu) D~(x, lambda, mu)."""
    return np.asarray(Mhat_at_mu, dtype=complex) @ model_D(A, x, lam, mu)


# ---------------------------------------------------------------------------
# Projector extraction from the tail
# ---------------------------------------------------------------------------

def extract_A(tail_samples, residual_tol: float = 1e-3) -> np.ndarray:
    """Recover A from the Weyl tail: A = I - lim M(lambda)/(-i rho).

    Fits I - M/(-i rho) entrywise against a cubic in 1/|rho| and takes
    the constant term, then projects onto the nearest orthogonal
    projector (symmetrize, eigendecompose, round eigenvalues to {0, 1}).
    Eigenvalues in the ambiguous band [0.25, 0.75] and extrapolation
    misfits above residual_tol raise DataQualityError.
    """
    if len(tail_samples) < 4:
        raise DataQualityError("need at least 4 tail samples")
    pts = [t[0] for t in tail_samples]
    mats = np.array([np.asarray(t[1], dtype=complex) for t in tail_samples])
    n = mats.shape[1]
    inv_r = np.array([1.0 / abs(p.rho) for p in pts])
    vals = np.empty_like(mats)
    for j, (p, M) in enumerate(zip(pts, mats)):
        vals[j] = np.eye(n) - M / (-1j * p.rho)

    V = np.vander(inv_r, 4, increasing=True)      # [1, 1/r, 1/r^2, 1/r^3]
    coef, *_ = np.linalg.lstsq(V, vals.reshape(len(pts), -1), rcond=None)
    fit = (V @ coef).reshape(vals.shape)
    misfit = matnorm(vals - fit)
    A_raw = coef[0].reshape(n, n)

    A_sym = (A_raw + A_raw.conj().T) / 2.0
    evals, evecs = np.linalg.eigh(A_sym)
    if np.any((evals > 0.25) & (evals < 0.75)):
        raise DataQualityError(
            f"projector rank ambiguous: eigenvalues {evals} inside [0.25, 0.75]"
        )
    rounded = (evals > 0.5).astype(float)
    A_proj = (evecs * rounded) @ evecs.conj().T
    A_proj = (A_proj + A_proj.conj().T) / 2.0

    residual = max(misfit, matnorm(A_raw - A_proj))
    if residual > residual_tol:
        raise DataQualityError(
            f"tail extrapolation residual {residual:.3e} exceeds {residual_tol}"
        )
    return A_proj


# ---------------------------------------------------------------------------
# Nystrom solver for the main equation
# ---------------------------------------------------------------------------

class _Assembler:
    """Precomputed node data shared by all x-slices of one inversion.

    extension, if given, is a (rhos, weights, Mhat) triple of synthetic
    cut nodes beyond the data truncation.  Their unknowns are replaced by
    the model solution (a Born approximation, accurate to O(Mhat^2)), so
    they only contribute source terms and never enlarge the system.
    """

    def __init__(self, weyl: WeylData, A, extension=None):
        self.weyl = weyl
        self.A = np.asarray(A, dtype=complex)
        n = weyl.dim
        self.n = n
        self.Ap = np.eye(n) - self.A
        self.rhos = weyl.contour.rhos
        self.weights = weyl.contour.weights
        K = len(weyl.contour)
        self.K = K
        nodes = [nd.point for nd in weyl.contour.nodes]
        self.Mhat = np.array([
            weyl.M_samples[k] - model_weyl(self.A, nodes[k]) for k in range(K)
        ])
        self.MhatA = self.Mhat @ self.A
        self.MhatP = self.Mhat @ self.Ap
        # equilibration weights W_k = A + i rho_k A_perp and inverses
        self.W = (self.A[None, :, :]
                  + (1j * self.rhos)[:, None, None] * self.Ap[None, :, :])
        self.Winv = (self.A[None, :, :]
                     + (1.0 / (1j * self.rhos))[:, None, None] * self.Ap[None, :, :])
        if extension is None:
            self.ext_rhos = None
        else:
            self.ext_rhos, self.ext_weights, ext_Mhat = extension
            self.ext_MhatA = ext_Mhat @ self.A
            self.ext_MhatP = ext_Mhat @ self.Ap

    def _phi_tilde_gen(self, x, r):
        cos = np.cos(r * x)[:, None, None]
        snc = sin_over(r, x)[:, None, None]
        return cos * self.A[None, :, :] + snc * self.Ap[None, :, :]

    def _ext_source(self, x, rhos):
        """Born tail term (1/2 pi i) sum_e w_e phi~(x, mu_e) r~(x, ., mu_e)."""
        cA, cP = _model_D_coeffs(x, rhos, self.ext_rhos)
        Rt = (cA[:, :, None, None] * self.ext_MhatA[None, :, :, :]
              + cP[:, :, None, None] * self.ext_MhatP[None, :, :, :])
        phi_e = self._phi_tilde_gen(x, self.ext_rhos)
        return np.einsum("e,eab,jebc->jac", self.ext_weights / (2j * np.pi),
                         phi_e, Rt, optimize=True)

    def phi_tilde(self, x, rhos=None):
        r = self.rhos if rhos is None else np.asarray(rhos)
        return self._phi_tilde_gen(x, r)

    def rtilde(self, x, rhos=None):
        """Kernel tensor r~(x, lam_j, mu_k), shape (J, K, n, n)."""
        r = self.rhos if rhos is None else np.asarray(rhos)
        cA, cP = _model_D_coeffs(x, r, self.rhos)
        return (cA[:, :, None, None] * self.MhatA[None, :, :, :]
                + cP[:, :, None, None] * self.MhatP[None, :, :, :])

    def solve(self, x: float, cond_limit: float = 1e12) -> MainEquationSolution:
        K, n = self.K, self.n
        Rt = self.rtilde(x) * (self.weights / (2j * np.pi))[None, :, None, None]
        # G_{jk} = Winv_k (delta_{jk} I + R_{jk}) W_j
        G = np.einsum("kab,jkbc,jcd->jkad", self.Winv, Rt, self.W, optimize=True)
        idx = np.arange(K)
        G[idx, idx] += np.einsum("kab,kbd->kad", self.Winv, self.W)
        B = np.transpose(G, (0, 3, 1, 2)).reshape(K * n, K * n)

        F = self.phi_tilde(x)
        if self.ext_rhos is not None:
            F = F - self._ext_source(x, self.rhos)
        Ft = F @ self.W
        rhs = np.transpose(Ft, (0, 2, 1)).reshape(K * n, n)

        lu, piv = scipy.linalg.lu_factor(B)
        anorm = np.linalg.norm(B, 1)
        gecon = scipy.linalg.get_lapack_funcs("gecon", (B,))
        rcond, _ = gecon(lu, anorm)
        if rcond == 0 or 1.0 / rcond > cond_limit:
            raise ReconstructionError(
                f"main-equation system ill-conditioned (cond ~ {1.0 / max(rcond, 1e-300):.2e}); "
                "refine the contour"
            )
        X = scipy.linalg.lu_solve((lu, piv), rhs)
        psi = np.transpose(X.reshape(K, n, n), (0, 2, 1))
        phi = psi @ self.Winv
        return MainEquationSolution(x=x, phi_nodes=phi,
                                    phi_tilde_nodes=self.phi_tilde(x))

    def phi_at(self, sol: MainEquationSolution, pt: SpectralPoint) -> np.ndarray:
        """Nystrom interpolation of the solved phi(x, .) to any lambda."""
        x = sol.x
        rho = np.array([pt.rho])
        Rt = self.rtilde(x, rhos=rho)[0]
        corr = np.sum(
            (self.weights / (2j * np.pi))[:, None, None] * (sol.phi_nodes @ Rt),
            axis=0,
        )
        out = self.phi_tilde(x, rhos=rho)[0] - corr
        if self.ext_rhos is not None:
            out = out - self._ext_source(x, rho)[0]
        return out


def solve_main_equation(weyl: WeylData, A, x: float,
                        cond_limit: float = 1e12) -> MainEquationSolution:
    """Solve the main equation at a single x by Nystrom collocation."""
    return _Assembler(weyl, A).solve(x, cond_limit=cond_limit)


def nystrom_phi_at(weyl: WeylData, A, sol: MainEquationSolution,
                   pt: SpectralPoint) -> np.ndarray:
    """Evaluate the recovered phi(x, lambda) off the quadrature nodes."""
    return _Assembler(weyl, A).phi_at(sol, pt)


def main_equation_residual(weyl: WeylData, A, sol: MainEquationSolution,
                           n_probe: int = 8, assembler=None) -> float:
    """Off-node consistency residual of a solved x-slice.

    phi is interpolated linearly between adjacent cut nodes and the main
    equation is re-evaluated at the midpoints; returns the max norm excess.
    """
    asm = _Assembler(weyl, A) if assembler is None else assembler
    lams = weyl.contour.lambdas
    segs = weyl.contour.segments
    K = len(weyl.contour)
    picks = [k for k in range(K - 1)
             if segs[k] == segs[k + 1] and segs[k] != "circle"]
    if not picks:
        return 0.0
    step = max(1, len(picks) // n_probe)
    worst = 0.0
    for k in picks[::step][:n_probe]:
        lam_mid = 0.5 * (lams[k] + lams[k + 1])
        sheet = "upper" if segs[k] == "upper_cut" else "lower"
        pt = lambda_to_point(lam_mid, sheet)
        phi_mid = 0.5 * (sol.phi_nodes[k] + sol.phi_nodes[k + 1])
        predicted = asm.phi_at(sol, pt)
        worst = max(worst, matnorm(phi_mid - predicted))
    return worst


# ---------------------------------------------------------------------------
# Kernel-closure consistency residual (round-trip mode)
# ---------------------------------------------------------------------------

def _regular_at_nodes(problem: Problem, pts):
    """Regular-solution values phi(., pt) for many spectral points.

    Returns (N, K, n, n) sampled on the problem grid.  The scalar case is
    marched for all points at once.
    """
    pot = problem.potential
    n = problem.dim
    N = pot.x_nodes.size
    K = len(pts)
    if n == 1:
        lams = np.array([p.lam for p in pts])
        dx = pot.dx
        q = pot.values[:, 0, 0]
        qm = 0.5 * (q[:-1] + q[1:])
        c = lams[None, :] - qm[:, None]            # (N-1, K)
        sq = np.sqrt(c.astype(complex))
        cosb = np.cos(sq * dx)
        sincb = sin_over(sq, dx)
        bc = problem.bc
        val = np.empty((N, K), dtype=complex)
        der = np.empty((N, K), dtype=complex)
        val[0] = bc.A[0, 0]
        der[0] = bc.A_perp[0, 0] + bc.h[0, 0]
        for k in range(N - 1):
            v = cosb[k] * val[k] + sincb[k] * der[k]
            d = -c[k] * sincb[k] * val[k] + cosb[k] * der[k]
            val[k + 1], der[k + 1] = v, d
        return val.reshape(N, K, 1, 1)
    out = np.empty((N, K, n, n), dtype=complex)
    for j, p in enumerate(pts):
        phi, _ = solve_regular(problem, p)
        out[:, j] = phi.value
    return out


def _adjoint_at_nodes(problem: Problem, pts):
    tp = _transposed(problem)
    vals = _regular_at_nodes(tp, pts)
    return np.transpose(vals, (0, 1, 3, 2))


def _transposed(problem: Problem) -> Problem:
    from .forward import transpose_problem

    return transpose_problem(problem)


def closure_residual(weyl: WeylData, problem: Problem, x: float,
                     probe_pairs) -> float:
    """Max residual of the two closure identities linking r and r~.

    Requires the true problem, so this is a round-trip diagnostic only.
    probe_pairs is an iterable of (lam, mu) SpectralPoint pairs.
    """
    A = problem.bc.A
    asm = _Assembler(weyl, A)
    pot = problem.potential
    i = pot.index_of(x)
    dx = pot.dx
    nodes = [nd.point for nd in weyl.contour.nodes]
    w = weyl.contour.weights / (2j * np.pi)

    phi_nodes = _regular_at_nodes(problem, nodes)         # (N, K, n, n)
    phis_nodes = _adjoint_at_nodes(problem, nodes)        # (N, K, n, n)

    worst = 0.0
    for lam, mu in probe_pairs:
        Mhat_mu = weyl_matrix(problem, mu) - model_weyl(A, mu)
        phi_lam = _regular_at_nodes(problem, [lam])[:, 0]
        phis_mu = _adjoint_at_nodes(problem, [mu])[:, 0]

        rt_lam = asm.rtilde(x, rhos=np.array([lam.rho]))[0]   # (K, n, n)
        rt_mu = Mhat_mu @ model_D(A, x, lam, mu)

        # D(x, xi_k, mu) and r(x, xi_k, mu)
        integ = prefix_integrals(phis_mu[:, None] @ phi_nodes, dx)[i]
        r_nodes_mu = Mhat_mu @ integ                          # (K, n, n)
        r_mu = Mhat_mu @ problem_D(problem, x, lam, mu)

        res1 = rt_mu - r_mu - np.sum(w[:, None, None] * (r_nodes_mu @ rt_lam),
                                     axis=0)

        # D(x, lam, xi_k) and r(x, lam, xi_k)
        integ2 = prefix_integrals(phis_nodes @ phi_lam[:, None], dx)[i]
        r_lam_nodes = asm.Mhat @ integ2                       # (K, n, n)
        rt_nodes_mu = Mhat_mu @ (
            _model_D_coeffs(x, asm.rhos, np.array([mu.rho]))[0][:, 0, None, None] * A
            + _model_D_coeffs(x, asm.rhos, np.array([mu.rho]))[1][:, 0, None, None] * asm.Ap
        )
        res2 = rt_mu - r_mu - np.sum(w[:, None, None] * (rt_nodes_mu @ r_lam_nodes),
                                     axis=0)
        worst = max(worst, matnorm(res1), matnorm(res2))
    return worst


# ---------------------------------------------------------------------------
# Self-consistent tail extension
# ---------------------------------------------------------------------------

def _omega_of_grid(Q: PotentialGrid, rhos):
    """omega(0, rho) = (1/2) int_0^X Q(t) exp(2 i rho t) dt for many rho.

    Endpoint-corrected trapezoid, vectorized over the rho array; rho may
    have either sign of the real part (the two cut sides).
    """
    rhos = np.asarray(rhos)
    t = Q.x_nodes
    dx = Q.dx
    w = np.full(t.size, dx)
    w[0] = w[-1] = dx / 2.0
    phase = np.exp(2j * np.outer(rhos, t))                      # (E, N)
    base = np.einsum("et,t,tab->eab", phase, w, Q.values, optimize=True)
    Qp = np.gradient(Q.values, dx, axis=0, edge_order=2)
    f0 = Qp[0] + 2j * rhos[:, None, None] * Q.values[0]
    fN = (Qp[-1] + 2j * rhos[:, None, None] * Q.values[-1]) * phase[:, -1, None, None]
    return 0.5 * (base + (dx * dx / 12.0) * (f0 - fN))


def _asymptotic_mhat(A, h, kappa, rhos):
    """Leading Weyl-matrix deviation from the zero model at large |rho|:

    M - M~ = (A + i rho A_perp) (h - 2 kappa(rho)) (A/(i rho) - A_perp) / (i rho).
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    Ap = np.eye(n) - A
    r = np.asarray(rhos)[:, None, None]
    left = A[None] + 1j * r * Ap[None]
    right = A[None] / (1j * r) - Ap[None]
    mid = (h[None] - 2.0 * kappa) / (1j * r)
    return left @ mid @ right


def _fit_tail_model(weyl: WeylData, A, Q_prior: PotentialGrid, h_prior,
                    rho_fit_min: float = None, n_coarse: int = 101,
                    tv_weight: float = 3e-3, anchor_weight: float = 0.5,
                    irls_iters: int = 8):
    """Fit (Q, h) to the large-|rho| structure of the measured Weyl data.

    For |rho| past the low-lying singularities,

        (i rho) (A + i rho A_perp)^{-1} Mhat (A/(i rho) - A_perp)^{-1}
            = h - 2 (A_perp - A) omega(0, rho) + O(1/rho^2),

    and omega(0, rho) = (1/2) int_0^X Q(t) exp(2 i rho t) dt is linear in
    the samples of Q, so the outer cut nodes and the imaginary-axis tail
    samples give a linear system for (h, Q).  The outer band carries no
    low-frequency information, so the smooth component is anchored to the
    first-pass reconstruction Q_prior, while an edge-preserving total
    variation penalty (iteratively reweighted least squares) supplies the
    compact-support extrapolation beyond the data band.  The result seeds
    the synthetic kernel tail past the truncation radius; it is a coarse
    estimate of Q only, never the reconstruction itself.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    Ap = np.eye(n) - A
    S = Ap - A                       # involution: S @ S = I
    rho_R = np.sqrt(weyl.contour.R)
    if rho_fit_min is None:
        rho_fit_min = max(3.0, 0.45 * rho_R)

    rhos, Ys = [], []
    for k, nd in enumerate(weyl.contour.nodes):
        rho = nd.point.rho
        if nd.segment == "circle" or abs(rho) < rho_fit_min:
            continue
        rhos.append(rho)
        Ys.append(weyl.M_samples[k] - model_weyl(A, nd.point))
    for pt, M in weyl.tail_samples:
        rhos.append(pt.rho)
        Ys.append(np.asarray(M, dtype=complex) - model_weyl(A, pt))
    rhos = np.array(rhos)
    Linv = A[None] + Ap[None] / (1j * rhos)[:, None, None]
    Rinv = (1j * rhos)[:, None, None] * A[None] - Ap[None]
    Ys = (1j * rhos)[:, None, None] * (Linv @ np.array(Ys) @ Rinv)

    x_max = Q_prior.x_max
    if n_coarse % 2 == 0:
        n_coarse += 1
    t = np.linspace(0.0, x_max, n_coarse)
    dt = t[1] - t[0]
    # Y = h + c/rho + basis . (S Q); basis integrates the piecewise-linear
    # hat at each node against -exp(2 i rho t) in closed form (Filon), so
    # the design stays exact however fast the kernel oscillates.  The
    # 1/rho nuisance column absorbs the next-order model bias, which is
    # otherwise degenerate with the endpoint value Q(0).
    a = 2j * rhos[:, None]
    basis = np.exp(a * t[None, :]) * dt * sinc(rhos[:, None] * dt) ** 2
    basis[:, 0] = -1.0 / a[:, 0] + (np.exp(a[:, 0] * dt) - 1.0) / (a[:, 0] ** 2 * dt)
    basis[:, -1] = np.exp(a[:, 0] * x_max) * (
        1.0 / a[:, 0] + (np.exp(-a[:, 0] * dt) - 1.0) / (a[:, 0] ** 2 * dt))
    basis = -basis
    row_w = np.abs(rhos) / rho_R
    design = row_w[:, None] * np.hstack(
        [np.ones((len(rhos), 1)), 1.0 / (1j * rhos)[:, None], basis])
    rhs_data = row_w[:, None] * Ys.reshape(len(rhos), n * n)

    # anchor: the band-limited component of Q must match the prior
    sigma = 2.0 / rho_R
    prior = np.empty((n_coarse, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            col = Q_prior.values[:, i, j]
            prior[:, i, j] = (np.interp(t, Q_prior.x_nodes, col.real)
                              + 1j * np.interp(t, Q_prior.x_nodes, col.imag))
    kern = np.exp(-0.5 * ((t[:, None] - t[None, :]) / sigma) ** 2)
    kern /= kern.sum(axis=1, keepdims=True)
    # the prior carries a spurious boundary layer at x = 0, so ramp the
    # anchor in from zero there and let the data set the endpoint
    layer = 3.0 / rho_R
    ramp = np.clip(t / layer - 1.0, 0.0, 1.0)
    kern = ramp[:, None] * kern
    anchor = np.hstack([np.zeros((n_coarse, 2)), kern]) * anchor_weight
    SQ_prior = np.einsum("ab,tbc->tac", S, prior)
    rhs_anchor = anchor_weight * (kern @ SQ_prior.reshape(n_coarse, n * n))

    D1 = np.zeros((n_coarse - 1, n_coarse + 2))
    for i in range(n_coarse - 1):
        D1[i, i + 2] = -1.0
        D1[i, i + 3] = 1.0

    Z = None
    eps = 1e-3
    for _ in range(irls_iters):
        if Z is None:
            w_tv = np.ones((n_coarse - 1, n * n))
        else:
            jumps = np.abs(D1 @ Z)
            w_tv = 1.0 / np.sqrt(jumps + eps)
        sol = np.empty((n_coarse + 2, n * n), dtype=complex)
        for c in range(n * n):
            big = np.vstack([design, anchor, tv_weight * w_tv[:, c, None] * D1])
            rhs = np.concatenate([rhs_data[:, c], rhs_anchor[:, c],
                                  np.zeros(n_coarse - 1)])
            sol[:, c] = np.linalg.lstsq(big, rhs, rcond=None)[0]
        Z = sol

    h_fit = A @ Z[0].reshape(n, n) @ A
    Q_fit = np.einsum("ab,tbc->tac", S, Z[2:].reshape(n_coarse, n, n))
    # resample onto the prior's fine grid so downstream Fourier integrals
    # of the fit stay resolved well past the data band
    tf = Q_prior.x_nodes
    fine = np.empty((tf.size, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            fine[:, i, j] = (np.interp(tf, t, Q_fit[:, i, j].real)
                             + 1j * np.interp(tf, t, Q_fit[:, i, j].imag))
    return PotentialGrid(x_nodes=tf, values=fine), h_fit


def _extension_nodes(contour: Contour, factor: float):
    """Synthetic cut nodes continuing both sides from R out to factor^2 R.

    Returns (rhos, weights) continuing the data cut's uniform-in-sqrt(s)
    spacing, ordered like the contour (upper side inward first, then the
    lower side outward), with endpoint-corrected trapezoid weights.
    """
    segs = contour.segments
    n_cut = segs.count("upper_cut")
    sig_R = np.sqrt(contour.R)
    h_sig = (sig_R - np.sqrt(contour.r0)) / (n_cut - 1)
    sig_max = factor * sig_R
    m = max(8, int(np.ceil((sig_max - sig_R) / h_sig)) + 1)
    sig = sig_R + h_sig * np.arange(m)
    delta = contour.delta

    def pt(lam, sheet):
        return lambda_to_point(lam, sheet).rho

    rho_up = np.array([pt(s * s + 1j * delta, "upper") for s in sig[::-1]])
    w_up = _param_weights(-2.0 * sig[::-1], h_sig)
    rho_lo = np.array([pt(s * s - 1j * delta, "lower") for s in sig])
    w_lo = _param_weights(2.0 * sig, h_sig)
    return np.concatenate([rho_up, rho_lo]), np.concatenate([w_up, w_lo])


# ---------------------------------------------------------------------------
# Potential and boundary extraction
# ---------------------------------------------------------------------------

def _fd_weights(offsets, order):
    """Finite-difference weights for d^order/dx^order at offset 0."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(math.factorial(order))
    return np.linalg.solve(V, rhs)


def _second_derivative(values, dx):
    """4th-order second x-derivative of an (N, n, n) sample array."""
    N = values.shape[0]
    out = np.empty_like(values)
    c_int = _fd_weights(np.arange(-2, 3), 2) / dx**2
    for i in range(N):
        if 2 <= i <= N - 3:
            sten = values[i - 2:i + 3]
            out[i] = np.tensordot(c_int, sten, axes=(0, 0))
        else:
            base = 0 if i < 2 else N - 6
            offs = (np.arange(base, base + 6) - i).astype(float)
            c = _fd_weights(offs, 2) / dx**2
            out[i] = np.tensordot(c, values[base:base + 6], axes=(0, 0))
    return out


def _first_derivative_at0(values, dx):
    """4th-order one-sided first derivative at the first node."""
    c = _fd_weights(np.arange(0, 5), 1) / dx
    return np.tensordot(c, values[:5], axes=(0, 0))


def recover_potential(solutions, weyl: WeylData, A, lambda_probes,
                      phi_cond_limit: float = 1e8, edge_layer: float = 0.0,
                      assembler=None):
    """Extract (Q, h) from main-equation solutions on an x-grid.

    Q(x) = phi''(x, lam) phi(x, lam)^{-1} + lam I, averaged over the probe
    energies; h = phi'(0, lam) - A_perp, compressed to A h A.  Nodes where
    phi is ill-conditioned at every probe are filled from the nearest
    valid neighbor, and the last two nodes are set to zero (Q is assumed
    compactly supported inside the grid).

    The recovered phi is band-limited by the contour truncation, and its
    curvature excess vanishes identically at x = 0 (the kernel basis is
    odd in x), so Q cannot converge pointwise there.  edge_layer gives
    the width of that boundary layer; Q on it is replaced by a linear
    extrapolation from just outside.
    """
    solutions = sorted(solutions, key=lambda s: s.x)
    xs = np.array([s.x for s in solutions])
    if xs.size < 7:
        raise ReconstructionError("need at least 7 x-slices for the stencils")
    dx = xs[1] - xs[0]
    if not np.allclose(np.diff(xs), dx, rtol=1e-10, atol=1e-12):
        raise ReconstructionError("x-slices must form a uniform grid")
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    Ap = np.eye(n) - A

    asm = _Assembler(weyl, A) if assembler is None else assembler
    probes = [lambda_to_point(l) for l in np.atleast_1d(lambda_probes)]

    Q_acc = np.zeros((xs.size, n, n), dtype=complex)
    count = np.zeros(xs.size, dtype=int)
    h_list = []
    for pt in probes:
        PHI = np.array([asm.phi_at(sol, pt) for sol in solutions])
        d2 = _second_derivative(PHI, dx)
        for i in range(xs.size):
            if np.linalg.cond(PHI[i]) > phi_cond_limit:
                continue
            Q_acc[i] += d2[i] @ np.linalg.inv(PHI[i]) + pt.lam * np.eye(n)
            count[i] += 1
        h_list.append(_first_derivative_at0(PHI, dx) - Ap)

    Q = np.zeros_like(Q_acc)
    valid = count > 0
    if not np.any(valid):
        raise ReconstructionError("phi singular at every probe and node")
    Q[valid] = Q_acc[valid] / count[valid, None, None]
    # fill skipped nodes (typically x = 0 where phi(0) = A is singular)
    bad = np.flatnonzero(~valid)
    good = np.flatnonzero(valid)
    for i in bad:
        Q[i] = Q[good[np.argmin(np.abs(good - i))]]
    Q[-2:] = 0.0

    if edge_layer > 0:
        i0 = int(np.ceil(edge_layer / dx))
        i1 = min(i0 + max(6, i0), xs.size - 3)
        if 0 < i0 < i1:
            coef = np.polynomial.polynomial.polyfit(
                xs[i0:i1], Q[i0:i1].reshape(i1 - i0, -1), 1)
            fill = np.polynomial.polynomial.polyval(xs[:i0], coef).T
            Q[:i0] = fill.reshape(i0, n, n)

    h = np.mean(h_list, axis=0)
    h = A @ h @ A
    return PotentialGrid(x_nodes=xs, values=Q), h


# ---------------------------------------------------------------------------
# End-to-end inversion
# ---------------------------------------------------------------------------

def invert(weyl: WeylData, config: InvertConfig) -> ReconstructionResult:
    """Run the reconstruction pipeline on measured Weyl data."""
    A = extract_A(weyl.tail_samples)
    Ap = np.eye(weyl.dim) - A
    xs = np.linspace(0.0, config.x_max, config.x_nodes)
    rho_band = np.sqrt(weyl.contour.R)

    asm = _Assembler(weyl, A)
    Q = h = None
    for p in range(config.passes):
        if p > 0:
            ext_rhos, ext_w = _extension_nodes(weyl.contour,
                                               config.tail_extension_factor)
            Q_fit, h_fit = _fit_tail_model(weyl, A, Q, h)
            kap = (Ap - A)[None] @ _omega_of_grid(Q_fit, ext_rhos)
            ext_Mhat = _asymptotic_mhat(A, h_fit, kap, ext_rhos)
            asm = _Assembler(weyl, A, extension=(ext_rhos, ext_w, ext_Mhat))
            rho_band = config.tail_extension_factor * np.sqrt(weyl.contour.R)
        solutions = [asm.solve(x, cond_limit=config.system_cond_limit)
                     for x in xs]
        Q, h = recover_potential(solutions, weyl, A, config.lambda_probes,
                                 phi_cond_limit=config.phi_cond_limit,
                                 edge_layer=1.5 / rho_band, assembler=asm)

    mid = solutions[len(solutions) // 2]
    diag = {
        "main_equation_residual": main_equation_residual(weyl, A, mid,
                                                         assembler=asm),
        "phi0_deviation": matnorm(solutions[0].phi_nodes
                                  - solutions[0].phi_tilde_nodes),
    }
    return ReconstructionResult(A=A, h=h, Q=Q, diagnostics=diag)


def generate_weyl_data(problem: Problem, contour: Contour,
                       tail_ts=None) -> WeylData:
    """Forward-compute Weyl data for a known problem (round-trip mode)."""
    if tail_ts is None:
        tail_ts = np.linspace(50.0, 400.0, 8)
    M = np.array([weyl_matrix(problem, nd.point) for nd in contour.nodes])
    tail = tuple(
        (SpectralPoint(1j * t), weyl_matrix(problem, SpectralPoint(1j * t)))
        for t in tail_ts
    )
    return WeylData(contour=contour, M_samples=M, tail_samples=tail)


def coarsen_weyl_data(weyl: WeylData, mode: str) -> WeylData:
    """Degrade measured data for self-convergence estimates.

    mode "nodes" keeps every other node on each segment (double spacing,
    same truncation radius); mode "radius" shortens the cut so the
    truncation radius halves at unchanged spacing.
    Weights are rebuilt for the retained parameter grid, so the result is
    a valid data set, just a coarser one.
    """
    cont = weyl.contour
    segs = cont.segments
    idx = {s: [i for i, g in enumerate(segs) if g == s] for s in
           ("upper_cut", "circle", "lower_cut")}
    if mode == "nodes":
        for s, ii in idx.items():
            if (len(ii) - 1) % 2:
                raise ValueError(f"{s} needs an odd node count to halve")
        keep = {s: ii[::2] for s, ii in idx.items()}
        new_R = cont.R
    elif mode == "radius":
        sig_lo = np.sqrt(np.abs([cont.nodes[i].point.lam
                                 for i in idx["lower_cut"]]))
        m = int(np.searchsorted(sig_lo, sig_lo[-1] / np.sqrt(2.0),
                                side="right"))
        keep = {
            "upper_cut": idx["upper_cut"][len(idx["upper_cut"]) - m:],
            "circle": idx["circle"],
            "lower_cut": idx["lower_cut"][:m],
        }
        new_R = float(sig_lo[m - 1] ** 2)
    else:
        raise ValueError(f"unknown coarsening mode {mode!r}")

    nodes = []
    order = []
    for seg in ("upper_cut", "circle", "lower_cut"):
        ii = keep[seg]
        pts = [cont.nodes[i].point for i in ii]
        if seg == "circle":
            theta = np.unwrap(np.angle([p.lam for p in pts]))
            w = _param_weights(1j * np.array([p.lam for p in pts]),
                               abs(theta[1] - theta[0]))
        else:
            sig = np.sqrt(np.abs([p.lam for p in pts]))
            sgn = -2.0 if seg == "upper_cut" else 2.0
            w = _param_weights(sgn * sig, abs(sig[1] - sig[0]))
        nodes.extend(ContourNode(point=p, weight=wk, segment=seg)
                     for p, wk in zip(pts, w))
        order.extend(ii)

    coarse = Contour(r0=cont.r0, R=new_R, delta=cont.delta,
                     nodes=tuple(nodes))
    return WeylData(contour=coarse, M_samples=weyl.M_samples[order],
                    tail_samples=weyl.tail_samples)


def discretization_estimate(weyl: WeylData, config: InvertConfig,
                            result: ReconstructionResult) -> float:
    """Self-convergence error estimate for a finished reconstruction.

    Reruns the inversion on deliberately degraded inputs (half x-grid
    density, half contour-node density, halved truncation radius) and
    returns the largest relative L1 change of Q.  Refining any knob from
    the base configuration moves Q by less than this coarsening did, so
    it bounds the discretization error of the reported Q from above.
    """
    def rel_l1(res):
        a = result.Q
        b = res.Q
        na = np.abs(a.values).sum(axis=-1).max(axis=-1)
        nb = np.empty_like(na)
        db = np.abs(b.values - np.stack(
            [[np.interp(b.x_nodes, a.x_nodes, a.values[:, i, j].real)
              + 1j * np.interp(b.x_nodes, a.x_nodes, a.values[:, i, j].imag)
              for j in range(a.dim)] for i in range(a.dim)],
            axis=0).transpose(2, 0, 1)).sum(axis=-1).max(axis=-1)
        num = np.trapezoid(db, b.x_nodes)
        den = np.trapezoid(na, a.x_nodes)
        return float(num / den) if den > 0 else float(num)

    coarse_x = InvertConfig(
        x_max=config.x_max, x_nodes=(config.x_nodes - 1) // 2 + 1,
        lambda_probes=config.lambda_probes,
        phi_cond_limit=config.phi_cond_limit,
        system_cond_limit=config.system_cond_limit,
        passes=config.passes,
        tail_extension_factor=config.tail_extension_factor)
    est = rel_l1(invert(weyl, coarse_x))
    for mode in ("nodes", "radius"):
        est = max(est, rel_l1(invert(coarsen_weyl_data(weyl, mode), config)))
    return est
