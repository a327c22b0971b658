"""Forward solver: Jost and regular solutions, Weyl matrix, diagnostics."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from weylinv import (
    BoundaryCondition,
    PotentialGrid,
    Problem,
    SpectralPoint,
    asymptotics_report,
    check_m_equals_mstar,
    matnorm,
    model_weyl,
    p_matrix_diagnostic,
    scan_jost_zeros,
    solve_jost,
    solve_regular,
    weyl_matrix,
    weyl_solution,
    zero_potential,
)
from weylinv.core import apply_T, bracket
from weylinv.forward import kappa, omega

from conftest import random_projector, scalar_box_problem, smooth_matrix_problem


def ivp_jost_oracle(problem, rho):
    """Independent scalar Jost oracle: integrate the equation backward

    from x_max with the free-field data e = exp(i rho x)."""
    pot = problem.potential
    X = pot.x_max
    q = lambda x: np.interp(x, pot.x_nodes, pot.values[:, 0, 0].real)

    def f(x, y):
        return [y[1], (q(x) - rho ** 2) * y[0]]

    y0 = [np.exp(1j * rho * X), 1j * rho * np.exp(1j * rho * X)]
    sol = solve_ivp(f, [X, 0.0], y0, rtol=1e-11, atol=1e-13,
                    dense_output=True)
    return sol.y[0][-1], sol.y[1][-1]


class TestJostSolution:
    def test_free_field_exact(self):
        prob = Problem(potential=zero_potential(2, 1.0, 41),
                       bc=BoundaryCondition(A=np.eye(2, dtype=complex),
                                            h=np.zeros((2, 2), complex)))
        pt = SpectralPoint(1.5 + 0.5j)
        e = solve_jost(prob, pt)
        expected = np.exp(1j * pt.rho * prob.potential.x_nodes)
        assert matnorm(e.value - expected[:, None, None] * np.eye(2)) < 1e-13

    @pytest.mark.parametrize("rho", [1.7, 4.0 + 0.3j, 0.5 + 2.0j, -3.0 + 1.0j])
    def test_box_against_ivp_oracle(self, rho):
        # smooth the box edge out of the comparison by using a smooth Q
        x = np.linspace(0.0, 2.0, 801)
        v = (0.3 * np.exp(-(((x - 0.8) / 0.3) ** 2)))[:, None, None]
        prob = Problem(potential=PotentialGrid(x_nodes=x, values=v.astype(complex)),
                       bc=BoundaryCondition(A=np.array([[1.0 + 0j]]),
                                            h=np.zeros((1, 1), complex)))
        e = solve_jost(prob, SpectralPoint(rho))
        e0_ref, e0p_ref = ivp_jost_oracle(prob, rho)
        scale = abs(e0_ref) + abs(rho) ** -1 * abs(e0p_ref)
        assert abs(e.value[0, 0, 0] - e0_ref) / scale < 2e-6
        assert abs(e.derivative[0, 0, 0] - e0p_ref) / (abs(rho) * scale) < 2e-6

    def test_large_imaginary_rho_stable(self):
        prob = scalar_box_problem(nodes=401)
        e = solve_jost(prob, SpectralPoint(400.0j))
        assert np.all(np.isfinite(e.value))
        # deep in the upper half plane the potential is invisible at x_max
        assert abs(e.value[-1, 0, 0] - np.exp(-400.0 * 2.0)) < 1e-200

    def test_omega_matches_direct_quadrature(self):
        prob = scalar_box_problem(nodes=801)
        rho = 3.0 + 0.2j
        x = prob.potential.x_nodes
        integ = np.trapezoid(prob.potential.values[:, 0, 0]
                             * np.exp(2j * rho * x), x)
        assert abs(omega(prob, 0.0, rho)[0, 0] - 0.5 * integ) < 1e-4

    def test_kappa_sign_convention(self):
        prob = scalar_box_problem(nodes=401)
        rho = 2.0 + 0.1j
        # A = I so kappa = -omega
        assert np.allclose(kappa(prob, rho), -omega(prob, 0.0, rho))


class TestRegularSolutions:
    def test_initial_data(self, rng):
        prob = smooth_matrix_problem(2, rng, nodes=301)
        pt = SpectralPoint(1.0 + 0.7j)
        phi, S = solve_regular(prob, pt)
        bc = prob.bc
        assert matnorm(phi.value[0] - bc.A) < 1e-13
        assert matnorm(phi.derivative[0] - (bc.A_perp + bc.h)) < 1e-13
        assert matnorm(S.value[0] + bc.A_perp) < 1e-13
        assert matnorm(S.derivative[0] - bc.A) < 1e-13

    def test_boundary_functional_values(self, rng):
        # T(phi) = 0 and T(S) = I follow from the initial data
        prob = smooth_matrix_problem(2, rng, nodes=301)
        pt = SpectralPoint(2.0 + 0.2j)
        phi, S = solve_regular(prob, pt)
        bc = prob.bc
        assert matnorm(apply_T(bc, phi.value[0], phi.derivative[0])) < 1e-12
        assert matnorm(apply_T(bc, S.value[0], S.derivative[0])
                       - np.eye(2)) < 1e-12

    def test_scalar_free_solution_closed_form(self):
        # A = 1, h = 0, Q = 0: phi = cos(rho x)
        prob = Problem(potential=zero_potential(1, 1.0, 201),
                       bc=BoundaryCondition(A=np.array([[1.0 + 0j]]),
                                            h=np.zeros((1, 1), complex)))
        pt = SpectralPoint(2.0)
        phi, _ = solve_regular(prob, pt)
        x = prob.potential.x_nodes
        assert np.max(np.abs(phi.value[:, 0, 0] - np.cos(2.0 * x))) < 1e-7


class TestWeylMatrix:
    def test_zero_potential_closed_form(self, rng):
        for _ in range(5):
            n = int(rng.integers(1, 5))
            A = random_projector(n, rng)
            prob = Problem(potential=zero_potential(n, 1.0, 41),
                           bc=BoundaryCondition(A=A, h=np.zeros((n, n), complex)))
            pt = SpectralPoint(rng.uniform(0.5, 5.0)
                               * np.exp(1j * rng.uniform(0.1, np.pi - 0.1)))
            assert matnorm(weyl_matrix(prob, pt) - model_weyl(A, pt)) < 1e-10

    def test_weyl_solution_decomposition(self):
        # Phi = S + phi M, checked by the opt-in postcondition
        prob = scalar_box_problem(nodes=801)
        pt = SpectralPoint(1.5 + 0.8j)
        Phi = weyl_solution(prob, pt, check_tol=2e-6)
        assert np.all(np.isfinite(Phi.value))

    def test_m_equals_mstar(self, rng):
        prob = smooth_matrix_problem(2, rng, nodes=1501)
        pts = [SpectralPoint(rng.uniform(1, 5)
                             * np.exp(1j * rng.uniform(0.1, np.pi - 0.1)))
               for _ in range(3)]
        assert check_m_equals_mstar(prob, pts) < 1e-7

    def test_bracket_of_weyl_and_regular(self):
        # <Phi^t, phi> is constant in x for the scalar problem; its value
        # at 0 is fixed by the initial data
        prob = scalar_box_problem(nodes=801)
        pt = SpectralPoint(1.2 + 0.4j)
        phi, _ = solve_regular(prob, pt)
        Phi = weyl_solution(prob, pt)
        vals = [bracket(Phi.value[i], Phi.derivative[i],
                        phi.value[i], phi.derivative[i])[0, 0]
                for i in (0, 200, 400, 800)]
        assert np.max(np.abs(np.diff(vals))) < 5e-5


class TestDiagnostics:
    def test_asymptotic_orders(self, rng):
        prob = smooth_matrix_problem(2, rng, nodes=1501, scale=0.3)
        probes = [SpectralPoint(r + 1.0j) for r in np.geomspace(10, 60, 8)]
        assert asymptotics_report(prob, probes, "jost").order > 1.8
        assert asymptotics_report(prob, probes, "weyl").order > 0.8

    def test_unknown_expansion_rejected(self, rng):
        prob = smooth_matrix_problem(2, rng, nodes=301)
        with pytest.raises(ValueError):
            asymptotics_report(prob, [SpectralPoint(5.0 + 1.0j)], "fourier")

    def test_p_matrix_requires_same_projector(self, rng):
        prob = smooth_matrix_problem(2, rng, nodes=301)
        other = Problem(potential=prob.potential,
                        bc=BoundaryCondition(A=np.eye(2, dtype=complex),
                                             h=np.zeros((2, 2), complex)))
        if matnorm(prob.bc.A - np.eye(2)) > 1e-10:
            with pytest.raises(ValueError):
                p_matrix_diagnostic(prob, other, SpectralPoint(5.0 + 1.0j), 0.5)

    def test_scan_jost_zeros_zero_potential(self):
        prob = Problem(potential=zero_potential(1, 1.0, 41),
                       bc=BoundaryCondition(A=np.array([[1.0 + 0j]]),
                                            h=np.zeros((1, 1), complex)))
        zeros, r0 = scan_jost_zeros(prob, 3.0)
        assert zeros == []
        assert r0 >= 1.0

    def test_scan_finds_bound_state(self):
        # Q = -1.5 on [0,1] with Neumann data has a negative eigenvalue,
        # which is a zero of det J on the positive imaginary rho axis
        x = np.linspace(0.0, 2.0, 401)
        v = (-1.5 * (x <= 1.0))[:, None, None].astype(complex)
        prob = Problem(potential=PotentialGrid(x_nodes=x, values=v),
                       bc=BoundaryCondition(A=np.array([[1.0 + 0j]]),
                                            h=np.zeros((1, 1), complex)))
        zeros, r0 = scan_jost_zeros(prob, 3.0)
        assert len(zeros) >= 1
        lam0 = min(zeros, key=lambda z: abs(z))
        assert lam0.real < 0 and abs(lam0.imag) < 1e-2
        assert r0 > abs(lam0)
