#!/usr/bin/env python3
"""Forward problem walkthrough.

Builds a two-channel half-line Schrödinger operator with a delta-type
vertex condition and a short-range matrix potential, then computes its
Weyl matrix M(lambda) at a few spectral points. Along the way it checks
the structural facts that make M trustworthy data for inversion:

* for Q = 0 the Weyl matrix has the closed form A/(i rho) - i rho A_perp,
  and the computed M converges to that model as |rho| grows;
* M agrees with the Weyl matrix M* of the adjoint (right-multiplied)
  problem, which is the numerical fingerprint of self-adjointness.

Run:  python3 demos/01_forward_weyl.py
"""

import numpy as np

from weylinv import (
    Problem,
    SpectralPoint,
    check_m_equals_mstar,
    delta_condition,
    matnorm,
    model_weyl,
    potentials,
    weyl_matrix,
)

# ---------------------------------------------------------------------------
# Problem setup: two coupled channels, delta-type vertex of strength 0.7,
# smooth bump potential supported on [0, 2].
# ---------------------------------------------------------------------------

bc = delta_condition(2, 0.7)
print("vertex projector A =")
print(np.round(bc.A.real, 6))
print("vertex coupling h =")
print(np.round(bc.h.real, 6))

coupling = 0.4 * np.array([[1.0, 0.3], [0.3, 0.8]])
Q = potentials.gaussian(coupling, center=0.8, width=0.25, x_max=2.0,
                        nodes=1201)
problem = Problem(potential=Q, bc=bc)
print(f"\npotential: gaussian bump, L1 norm estimate {Q.l1_norm():.4f}")

# ---------------------------------------------------------------------------
# Weyl matrix at a few points of the upper rho half-plane.
# ---------------------------------------------------------------------------

print("\nWeyl matrix samples (spectral parameter rho, energy lambda = rho^2):")
for rho in (1.5j, 2.0 + 1.0j, 6.0 + 0.5j):
    pt = SpectralPoint(rho=rho)
    M = weyl_matrix(problem, pt)
    print(f"  rho = {rho}:")
    for row in M:
        print("    " + "  ".join(f"{z.real:+.5f}{z.imag:+.5f}j" for z in row))

# ---------------------------------------------------------------------------
# Large-|rho| behaviour: M approaches the zero-potential model like 1/rho^2,
# so |M - M_model| * |rho|^2 should stay bounded as rho grows.
# ---------------------------------------------------------------------------

print("\nconvergence to the zero-potential model:")
print(f"{'|rho|':>8}  {'|M - M_model|':>14}  {'x |rho|^2':>10}")
for r in (5.0, 10.0, 20.0, 40.0, 80.0):
    pt = SpectralPoint(rho=r + 1j)
    gap = matnorm(weyl_matrix(problem, pt) - model_weyl(bc.A, pt))
    print(f"{abs(pt.rho):8.1f}  {gap:14.3e}  {gap * abs(pt.rho) ** 2:10.4f}")

# ---------------------------------------------------------------------------
# Self-adjointness fingerprint: the adjoint problem -Z'' + Z Q = lambda Z
# with the transposed boundary functional has the same Weyl matrix.
# ---------------------------------------------------------------------------

pts = [SpectralPoint(rho=z) for z in (1.5j, 2.0 + 1.0j, 6.0 + 0.5j)]
resid = check_m_equals_mstar(problem, pts)
print(f"\nmax |M - M*| over the sample points: {resid:.3e}")
