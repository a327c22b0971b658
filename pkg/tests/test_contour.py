"""Contour construction and quadrature accuracy."""

import numpy as np
import pytest

from weylinv import (
    ContourNode,
    SpectralPoint,
    build_contour,
    cauchy_transform,
    coarsen_weyl_data,
    integrate,
    model_weyl,
)
from weylinv.inverse import WeylData


def small_contour(**kw):
    args = dict(r0=2.0, R=100.0, n_cut=64, n_circle=64, delta=0.0)
    args.update(kw)
    return build_contour(**args)


class TestConstruction:
    def test_node_count_and_order(self):
        c = small_contour()
        assert len(c) == 64 + 2 * 64
        segs = c.segments
        assert segs[:64] == ("upper_cut",) * 64
        assert segs[64:128] == ("circle",) * 64
        assert segs[128:] == ("lower_cut",) * 64

    def test_cut_uniform_in_sqrt(self):
        c = small_contour()
        sig = np.sqrt(np.abs(c.lambdas[:64]))
        assert np.allclose(np.diff(sig), np.diff(sig)[0])

    def test_sheets_at_zero_offset(self):
        c = small_contour()
        rhos = c.rhos
        assert np.all(rhos[:64].real > 0)       # upper side
        assert np.all(rhos[128:].real < 0)      # lower side

    def test_rejects_bad_radii(self):
        with pytest.raises(ValueError):
            build_contour(r0=3.0, R=2.0)

    def test_rejects_negative_delta(self):
        with pytest.raises(ValueError):
            build_contour(r0=1.0, R=10.0, delta=-0.1)

    def test_rejects_zero_weight_node(self):
        with pytest.raises(ValueError):
            ContourNode(point=SpectralPoint(1.0), weight=0.0,
                        segment="circle")

    def test_default_delta_positive(self):
        c = build_contour(r0=2.0, R=50.0)
        assert c.delta == pytest.approx(2e-3)


class TestQuadrature:
    def test_closure_residue_inside(self):
        # (1/2 pi i) int d mu/(mu - lam0) = 1 for lam0 inside the circle
        c = small_contour()
        lam0 = -0.5 + 0.3j
        val = integrate(c, 1.0 / (c.lambdas - lam0), cauchy=True)
        assert abs(val - 1.0) < 1e-5

    def test_closure_zero_outside(self):
        # a pole far outside the contour region contributes nothing
        c = small_contour()
        lam0 = -50.0
        val = integrate(c, 1.0 / (c.lambdas - lam0), cauchy=True)
        assert abs(val) < 1e-5

    def test_cauchy_reproduces_analytic_function(self):
        # f analytic across the cut: both cut sides cancel, the circle
        # reproduces f at interior points
        c = small_contour()
        f = 1.0 / (c.lambdas + 9.0)
        lam = -1.0 + 0.2j
        val = cauchy_transform(c, f, lam)
        assert abs(val - 1.0 / (lam + 9.0)) < 1e-7

    def test_residue_accuracy_improves_with_nodes(self):
        lam0 = -0.5
        errs = []
        for n in (64, 128):
            c = small_contour(n_cut=n, n_circle=n)
            errs.append(abs(integrate(c, 1.0 / (c.lambdas - lam0),
                                      cauchy=True) - 1.0))
        assert errs[1] < errs[0] / 4.0

    def test_integrate_matrix_samples(self):
        c = small_contour()
        lam0 = 0.1j
        samples = np.zeros((len(c), 2, 2), dtype=complex)
        samples[:, 0, 0] = 1.0 / (c.lambdas - lam0)
        out = integrate(c, samples, cauchy=True)
        assert abs(out[0, 0] - 1.0) < 1e-5
        assert abs(out[1, 1]) == 0.0


class TestCoarsening:
    def _weyl(self, n_cut=65, n_circle=65):
        c = build_contour(r0=2.0, R=100.0, n_cut=n_cut, n_circle=n_circle,
                          delta=0.0)
        A = np.array([[1.0 + 0j]])
        M = np.array([model_weyl(A, nd.point) for nd in c.nodes])
        tail = tuple((SpectralPoint(1j * t), model_weyl(A, SpectralPoint(1j * t)))
                     for t in (50.0, 100.0, 200.0, 400.0))
        return WeylData(contour=c, M_samples=M, tail_samples=tail)

    def test_nodes_mode_halves_each_segment(self):
        w = self._weyl()
        cw = coarsen_weyl_data(w, "nodes")
        assert len(cw.contour) == 33 * 3
        assert cw.contour.R == w.contour.R
        # quadrature still closes: residue check on the coarse contour
        val = integrate(cw.contour,
                        1.0 / (cw.contour.lambdas - (-0.5)), cauchy=True)
        assert abs(val - 1.0) < 1e-3

    def test_radius_mode_halves_R(self):
        w = self._weyl()
        cw = coarsen_weyl_data(w, "radius")
        assert cw.contour.R == pytest.approx(w.contour.R / 2.0, rel=0.1)
        sig = np.sqrt(np.abs(w.contour.lambdas[:2]))
        sigc = np.sqrt(np.abs(cw.contour.lambdas[:2]))
        assert abs(sig[0] - sig[1]) == pytest.approx(abs(sigc[0] - sigc[1]))

    def test_nodes_mode_needs_odd_counts(self):
        w = self._weyl(n_cut=64, n_circle=64)
        with pytest.raises(ValueError):
            coarsen_weyl_data(w, "nodes")

    def test_unknown_mode_rejected(self):
        w = self._weyl()
        with pytest.raises(ValueError):
            coarsen_weyl_data(w, "finer")
