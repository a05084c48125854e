import numpy as np
import pytest

from cbimoments.quadrature import adaptive_simpson, composite_weight_matrix


class TestCompositeWeights:
    def test_rows_integrate_cubics_exactly(self):
        """All rows m >= 2 are built from Simpson/3-8 panels, exact on cubics."""
        M, h = 11, 0.3
        W = composite_weight_matrix(M, h)
        x = h * np.arange(M + 1)
        for poly, anti in [
            (lambda s: np.ones_like(s), lambda s: s),
            (lambda s: s, lambda s: s**2 / 2),
            (lambda s: s**2, lambda s: s**3 / 3),
            (lambda s: s**3, lambda s: s**4 / 4),
        ]:
            vals = poly(x)
            for m in range(2, M + 1):
                assert W[m] @ vals == pytest.approx(anti(x[m]), rel=1e-13, abs=1e-13)

    def test_row_one_is_trapezoid(self):
        W = composite_weight_matrix(4, 0.5)
        assert np.allclose(W[1, :2], [0.25, 0.25])

    def test_lower_triangular(self):
        W = composite_weight_matrix(9, 0.1)
        assert np.allclose(np.triu(W, k=1), 0.0)

    def test_fourth_order_convergence(self):
        f = np.cos
        exact = np.sin(2.0)
        errs = []
        for M in (64, 128):
            W = composite_weight_matrix(M, 2.0 / M)
            x = np.linspace(0.0, 2.0, M + 1)
            errs.append(abs(W[M] @ f(x) - exact))
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.2)


class TestAdaptiveSimpson:
    def test_smooth_scalar(self):
        val = adaptive_simpson(np.exp, 0.0, 1.0, 1e-12)
        assert val == pytest.approx(np.e - 1.0, abs=1e-11)

    def test_matrix_valued(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])

        def f(t):
            return np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])

        got = adaptive_simpson(f, 0.0, np.pi / 2, 1e-11)
        want = np.array([[1.0, 1.0], [-1.0, 1.0]])
        assert np.allclose(got, want, atol=1e-10)
        assert got.shape == A.shape

    def test_zero_width(self):
        assert adaptive_simpson(np.exp, 1.0, 1.0, 1e-10) == 0.0

    def test_reversed_limits(self):
        assert adaptive_simpson(np.exp, 1.0, 0.0, 1e-12) == pytest.approx(1.0 - np.e, abs=1e-11)

    def test_peaked_integrand(self):
        val = adaptive_simpson(lambda t: 1.0 / (1e-3 + (t - 0.37) ** 2), 0.0, 1.0, 1e-9)
        want = (np.arctan((1 - 0.37) / np.sqrt(1e-3)) + np.arctan(0.37 / np.sqrt(1e-3))) / np.sqrt(1e-3)
        assert val == pytest.approx(want, rel=1e-8)
