import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sci_integrate
from scipy import stats

from nce_lab.errors import InvalidParameter, NonFiniteIntegrand
from nce_lab.integrate import (DEFAULT_GRID_1D, DEFAULT_GRID_2D, GridSpec, McSpec, integrate_grid,
                               integrate_values, mc_expectation)


class TestGridSpec:
    def test_nodes_are_symmetric(self):
        x = GridSpec(-3.0, 3.0, 601).nodes
        assert np.array_equal(x, -x[::-1])
        assert x[300] == 0.0

    def test_weights_sum_to_volume(self):
        assert DEFAULT_GRID_1D.weights.sum() == pytest.approx(20.0, rel=1e-14)
        g = GridSpec(-2.0, 2.0, 41, 2)
        assert g.weights.sum() == pytest.approx(16.0, rel=1e-14)
        assert g.points.shape == (41 * 41, 2)

    def test_boundary_mask(self):
        g = GridSpec(-1.0, 1.0, 5, 2)
        assert g.boundary.sum() == 16

    def test_refined_halves_step(self):
        g = GridSpec(-1.0, 1.0, 11)
        assert g.refined().step == pytest.approx(g.step / 2)

    @pytest.mark.parametrize("args", [(1.0, 1.0, 10), (0.0, 1.0, 2), (0.0, 1.0, 10, 3)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            GridSpec(*args)


class TestIntegrate:
    def test_gaussian_mass_and_moments(self):
        # quadrature oracle: scipy quad on the same integrands
        pdf = stats.norm(0.4, 1.3).pdf
        for k in range(5):
            f = lambda x, k=k: x ** k * pdf(x)
            ref = sci_integrate.quad(f, -np.inf, np.inf)[0]
            assert integrate_grid(f) == pytest.approx(ref, rel=1e-8)

    def test_two_dimensional_correlated_gaussian(self):
        cov = np.array([[1.0, 0.5], [0.5, 1.0]])
        dist = stats.multivariate_normal(np.zeros(2), cov)
        assert integrate_grid(dist.pdf, DEFAULT_GRID_2D) == pytest.approx(1.0, abs=1e-9)
        cross = integrate_grid(lambda x: x[:, 0] * x[:, 1] * dist.pdf(x), DEFAULT_GRID_2D)
        assert cross == pytest.approx(0.5, abs=1e-9)

    def test_trailing_axes(self):
        g = DEFAULT_GRID_1D
        x = g.points
        p = stats.norm.pdf(x)
        vals = p[:, None, None] * np.stack([np.ones_like(x), x ** 2], axis=1)[:, :, None]
        out = integrate_values(vals, g)
        assert out.shape == (2, 1)
        assert out[:, 0] == pytest.approx([1.0, 1.0], abs=1e-10)

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteIntegrand):
            integrate_grid(lambda x: 1.0 / x, GridSpec(-1.0, 1.0, 11))

    def test_blowup_rejected(self):
        with pytest.raises(NonFiniteIntegrand):
            integrate_grid(lambda x: np.exp(x ** 2), GridSpec(-10.0, 10.0, 101))

    def test_tail_check(self):
        g = GridSpec(-5.0, 5.0, 1001)
        heavy = stats.cauchy.pdf(g.points)
        with pytest.raises(NonFiniteIntegrand):
            integrate_values(heavy, g, tail_check=True)
        light = stats.norm.pdf(GridSpec(-12.0, 12.0, 1001).points)
        integrate_values(light, GridSpec(-12.0, 12.0, 1001), tail_check=True)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2, 2), st.floats(0.3, 1.1))
    def test_gaussian_mass_property(self, mean, sd):
        # keep at least 7 sd between the mean and either grid edge
        assert integrate_grid(stats.norm(mean, sd).pdf) == pytest.approx(1.0, abs=1e-9)


class TestMonteCarlo:
    def test_mean_and_standard_error(self):
        spec = McSpec(20_000, seed=3)
        mean, se = mc_expectation(lambda n, rng: rng.standard_normal(n), lambda x: x ** 2, spec)
        assert abs(mean - 1.0) < 4 * se
        assert se == pytest.approx(math.sqrt(2 / 20_000), rel=0.05)

    def test_reproducible(self):
        spec = McSpec(1000, seed=11)
        sampler = lambda n, rng: rng.standard_normal(n)
        assert mc_expectation(sampler, np.cos, spec) == mc_expectation(sampler, np.cos, spec)

    def test_invalid_spec(self):
        with pytest.raises(InvalidParameter):
            McSpec(0)
        with pytest.raises(InvalidParameter):
            McSpec(10, seed=-1)
