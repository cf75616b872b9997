import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sci_integrate
from scipy import stats

from nce_lab.densities import CorrelatedGaussian, GaussianDensity, HistogramDensity
from nce_lab.divergence import (CHI_SQUARED, GENERALIZED_KL, HELLINGER2, DivergenceKind, Kind, divergence,
                                harmonic)
from nce_lab.errors import InvalidParameter, NonFiniteIntegrand
from nce_lab.integrate import GridSpec

WIDE = GridSpec(-30.0, 30.0, 6001)


def chi2_closed(s2):
    # chi^2 of N(0, s2) from N(0, 1): s2 / sqrt(2 s2 - 1) - 1
    return s2 / math.sqrt(2 * s2 - 1) - 1


def hellinger_closed(m1, v1, m2, v2):
    s1, s2 = math.sqrt(v1), math.sqrt(v2)
    return 1 - math.sqrt(2 * s1 * s2 / (v1 + v2)) * math.exp(-(m1 - m2) ** 2 / (4 * (v1 + v2)))


class TestClosedForms:
    @pytest.mark.parametrize("s2", [0.8, 1.5, 3.0, 6.0])
    def test_chi_squared(self, s2):
        assert divergence(CHI_SQUARED, GaussianDensity(), GaussianDensity(0, s2), WIDE) == pytest.approx(
            chi2_closed(s2), rel=1e-9)

    @pytest.mark.parametrize("m,v", [(0.5, 1.0), (-1.0, 2.5), (2.0, 0.5)])
    def test_hellinger(self, m, v):
        got = divergence(HELLINGER2, GaussianDensity(), GaussianDensity(m, v), WIDE)
        assert got == pytest.approx(hellinger_closed(0, 1, m, v), rel=1e-9)

    def test_generalized_kl_between_gaussians(self):
        # KL(N(0,1) || N(m, v)) for normalized q
        m, v = 0.7, 2.0
        ref = 0.5 * (math.log(v) + (1 + m * m) / v - 1)
        assert divergence(GENERALIZED_KL, GaussianDensity(), GaussianDensity(m, v)) == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("pi", [0.1, 0.5, 0.9])
    def test_harmonic_against_quad(self, pi):
        p, q = stats.norm(0, 1), stats.norm(0.5, 1.3)
        ref = 1 - sci_integrate.quad(lambda x: p.pdf(x) * q.pdf(x) / ((1 - pi) * p.pdf(x) + pi * q.pdf(x)),
                                     -15, 15, limit=200)[0]
        got = divergence(harmonic(pi), GaussianDensity(), GaussianDensity(0.5, 1.69))
        assert got == pytest.approx(ref, rel=1e-8)


class TestIdentities:
    @pytest.mark.parametrize("kind", [CHI_SQUARED, HELLINGER2, GENERALIZED_KL, harmonic(0.4)])
    @pytest.mark.parametrize("p", [GaussianDensity(0.2, 1.3), CorrelatedGaussian(0.5)], ids=["1d", "2d"])
    def test_self_divergence_is_zero(self, kind, p):
        assert abs(divergence(kind, p, p)) < 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 20.0))
    def test_generalized_kl_scaling(self, c):
        p = GaussianDensity(-0.3, 0.8)
        got = divergence(GENERALIZED_KL, p, lambda x: p.logpdf(x) + math.log(c))
        assert got == pytest.approx(c - 1 - math.log(c), abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-2, 2), st.floats(0.6, 3.0), st.floats(0.05, 0.95))
    def test_nonnegative_and_ordered(self, m, v, pi):
        p, q = GaussianDensity(), GaussianDensity(m, v)
        h = divergence(HELLINGER2, p, q, WIDE)
        d = divergence(harmonic(pi), p, q, WIDE)
        assert 0 <= h < 1 and 0 <= d < 1
        # the harmonic divergence at pi = 1/2 dominates the squared Hellinger distance
        assert divergence(harmonic(0.5), p, q, WIDE) >= h - 1e-12


class TestFailures:
    def test_chi_squared_diverges_for_narrow_noise(self):
        with pytest.raises(NonFiniteIntegrand):
            divergence(CHI_SQUARED, GaussianDensity(), GaussianDensity(0, 0.4), WIDE)

    def test_generalized_kl_diverges_off_support(self):
        q = HistogramDensity([-1.0, 0.0, 1.0], [0.5, 0.5])
        with pytest.raises(NonFiniteIntegrand):
            divergence(GENERALIZED_KL, GaussianDensity(), q)

    def test_invalid_weights(self):
        with pytest.raises(InvalidParameter):
            harmonic(1.0)
        with pytest.raises(InvalidParameter):
            DivergenceKind(Kind.CHI_SQUARED, 0.5)
