import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynglg.diagnostics import effective_sample_size, geweke_z, spectrum0_ar
from dynglg.errors import DegenerateChainError


def ar1(rng, n, rho, burn=200):
    e = rng.standard_normal(n + burn)
    x = np.empty_like(e)
    x[0] = e[0]
    for i in range(1, x.size):
        x[i] = rho * x[i - 1] + e[i]
    return x[burn:]


class TestSpectrum:
    def test_white_noise(self):
        x = np.random.default_rng(0).standard_normal(20000)
        assert spectrum0_ar(x) == pytest.approx(1.0, rel=0.05)

    def test_ar1(self):
        # spectral density at zero of AR(1) with unit innovations: 1 / (1 - rho)^2
        x = ar1(np.random.default_rng(1), 50000, 0.5)
        assert spectrum0_ar(x) == pytest.approx(4.0, rel=0.1)

    def test_constant(self):
        assert spectrum0_ar(np.ones(500)) == 0.0


class TestGeweke:
    def test_known_shift(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(1000)
        x[:100] += 10.0
        assert abs(geweke_z(x)) > 10

    def test_too_short(self):
        with pytest.raises(ValueError):
            geweke_z(np.zeros(99))

    def test_constant_chain(self):
        with pytest.raises(DegenerateChainError):
            geweke_z(np.full(500, 2.0))

    def test_segment_fractions(self):
        with pytest.raises(ValueError):
            geweke_z(np.random.default_rng(0).standard_normal(500), 0.6, 0.6)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(0.01, 100))
    def test_affine_invariance(self, shift, scale):
        x = np.random.default_rng(2).standard_normal(400)
        assert geweke_z(shift + scale * x) == pytest.approx(geweke_z(x), rel=1e-6, abs=1e-6)

    def test_calibration_small(self):
        rng = np.random.default_rng(3)
        z = np.array([geweke_z(rng.standard_normal(2000)) for _ in range(200)])
        assert 0.88 <= np.mean(np.abs(z) <= 1.96) <= 1.0


class TestESS:
    def test_iid_near_n(self):
        x = np.random.default_rng(0).standard_normal(10000)
        assert effective_sample_size(x) == pytest.approx(10000, rel=0.1)

    def test_ar1_ratio(self):
        rho = 0.9
        x = ar1(np.random.default_rng(1), 20000, rho)
        analytic = (1 - rho) / (1 + rho)
        assert effective_sample_size(x) / x.size == pytest.approx(analytic, rel=0.25)

    def test_constant_chain(self):
        assert effective_sample_size(np.ones(300)) == 300.0

    def test_antithetic_bounded(self):
        x = ar1(np.random.default_rng(2), 5000, -0.9)
        ess = effective_sample_size(x)
        assert x.size < ess <= x.size * np.log10(x.size)

    def test_too_short(self):
        with pytest.raises(ValueError):
            effective_sample_size(np.zeros(10))
