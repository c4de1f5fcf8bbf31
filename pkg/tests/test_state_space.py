import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynglg.errors import ParameterDomainError
from dynglg.spatial_cov import mvn_logpdf, mvn_chol
from dynglg.state_space import (
    DlmSpec,
    backward_sample,
    forecast_moments,
    forecast_states,
    forward_filter,
    kalman_smooth,
    next_evolution_cov,
)
from oracles import kalman_filter_dense, rts_dense


def random_dlm(rng, J, p, n, delta=None):
    F = rng.standard_normal((J, p, n))
    V = np.empty((J, n, n))
    for t in range(J):
        a = rng.standard_normal((n, n))
        V[t] = a @ a.T + 0.5 * np.eye(n)
    G = np.eye(p) + 0.1 * rng.standard_normal((p, p))
    b = rng.standard_normal((p, p))
    W = 0.1 * (b @ b.T) + 0.05 * np.eye(p)
    m0 = rng.standard_normal(p)
    C0 = 2.0 * np.eye(p)
    y = rng.standard_normal((J, n))
    if delta is None:
        return DlmSpec(F=F, V=V, G=G, delta=1.0, m0=m0, C0=C0, W=W), y
    return DlmSpec(F=F, V=V, G=G, delta=delta, m0=m0, C0=C0), y


def local_level(J, z, W=1.0, V=1.0, C0=1.0, delta=1.0, explicit=True):
    return DlmSpec(
        F=np.ones((J, 1, 1)), V=np.full((J, 1, 1), V), G=np.eye(1), delta=delta,
        m0=np.zeros(1), C0=np.full((1, 1), C0), W=np.full((1, 1), W) if explicit else None,
    )


class TestForwardFilter:
    def test_hand_computed_local_level(self):
        mom = forward_filter(local_level(1, None), np.array([[3.0]]))
        assert mom.a[0, 0] == 0.0
        assert mom.R[0, 0, 0] == pytest.approx(2.0)
        assert mom.Q[0, 0, 0] == pytest.approx(3.0)
        assert mom.A[0, 0, 0] == pytest.approx(2 / 3)
        assert mom.m[1, 0] == pytest.approx(2.0)
        assert mom.C[1, 0, 0] == pytest.approx(2 / 3)

    def test_discount_evolution(self):
        spec = local_level(1, None, C0=0.9, delta=0.9, explicit=False)
        mom = forward_filter(spec, np.array([[0.0]]))
        assert mom.W[0, 0, 0] == pytest.approx(0.1)
        assert mom.R[0, 0, 0] == pytest.approx(1.0)

    def test_zero_innovation(self):
        rng = np.random.default_rng(0)
        spec, _ = random_dlm(rng, 6, 2, 3)
        # observations equal to the forecasts of a filter that never learns
        m = spec.m0
        obs = []
        for t in range(6):
            m = spec.G @ m
            obs.append(spec.F[t].T @ m)
        mom = forward_filter(spec, np.array(obs))
        np.testing.assert_allclose(mom.m[1:], mom.a, atol=1e-10)

    def test_rejects_bad_discount(self):
        with pytest.raises(ParameterDomainError):
            local_level(2, None, delta=0.0, explicit=False)
        with pytest.raises(ParameterDomainError):
            local_level(2, None, delta=1.2, explicit=False)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 20), st.integers(1, 3), st.integers(1, 4))
    def test_matches_dense_oracle(self, seed, J, p, n):
        rng = np.random.default_rng(seed)
        spec, y = random_dlm(rng, J, p, n)
        mom = forward_filter(spec, y)
        a, R, f, Q, m, C = kalman_filter_dense(spec.F, spec.V, spec.G, spec.W, spec.m0, spec.C0, y)
        np.testing.assert_allclose(mom.a, a, atol=1e-10)
        np.testing.assert_allclose(mom.R, R, atol=1e-10)
        np.testing.assert_allclose(mom.f, f, atol=1e-10)
        np.testing.assert_allclose(mom.Q, Q, atol=1e-10)
        np.testing.assert_allclose(mom.m, m, atol=1e-10)
        np.testing.assert_allclose(mom.C, C, atol=1e-10)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.8, 0.999))
    def test_discount_matches_dense_oracle(self, seed, delta):
        rng = np.random.default_rng(seed)
        spec, y = random_dlm(rng, 12, 2, 2, delta=delta)
        mom = forward_filter(spec, y)
        G = spec.G
        _, R, _, _, m, C = kalman_filter_dense(
            spec.F, spec.V, G, lambda Cp: (1 - delta) / delta * G @ Cp @ G.T, spec.m0, spec.C0, y
        )
        np.testing.assert_allclose(mom.R, R, atol=1e-10)
        np.testing.assert_allclose(mom.m, m, atol=1e-10)
        np.testing.assert_allclose(mom.C, C, atol=1e-10)

    def test_posterior_never_inflates(self):
        rng = np.random.default_rng(5)
        spec, y = random_dlm(rng, 15, 3, 2, delta=0.95)
        mom = forward_filter(spec, y)
        for t in range(15):
            assert np.linalg.eigvalsh(mom.R[t] - mom.C[t + 1])[0] >= -1e-10

    def test_loglik_equals_joint_density(self):
        rng = np.random.default_rng(6)
        J, p, n = 4, 2, 3
        spec, y = random_dlm(rng, J, p, n)
        mom = forward_filter(spec, y)
        # joint Gaussian of (y_1..y_J) built by stacking the state recursion
        G, W = spec.G, spec.W
        means, covs = [spec.m0], [spec.C0]
        for _ in range(J):
            means.append(G @ means[-1])
        Sx = np.zeros(((J + 1) * p, (J + 1) * p))
        blocks = [[None] * (J + 1) for _ in range(J + 1)]
        var = [spec.C0]
        for t in range(1, J + 1):
            var.append(G @ var[-1] @ G.T + W)
        for s in range(J + 1):
            for t in range(J + 1):
                if s <= t:
                    blocks[s][t] = var[s] @ np.linalg.matrix_power(G, t - s).T
                else:
                    blocks[s][t] = np.linalg.matrix_power(G, s - t) @ var[t]
                Sx[s * p:(s + 1) * p, t * p:(t + 1) * p] = blocks[s][t]
        H = np.zeros((J * n, (J + 1) * p))
        for t in range(J):
            H[t * n:(t + 1) * n, (t + 1) * p:(t + 2) * p] = spec.F[t].T
        Vbig = np.zeros((J * n, J * n))
        for t in range(J):
            Vbig[t * n:(t + 1) * n, t * n:(t + 1) * n] = spec.V[t]
        cov = H @ Sx @ H.T + Vbig
        mean = H @ np.concatenate(means)
        joint = mvn_logpdf(y.ravel(), mean, mvn_chol(cov))
        assert np.sum(mom.loglik) == pytest.approx(joint, abs=1e-8)

    def test_unit_discount_is_static_regression(self):
        rng = np.random.default_rng(7)
        J, p, n = 10, 2, 3
        F = rng.standard_normal((J, p, n))
        V = np.stack([np.eye(n) * 0.7] * J)
        C0 = 5.0 * np.eye(p)
        y = rng.standard_normal((J, n))
        mom = forward_filter(DlmSpec(F=F, V=V, G=np.eye(p), delta=1.0, m0=np.zeros(p), C0=C0), y)
        X = np.vstack([F[t].T for t in range(J)])
        prec = np.linalg.inv(C0) + X.T @ X / 0.7
        np.testing.assert_allclose(mom.C[J], np.linalg.inv(prec), atol=1e-10)

    def test_missing_row_keeps_prior(self):
        spec = local_level(3, None)
        mom = forward_filter(spec, np.array([[1.0], [np.nan], [2.0]]))
        assert mom.m[2, 0] == mom.a[1, 0]
        assert mom.C[2, 0, 0] == mom.R[1, 0, 0]


class TestBackward:
    def test_decoupled_when_G_zero(self):
        rng = np.random.default_rng(0)
        spec, y = random_dlm(rng, 5, 2, 2)
        spec = DlmSpec(F=spec.F, V=spec.V, G=np.zeros((2, 2)), delta=1.0, m0=spec.m0, C0=spec.C0, W=spec.W)
        mom = forward_filter(spec, y)
        s, S = kalman_smooth(spec, mom)
        np.testing.assert_allclose(s, mom.m, atol=1e-12)
        np.testing.assert_allclose(S, mom.C, atol=1e-12)
        draws = np.array([backward_sample(rng, spec, mom) for _ in range(4000)])
        np.testing.assert_allclose(draws.mean(axis=0), mom.m, atol=0.15)

    def test_degenerate_posterior(self):
        spec = DlmSpec(F=np.ones((3, 1, 1)), V=np.full((3, 1, 1), 1.0), G=np.eye(1), delta=1.0,
                       m0=np.array([1.5]), C0=np.zeros((1, 1)))
        mom = forward_filter(spec, np.array([[0.0], [4.0], [2.0]]))
        out = backward_sample(np.random.default_rng(0), spec, mom)
        np.testing.assert_array_equal(out, np.full((4, 1), 1.5))

    def test_smoother_with_no_times(self):
        spec = DlmSpec(F=np.ones((0, 1, 1)), V=np.ones((0, 1, 1)), G=np.eye(1), delta=1.0,
                       m0=np.array([0.4]), C0=np.array([[2.0]]))
        mom = forward_filter(spec, np.zeros((0, 1)))
        s, S = kalman_smooth(spec, mom)
        assert s[0, 0] == 0.4 and S[0, 0, 0] == 2.0

    def test_smoother_matches_dense(self):
        rng = np.random.default_rng(8)
        spec, y = random_dlm(rng, 10, 2, 2)
        mom = forward_filter(spec, y)
        s, S = kalman_smooth(spec, mom)
        a, R, _, _, m, C = kalman_filter_dense(spec.F, spec.V, spec.G, spec.W, spec.m0, spec.C0, y)
        s2, S2 = rts_dense(spec.G, a, R, m, C)
        np.testing.assert_allclose(s, np.array(s2), atol=1e-10)
        np.testing.assert_allclose(S, np.array(S2), atol=1e-10)

    def test_local_level_draws_match_smoother(self):
        rng = np.random.default_rng(9)
        J = 10
        y = rng.standard_normal((J, 1)).cumsum(axis=0)
        spec = local_level(J, None, W=0.5, V=1.0, C0=4.0)
        mom = forward_filter(spec, y)
        s, S = kalman_smooth(spec, mom)
        M = 20000
        draws = np.array([backward_sample(rng, spec, mom)[5, 0] for _ in range(M)])
        se = np.sqrt(S[5, 0, 0] / M)
        assert abs(draws.mean() - s[5, 0]) < 3 * se

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(10)
        spec, y = random_dlm(rng, 8, 2, 2, delta=0.95)
        mom = forward_filter(spec, y)
        a = backward_sample(np.random.default_rng(3), spec, mom)
        b = backward_sample(np.random.default_rng(3), spec, mom)
        np.testing.assert_array_equal(a, b)


class TestForecast:
    def test_zero_evolution_repeats_start(self):
        spec = local_level(3, None, W=0.0)
        mom = forward_filter(spec, np.array([[1.0], [2.0], [3.0]]))
        start = np.array([2.5])
        out = forecast_states(np.random.default_rng(0), spec, mom, 4, start=start)
        np.testing.assert_array_equal(out, np.full((4, 1), 2.5))

    def test_moments_by_simulation(self):
        rng = np.random.default_rng(11)
        spec = local_level(5, None, delta=0.8, explicit=False, C0=2.0)
        mom = forward_filter(spec, rng.standard_normal((5, 1)))
        W = next_evolution_cov(spec, mom)[0, 0]
        C = mom.C[5, 0, 0]
        draws = np.array([forecast_states(rng, spec, mom, 2) for _ in range(100_000)])
        se = np.sqrt((C + W) / draws.shape[0])
        assert abs(draws[:, 0, 0].mean() - mom.m[5, 0]) < 3 * se
        assert draws[:, 1, 0].var() == pytest.approx(C + 2 * W, rel=0.05)

    def test_forecast_moments_match_missing_data_filter(self):
        rng = np.random.default_rng(12)
        spec, y = random_dlm(rng, 8, 2, 2, delta=0.9)
        mom = forward_filter(spec, y)
        a, R = forecast_moments(spec, mom, 1)
        ext = DlmSpec(F=np.concatenate([spec.F, spec.F[-1:]]), V=np.concatenate([spec.V, spec.V[-1:]]),
                      G=spec.G, delta=spec.delta, m0=spec.m0, C0=spec.C0)
        mom2 = forward_filter(ext, np.vstack([y, np.full((1, 2), np.nan)]))
        np.testing.assert_allclose(a[0], mom2.a[-1], atol=1e-10)
        np.testing.assert_allclose(R[0], mom2.R[-1], atol=1e-10)
