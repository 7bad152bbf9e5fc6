"""Integrator behavior: schedules, fixed points, noise contracts, determinism."""

import math
from dataclasses import replace

import numpy as np
import pytest

from cvcim.boxqp import BoxQpInstance
from cvcim.dynamics import (
    CimParams,
    amplitude_domain,
    initial_state,
    measured_amplitudes,
    measurement_at,
    pump_at,
    simulate,
    simulate_many,
    step,
)
from cvcim.feedback import PolicyConfig


# synthetic reference values below are deliberately loose; beating them is fine
pytestmark = pytest.mark.filterwarnings("ignore::cvcim.metrics.ReferenceBeatenWarning")


def toy_instance(n=2, seed=0, c_zero=True):
    rng = np.random.default_rng(seed)
    c = np.zeros(n) if c_zero else rng.standard_normal(n)
    return BoxQpInstance(Q=rng.standard_normal((n, n)), c=c)


class TestSchedules:
    def test_pump_ramp(self):
        p = CimParams()
        assert pump_at(0, p) == 0.0
        assert pump_at(p.T, p) == 2.5
        assert pump_at(p.T / 2, p) == 1.25

    def test_measurement_decay(self):
        p = CimParams()
        assert measurement_at(0, p) == 25.0
        assert measurement_at(p.T, p) == pytest.approx(25.0 * math.exp(-3.0), rel=1e-12)
        flat = CimParams(j_decay=0.0)
        for t in (0, 1, flat.T // 3, flat.T):
            assert measurement_at(t, flat) == 25.0

    def test_amplitude_domain_defaults(self):
        dom = amplitude_domain(CimParams())
        expected = (2.5 - (1.0 + 25.0 * math.exp(-3.0))) / 0.01**2
        assert dom.a == pytest.approx(expected, rel=1e-12)
        assert dom.a == pytest.approx(2553.23, abs=0.005)
        assert dom.sqrt_a == pytest.approx(50.53, abs=0.005)

    def test_no_bistability_error(self):
        # pump_max=2 with j_T=1 sits exactly at the boundary
        params = CimParams(pump_max=2.0, j0=1.0, j_decay=0.0)
        with pytest.raises(ValueError, match="no bistability"):
            amplitude_domain(params)

    def test_quarter_a_when_g_doubles(self):
        a1 = amplitude_domain(CimParams(g=0.01)).a
        a2 = amplitude_domain(CimParams(g=0.02)).a
        assert a2 == pytest.approx(a1 / 4.0, rel=1e-12)


class TestStepFixedPoints:
    def test_mu_converges_to_double_well_minimum(self):
        # frozen p=2, j=0.5, g=0.1, lam=0, noise off: mu* = sqrt((p-1-j)/g^2) = sqrt(50);
        # stepping repeatedly at t=1 with T=2 and pump_max=4 pins p at exactly 2
        params = CimParams(
            T=2, dt=0.01, g=0.1, lam=0.0, pump_max=4.0, j0=0.5, j_decay=0.0,
            noise_enabled=False,
        )
        assert pump_at(1, params) == 2.0
        inst = toy_instance()
        rng = np.random.default_rng(0)
        state = initial_state(2, PolicyConfig.gd())
        state = replace(state, mu=np.array([1.0, 1.0]))
        for _ in range(4000):
            state = step(state, 1, inst, params, PolicyConfig.gd(), rng)
        np.testing.assert_allclose(state.mu, math.sqrt(50.0), atol=1e-6)

    def test_sigma_converges_to_half(self):
        # p=0, j=1, mu pinned at 0 (c=0, lam=0, noise off): sigma -> 1/2
        params = CimParams(
            T=10000, dt=0.001, g=0.1, lam=0.0, pump_max=0.0, j0=1.0, j_decay=0.0,
            noise_enabled=False,
        )
        inst = BoxQpInstance(Q=np.eye(2), c=np.zeros(2))
        rng = np.random.default_rng(0)
        state = initial_state(2, PolicyConfig.gd())
        state = replace(state, sigma=np.array([0.3, 0.3]))
        for _ in range(9000):
            state = step(state, 0, inst, params, PolicyConfig.gd(), rng)
        np.testing.assert_array_equal(state.mu, [0.0, 0.0])
        np.testing.assert_allclose(state.sigma, 0.5, atol=1e-8)

    def test_step_validation(self):
        params = CimParams(T=10)
        inst = toy_instance()
        state = initial_state(2, PolicyConfig.gd())
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            step(state, 10, inst, params, PolicyConfig.gd(), rng)
        diverged = type(state)(state.mu, state.sigma, 3, state.policy_state, 3)
        with pytest.raises(ValueError):
            step(diverged, 3, inst, params, PolicyConfig.gd(), rng)


class TestMeasurement:
    def test_noise_scale_closed_form(self):
        # std of (measured - mu) is 1/sqrt(4 j dt) = 2 for j=25, dt=0.0025
        rng = np.random.default_rng(123)
        n = 100_000
        mu = np.zeros(n)
        z = rng.standard_normal(n)
        shift = measured_amplitudes(mu, z, 25.0, 0.0025) - mu
        assert 1.98 <= float(np.std(shift)) <= 2.02

    def test_exactly_n_draws_per_step(self):
        class CountingRng:
            def __init__(self, seed):
                self.inner = np.random.default_rng(seed)
                self.draws = 0

            def standard_normal(self, n):
                self.draws += int(n)
                return self.inner.standard_normal(n)

        inst = toy_instance(n=3)
        params = CimParams(T=50, lam=10.0)
        rng = CountingRng(5)
        state = initial_state(3, PolicyConfig.adam())
        for t in range(20):
            state = step(state, t, inst, params, PolicyConfig.adam(), rng)
            assert rng.draws == 3 * (t + 1)

    def test_no_draws_with_noise_off(self):
        class Exploding:
            def standard_normal(self, n):  # pragma: no cover
                raise AssertionError("noise-off step must not draw")

        inst = toy_instance()
        params = CimParams(T=10, noise_enabled=False)
        state = initial_state(2, PolicyConfig.gd())
        step(state, 0, inst, params, PolicyConfig.gd(), Exploding())


class TestSimulate:
    def anneal_params(self, **kw):
        # slow anneal with a long bistable window so the endpoint tracks the wells
        base = dict(
            T=20000, dt=0.02, g=0.1, lam=0.0, pump_max=3.0, j0=0.05, j_decay=0.0,
            noise_enabled=False,
        )
        base.update(kw)
        return CimParams(**base)

    def test_pure_anneal_reaches_wells(self):
        params = self.anneal_params()
        inst = toy_instance(n=3)
        dom = amplitude_domain(params)
        mu0 = np.array([0.5, -0.5, 0.25])
        state, _ = simulate(inst, params, PolicyConfig.gd(), seed=1, f_star=-1.0, mu0=mu0)
        np.testing.assert_allclose(np.abs(state.mu), dom.sqrt_a, rtol=1e-3)
        assert np.sign(state.mu[1]) == -1.0

    def test_zero_start_stays_zero_without_feedback(self):
        params = self.anneal_params()
        inst = toy_instance(n=2)
        state, _ = simulate(inst, params, PolicyConfig.gd(), seed=1, f_star=-1.0)
        np.testing.assert_array_equal(state.mu, [0.0, 0.0])
        assert (state.sigma > 0).all()

    def test_sign_symmetry(self):
        # c = 0, noise off, lam = 0: negating mu0 negates the trajectory exactly
        params = self.anneal_params()
        inst = toy_instance(n=2, c_zero=True)
        mu0 = np.array([0.3, -0.7])
        plus, _ = simulate(inst, params, PolicyConfig.gd(), seed=1, f_star=-1.0, mu0=mu0)
        minus, _ = simulate(inst, params, PolicyConfig.gd(), seed=1, f_star=-1.0, mu0=-mu0)
        np.testing.assert_array_equal(plus.mu, -minus.mu)
        np.testing.assert_array_equal(plus.sigma, minus.sigma)

    def test_determinism(self):
        inst = toy_instance(n=3)
        params = CimParams(T=300, lam=50.0)
        a_state, a_series = simulate(inst, params, PolicyConfig.adam(), seed=42, f_star=-2.0)
        b_state, b_series = simulate(inst, params, PolicyConfig.adam(), seed=42, f_star=-2.0)
        np.testing.assert_array_equal(a_state.mu, b_state.mu)
        np.testing.assert_array_equal(a_series.gaps, b_series.gaps)
        np.testing.assert_array_equal(a_series.roundtrips, b_series.roundtrips)

    def test_gd_equals_momentum_theta_zero(self):
        inst = toy_instance(n=4)
        params = CimParams(T=400, lam=100.0)
        g_state, g_series = simulate(inst, params, PolicyConfig.gd(), seed=7, f_star=-2.0)
        m_state, m_series = simulate(
            inst, params, PolicyConfig.momentum(theta=0.0), seed=7, f_star=-2.0
        )
        np.testing.assert_array_equal(g_state.mu, m_state.mu)
        np.testing.assert_array_equal(g_series.gaps, m_series.gaps)

    def test_batch_matches_singles_bitwise(self):
        inst = toy_instance(n=4)
        params = CimParams(T=500, lam=200.0)
        policy = PolicyConfig.adam()
        seeds = [101, 102, 103, 104, 105]
        batch = simulate_many(inst, params, policy, seeds, stride=7, f_star=-2.0)
        for seed, (b_state, b_series) in zip(seeds, batch):
            s_state, s_series = simulate(inst, params, policy, seed, stride=7, f_star=-2.0)
            np.testing.assert_array_equal(b_state.mu, s_state.mu)
            np.testing.assert_array_equal(b_state.sigma, s_state.sigma)
            np.testing.assert_array_equal(b_series.gaps, s_series.gaps)
            assert b_state.diverged_at == s_state.diverged_at

    def test_simulate_matches_step_loop(self):
        inst = toy_instance(n=3)
        params = CimParams(T=120, lam=80.0)
        policy = PolicyConfig.momentum()
        state, _ = simulate(inst, params, policy, seed=9, f_star=-2.0)
        manual = initial_state(3, policy)
        rng = np.random.default_rng(9)
        for t in range(params.T):
            manual = step(manual, t, inst, params, policy, rng)
        np.testing.assert_array_equal(state.mu, manual.mu)
        np.testing.assert_array_equal(state.sigma, manual.sigma)

    def test_missing_reference_errors(self):
        inst = toy_instance()
        with pytest.raises(ValueError, match="reference"):
            simulate(inst, CimParams(T=10), PolicyConfig.gd(), seed=1)
        with pytest.raises(ValueError, match="zero"):
            simulate(inst, CimParams(T=10), PolicyConfig.gd(), seed=1, f_star=0.0)

    def test_recording_grid(self):
        inst = toy_instance()
        params = CimParams(T=25, lam=0.0, noise_enabled=False)
        _, series = simulate(inst, params, PolicyConfig.gd(), seed=1, f_star=-1.0, stride=10)
        np.testing.assert_array_equal(series.roundtrips, [0, 10, 20, 25])
        assert (np.diff(series.roundtrips) > 0).all()


class TestDivergence:
    def blowup_setup(self):
        # kappa-like skew with huge feedback guarantees blow-up for plain GD
        rng = np.random.default_rng(3)
        q = rng.standard_normal((4, 4)) * 1e6
        inst = BoxQpInstance(Q=q + q.T, c=np.zeros(4))
        params = CimParams(T=2000, lam=5000.0)
        return inst, params

    def test_divergence_recorded_and_frozen(self):
        inst, params = self.blowup_setup()
        state, series = simulate(inst, params, PolicyConfig.gd(), seed=4, f_star=-1.0)
        assert state.diverged_at is not None
        assert series.diverged_at == state.diverged_at
        assert state.roundtrip == state.diverged_at
        # series stops before the divergence roundtrip and stays finite
        assert series.roundtrips[-1] < state.diverged_at
        assert np.isfinite(series.gaps).all()

    def test_sigma_stays_in_band_with_default_schedules(self):
        inst = toy_instance(n=2)
        params = CimParams(noise_enabled=False, lam=0.0)
        rng = np.random.default_rng(0)
        state = initial_state(2, PolicyConfig.gd())
        for t in range(params.T):
            state = step(state, t, inst, params, PolicyConfig.gd(), rng)
            assert (state.sigma > 0.0).all() and (state.sigma < 10.0).all()
