import math

import mpmath
import numpy as np
import pytest

from metawalk.bounds import (
    WindowParams,
    boundary_hit_bound,
    chain_extinction_constants,
    continuous_extinction_bound,
    discrete_extinction_bound,
    extinction_constants,
    linear_speed_extinction_bound,
    metastable_window,
    mixing_bound,
    theorem_conditions_check,
    window_params_from_spec,
)
from metawalk.contact import contact_constants, translated_contact_spec
from metawalk.model import (
    constant_rate_spec,
    example_walk_spec,
    linear_speed_walk_spec,
    pure_death_spec,
    symmetric_walk_spec,
)
from metawalk.stationary import stationary_distribution
from metawalk.transient import TransientPropagator

mpmath.mp.dps = 50


def exact_discrete_extinction(p, n, i):
    """P(T < i) for the discrete walk from n, stepping down surely at n, via the law after each step."""
    P = np.zeros((n + 1, n + 1))
    P[0, 0] = 1.0
    for k in range(1, n):
        P[k, k + 1] = p
        P[k, k - 1] = 1 - p
    P[n, n - 1] = 1.0
    x = np.zeros(n + 1)
    x[n] = 1.0
    for _ in range(i - 1):
        x = x @ P
    return x[0]


class TestDiscrete:
    def test_i_equal_one(self):
        assert discrete_extinction_bound(0.6, 20, 1).value == 0.0

    def test_value(self):
        assert discrete_extinction_bound(0.6, 20, 100).value == pytest.approx(99 * (2 / 3) ** 19, rel=1e-13)
        assert discrete_extinction_bound(0.6, 20, 100).value == pytest.approx(0.04466, abs=1e-5)

    def test_rejects_unbiased(self):
        with pytest.raises(ValueError):
            discrete_extinction_bound(0.5, 10, 10)

    @pytest.mark.parametrize("p", [0.55, 0.6, 0.7])
    @pytest.mark.parametrize("n", [5, 12, 25])
    @pytest.mark.parametrize("i", [10, 60, 200])
    def test_exact_dominated(self, p, n, i):
        assert exact_discrete_extinction(p, n, i) <= discrete_extinction_bound(p, n, i).value


class TestContinuous:
    def test_constants_eps_one(self):
        c = extinction_constants(1.0)
        assert c.delta == pytest.approx(math.log(7 / 6), rel=1e-15)
        assert c.eta == pytest.approx(0.011293536970115453, rel=1e-12)
        assert c.C1 == pytest.approx(61.375562181637704, rel=1e-12)
        assert c.C2 == pytest.approx(88.54621919122093, rel=1e-12)
        assert c.C1 == pytest.approx(math.log(2) / c.eta, rel=1e-15)

    def test_rho_power(self):
        a = continuous_extinction_bound(3.0, 0.5, 11, 1e4)
        b = continuous_extinction_bound(3.0, 0.5, 21, 1e4)
        assert b.value / (1 + 1.0) / 3e4 == pytest.approx((a.value / 2 / 3e4) ** 2, rel=1e-12)

    def test_precondition_reported(self):
        assert not continuous_extinction_bound(3.0, 0.5, 11, 1.0).preconditions_hold
        assert not continuous_extinction_bound(3.0, 1.5, 11, 1e9).preconditions_hold

    def test_chain_constants(self):
        assert chain_extinction_constants(constant_rate_spec(15, 2.0, 1.0)) == (3.0, 0.5)

    @pytest.mark.parametrize("seed", range(20))
    def test_formulas_against_high_precision(self, seed):
        rng = np.random.default_rng(seed)
        eps = float(rng.uniform(0.1, 3))
        kappa, rho, n, t = float(rng.uniform(0.5, 5)), float(rng.uniform(0.4, 0.99)), int(rng.integers(2, 60)), \
            float(rng.uniform(1, 1e4))
        E = mpmath.mpf(eps)
        delta = mpmath.log((1 + 3 * E / 4) / (1 + E / 2))
        eta = mpmath.exp(-delta) - (1 - delta)
        C1 = max(mpmath.log(2 / E) / eta, 2 + 4 / E)
        c = extinction_constants(eps)
        assert c.eta == pytest.approx(float(eta), rel=1e-12)
        assert c.C1 == pytest.approx(float(C1), rel=1e-12)
        ref = (1 + E) * kappa * t * mpmath.mpf(rho) ** (n - 1)
        assert continuous_extinction_bound(kappa, rho, n, t, eps).value == pytest.approx(float(ref), rel=1e-12)
        assert linear_speed_extinction_bound(n, rho, t / 100).value == pytest.approx(
            float(n * mpmath.exp(-mpmath.mpf(rho) * t / 100)), rel=1e-12)
        assert mixing_bound(n, rho, t / 100).value == pytest.approx(
            float(2 * n * mpmath.exp(-mpmath.mpf(rho) * t / 100)), rel=1e-12)
        params = WindowParams(1000, 10.0, n + 2, 0.01, rho, kappa)
        ref_hit = (2 + E) * kappa * t * mpmath.mpf(rho) ** (mpmath.mpf(n + 2) / 2 - 1)
        assert boundary_hit_bound(params, t, eps).value == pytest.approx(float(ref_hit), rel=1e-12)


class TestLinearAndMixing:
    def test_linear_values(self):
        assert linear_speed_extinction_bound(20, 1.0, 0.0).value == 20
        assert linear_speed_extinction_bound(20, 1.0, 5.0).value == pytest.approx(0.1348, abs=5e-5)

    @pytest.mark.parametrize("t", [1.0, 2.0, 3.0])
    def test_pure_death_dominated(self, t):
        tail = 1 - TransientPropagator(pure_death_spec(20), 20).at(t)[0]
        assert tail <= linear_speed_extinction_bound(20, 1.0, t).value

    def test_mixing_values(self):
        assert mixing_bound(7, 0.3, 0.0).value == 14
        t_star = mixing_bound(343, 1 / 2401, 0.0).extras["t_star"]
        assert t_star == pytest.approx(2401 * math.log(686), rel=1e-14)
        assert t_star == pytest.approx(15680.63718416985, rel=1e-12)

    @pytest.mark.parametrize("x0", [-50, 50])
    def test_mixing_dominates_exact_cdf(self, x0):
        spec = linear_speed_walk_spec(50, 0.1)
        pi = stationary_distribution(spec).cdf()
        prop = TransientPropagator(spec, x0)
        for t in (20.0, 50.0, 100.0):
            assert np.max(np.abs(prop.at(t).cdf() - pi)) <= mixing_bound(50, 0.1, t).value


class TestWindow:
    def base(self, **kw):
        args = dict(n=2401, sigma_n=49.0, a_n=343, d_n=1 / 2401, rho_n=0.93, kappa_n=2.0)
        args.update(kw)
        return WindowParams(**args)

    def test_default_c(self):
        assert self.base().c_n == pytest.approx(1 / math.log(343))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            self.base(d_n=0.0)

    def test_antitone_in_rho(self):
        his = [metastable_window(self.base(rho_n=r)).log_t_hi for r in (0.5, 0.7, 0.9, 0.99)]
        assert all(b < a for a, b in zip(his, his[1:]))

    def test_crossover_empty(self):
        p = self.base()
        d = p.kappa_n * p.rho_n ** (p.a_n / 2)
        assert metastable_window(self.base(d_n=d)).empty

    def test_hit_bound_monotone(self):
        p = self.base()
        c = extinction_constants(1.0)
        t0 = (c.C1 + c.C2 * p.a_n * -math.log(p.rho_n)) / p.kappa_n
        a, b = boundary_hit_bound(p, t0), boundary_hit_bound(p, 2 * t0)
        assert a.preconditions_hold and b.value > a.value

    def test_example_walk_window_regression(self):
        # measured constants over the live window, c_n = 1/log n
        params, _ = window_params_from_spec(example_walk_spec(2401), 49.0, 343, c_n=1 / math.log(2401))
        assert params.rho_n == pytest.approx(0.9331519626894675, rel=1e-12)
        w = metastable_window(params)
        assert w.log_t_lo == pytest.approx(11.600006867165806, rel=1e-12)
        assert w.log_t_hi == pytest.approx(9.051443330629136, rel=1e-12)
        assert w.empty

    def test_example_walk_hit_bound_regression(self):
        params, _ = window_params_from_spec(example_walk_spec(2401), 49.0, 343, c_n=1 / math.log(2401))
        rep = boundary_hit_bound(params, 1e11)
        assert rep.log_value == pytest.approx(15.392768025335803, rel=1e-12)

    def test_contact_window_regression(self):
        w = metastable_window(contact_constants(2401, 2.0).window_params())
        assert w.log_t_lo == pytest.approx(7.090493415661308, rel=1e-10)
        assert w.log_t_hi == pytest.approx(2.126636123068783, rel=1e-10)


class TestConditions:
    def test_example_walk_passes(self):
        rep = theorem_conditions_check(example_walk_spec(2401), 49.0, 343)
        assert rep.passed, rep.summary()
        assert rep.extras["d_discrete"] == pytest.approx(1 / 2401, rel=1e-12)
        assert rep.extras["d_exact"] == pytest.approx(1 / 2401, rel=1e-15)
        # the maximizing state |k| = a_n/2 gives rho close to 1 - n^(-1/4)/2
        assert abs(rep.extras["rho_n"] - (1 - 0.5 * 2401 ** -0.25)) < 0.01

    def test_symmetric_walk_fails_speed(self):
        rep = theorem_conditions_check(symmetric_walk_spec(-20, 20), 5.0, 10)
        assert not rep.clause("condition 2: speed decreases at rate d_n > 0").passed

    def test_contact_passes(self):
        rep = theorem_conditions_check(translated_contact_spec(2401, 2.0), math.sqrt(1200.5), 274)
        assert rep.passed, rep.summary()
        assert 0.5 < rep.extras["d_exact"] < 1.0

    def test_window_outside_support(self):
        rep = theorem_conditions_check(symmetric_walk_spec(-5, 5), 2.0, 10)
        assert not rep.preconditions_hold
