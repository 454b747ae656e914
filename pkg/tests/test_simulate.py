import math

import numpy as np
import pytest

from conftest import random_spec
from metawalk.errors import GuardError
from metawalk.model import (
    ChainSpec,
    IntegerInterval,
    contact_spec,
    example_walk_spec,
    linear_speed_spec,
    linear_speed_walk_spec,
    pure_death_spec,
    restrict,
)
from metawalk.bounds import boundary_hit_bound, window_params_from_spec
from metawalk.simulate import (
    SampleSet,
    coupled_pair_meeting,
    coupled_pair_path,
    empirical_distribution,
    hitting_time_samples,
    sample_path,
    states_at,
    triple_coupling_check,
)
from metawalk.stationary import l1_distance
from metawalk.transient import transient_distribution


def two_state():
    return ChainSpec.from_rates(IntegerInterval(0, 1), [1.0, 0.0], [0.0, 1.0])


class TestPaths:
    def test_deterministic(self):
        spec = contact_spec(50, 2.0)
        a, b = sample_path(spec, 10, 20.0, seed=3), sample_path(spec, 10, 20.0, seed=3)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.states, b.states)
        assert a.to_csv() == b.to_csv()

    def test_structure(self):
        p = sample_path(contact_spec(50, 2.0), 10, 20.0, seed=4)
        assert np.all(np.diff(p.times) > 0)
        assert np.all(np.abs(np.diff(np.concatenate(([p.x0], p.states)))) == 1)
        assert p.times[-1] <= 20.0

    def test_absorbing_start_is_empty(self):
        assert sample_path(example_walk_spec(100), 33, 10.0, seed=1).n_events == 0

    def test_pure_death_has_n_events(self):
        p = sample_path(pure_death_spec(12), 12, 1e6, seed=2)
        assert p.n_events == 12 and p.states[-1] == 0

    def test_state_at(self):
        p = sample_path(contact_spec(20, 2.0), 5, 5.0, seed=5)
        assert p.state_at(0.0) == 5
        assert p.state_at(p.times[0]) == p.states[0]

    def test_csv_header(self):
        text = sample_path(pure_death_spec(2), 2, 1e3, seed=0).to_csv(header="a\nb")
        assert text.splitlines()[:3] == ["# a", "# b", "time,state"]
        assert len(text.splitlines()) == 3 + 3


class TestReplicates:
    def test_worker_count_irrelevant(self):
        spec = contact_spec(60, 2.0)
        a = hitting_time_samples(spec, 30, [0], 50.0, 3001, seed=9, workers=1)
        b = hitting_time_samples(spec, 30, [0], 50.0, 3001, seed=9, workers=4)
        assert a.to_csv() == b.to_csv()

    def test_seed_changes_samples(self):
        spec = contact_spec(60, 2.0)
        a = states_at(spec, 30, 1.0, 100, seed=1)
        b = states_at(spec, 30, 1.0, 100, seed=2)
        assert not np.array_equal(a, b)

    def test_linear_speed_mean(self):
        # E[Y_t] = 20 e^-t for the chain with speed exactly -k
        x = states_at(linear_speed_spec(20, 1.0), 20, 1.0, 100_000, seed=3, workers=4)
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - 20 * math.exp(-1)) <= 3 * se

    def test_start_in_target(self):
        s = hitting_time_samples(contact_spec(20, 2.0), 0, [0, 1], 10.0, 50, seed=1)
        assert np.all(s.outcome == 0) and not s.censored.any()

    def test_empty_target(self):
        with pytest.raises(ValueError):
            hitting_time_samples(contact_spec(20, 2.0), 5, [], 10.0, 5, seed=1)

    def test_censoring(self):
        s = hitting_time_samples(contact_spec(100, 3.0), 60, [0], 5.0, 200, seed=1)
        assert s.censored.all() and np.all(s.outcome == 5.0)
        assert s.tail(5.0) == 1.0 and s.below(5.0) == 0.0
        assert s.median() == math.inf
        with pytest.raises(ValueError):
            s.tail(6.0)

    def test_events_clock_counts_jumps(self):
        s = hitting_time_samples(pure_death_spec(7), 7, [0], 100.0, 20, seed=1, clock="events")
        assert np.all(s.outcome == 7)

    def test_samples_csv(self):
        s = SampleSet(1, np.array([1.5, 2.0]), np.array([False, True]), 2.0)
        assert s.to_csv().splitlines() == ["replicate,outcome,censored", "0,1.5,0", "1,2.0,1"]

    def test_boundary_hit_consistent_with_bound(self):
        spec = example_walk_spec(256)
        s = hitting_time_samples(spec, 0, [-65, 65], 1e4, 4000, seed=7, workers=4)
        params, _ = window_params_from_spec(spec, 16.0, 64)
        est = s.below(1e4)
        assert est <= boundary_hit_bound(params, 1e4).value + 4 * s.se(est)


class TestMeeting:
    def test_zero_radius(self):
        s = coupled_pair_meeting(linear_speed_walk_spec(5, 0.1), 0, 10, seed=1, horizon=1.0)
        assert np.all(s.outcome == 0)

    def test_linear_speed_tail_bound(self):
        s = coupled_pair_meeting(linear_speed_walk_spec(20, 0.1), 20, 10_000, seed=1, horizon=200.0, workers=4)
        for t in (20.0, 40.0, 60.0):
            p = s.tail(t)
            assert p <= 2 * 20 * math.exp(-0.1 * t) + 4 * s.se(p)

    def test_example_walk_median_regression(self):
        # walkers on the live window [-a_n, a_n] of the n=256 walk, reflected at its ends
        spec = restrict(example_walk_spec(256), -64, 64)
        s = coupled_pair_meeting(spec, 64, 10_000, seed=7, horizon=1e4, workers=4)
        assert not s.censored.any()
        assert s.median() == pytest.approx(531.1993784607787, rel=1e-12)

    def test_walkers_stay_together(self):
        times, xs, ys = coupled_pair_path(linear_speed_walk_spec(10, 0.5), -10, 10, 100.0, seed=3)
        met = np.nonzero(xs == ys)[0]
        assert met.size > 0
        assert np.all(xs[met[0]:] == ys[met[0]:])


class TestTriple:
    def test_linear_speed_walk(self):
        rep = triple_coupling_check(linear_speed_walk_spec(20, 0.1), 20, 10_000, seed=1, horizon=200.0,
                                    d=0.1, t_grid=[20.0, 40.0, 60.0], workers=4)
        assert rep.preconditions_hold
        assert rep.passed, rep.summary()
        assert rep.value == 1.0
        assert rep.clause("T~ >= T").value == 1.0

    def test_zero_radius(self):
        rep = triple_coupling_check(linear_speed_walk_spec(5, 0.1), 0, 10, seed=1, horizon=1.0, d=0.1)
        assert rep.passed

    def test_d_too_large_flagged(self):
        rep = triple_coupling_check(linear_speed_walk_spec(5, 0.1), 5, 10, seed=1, horizon=10.0, d=0.5)
        assert not rep.preconditions_hold


class TestEmpirical:
    def test_zero_time(self):
        p = empirical_distribution(contact_spec(10, 2.0), 4, 0.0, 100, seed=1)
        assert p[4] == 1.0

    def test_two_state_balance(self):
        p = empirical_distribution(two_state(), 0, 50.0, 100_000, seed=2)
        assert abs(p[0] - 0.5) < 0.01

    @pytest.mark.parametrize("boundary", ["reflecting", "absorbing-both"])
    def test_small_chain_within_4_se(self, boundary):
        spec = random_spec(np.random.default_rng(21), 6, boundary)
        reps = 40_000
        emp = empirical_distribution(spec, 2, 1.5 / spec.max_rate * 5, reps, seed=5, workers=2)
        exact = transient_distribution(spec, 2, 1.5 / spec.max_rate * 5)
        se = np.sqrt(exact.mass * (1 - exact.mass) / reps)
        assert np.all(np.abs(emp.mass - exact.mass) <= 4 * se + 1e-12)

    def test_budget_guard(self):
        with pytest.raises(GuardError):
            empirical_distribution(contact_spec(200, 2.0), 100, 1e6, 10_000, seed=1)

    def test_contact_l1_scaling(self):
        spec = contact_spec(200, 2.0)
        exact = transient_distribution(spec, 100, 200.0)
        # expected L1 of an n-sample histogram is about sum sqrt(2 p (1-p) / (pi n))
        floor = float(np.sum(np.sqrt(2 * exact.mass * (1 - exact.mass) / (math.pi * 10_000))))
        small = empirical_distribution(spec, 100, 200.0, 10_000, seed=1, workers=4)
        assert l1_distance(small, exact) < 1.5 * floor
        assert floor > 0.05

    @pytest.mark.slow
    def test_contact_l1_large_sample(self):
        spec = contact_spec(200, 2.0)
        exact = transient_distribution(spec, 100, 200.0)
        big = empirical_distribution(spec, 100, 200.0, 100_000, seed=1, workers=4, budget=1e10)
        assert l1_distance(big, exact) < 0.05
