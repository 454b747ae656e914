import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import random_spec
from metawalk.errors import GuardError, ModelError
from metawalk.model import (
    Boundary,
    ChainSpec,
    IntegerInterval,
    build_generator,
    contact_spec,
    example_walk_spec,
    linear_speed_spec,
    linear_speed_walk_spec,
    pure_death_spec,
    symmetric_walk_spec,
)
from metawalk.stationary import ProbVector, gaussian_reference, l1_distance, stationary_distribution
from metawalk.transient import (
    TransientPropagator,
    absorption_probability,
    expected_position,
    expected_position_ode_check,
    factorize,
    series_rows,
    transient_distribution,
    uniformized_transient,
    write_series_csv,
)


def two_state():
    return ChainSpec.from_rates(IntegerInterval(0, 1), [1.0, 0.0], [0.0, 1.0])


def dense_oracle(spec, x0, t):
    Q = build_generator(spec).to_dense()
    p0 = np.zeros(len(spec.support))
    p0[spec.support.index(x0)] = 1.0
    return p0 @ expm(Q * t)


class TestFactorize:
    def test_two_state_spectrum(self):
        np.testing.assert_allclose(factorize(two_state(), cache=False).eigenvalues, [0.0, -2.0], atol=1e-15)

    def test_pure_death_spectrum(self):
        fac = factorize(pure_death_spec(3), cache=False)
        assert not fac.symmetric
        np.testing.assert_allclose(np.sort(fac.eigenvalues), [-3.0, -2.0, -1.0], rtol=1e-14)

    def test_example_walk_spectrum_negative(self, walk2401_fac):
        assert walk2401_fac.size == 687
        assert np.all(walk2401_fac.eigenvalues < 0)
        assert walk2401_fac.slowest_refined

    def test_reconstruction(self):
        spec = random_spec(np.random.default_rng(3), 20)
        assert factorize(spec, cache=False).reconstruction_error() < 1e-12 * spec.max_rate

    def test_lapack_matches_ql(self):
        spec = random_spec(np.random.default_rng(4), 25)
        a = factorize(spec, "ql", cache=False).eigenvalues
        b = factorize(spec, "lapack", cache=False).eigenvalues
        np.testing.assert_allclose(a, b, atol=1e-12 * spec.max_rate)

    def test_slowest_rate_matches_mpmath(self):
        # absorbing symmetric walk: live block is a scaled path Laplacian with known spectrum
        spec = ChainSpec.from_rates(IntegerInterval(0, 11), np.ones(12), np.ones(12), Boundary.ABSORBING_BOTH)
        lam1 = factorize(spec, cache=False).eigenvalues[0]
        exact = -2 + 2 * mpmath.cos(mpmath.pi / 11)
        assert lam1 == pytest.approx(float(exact), rel=1e-13)


class TestAgainstOracles:
    def test_zero_time_identity(self):
        spec = example_walk_spec(100)
        p = transient_distribution(spec, 3, 0.0)
        assert p[3] == 1.0 and p.mass.sum() == 1.0

    @given(st.integers(0, 2**31), st.sampled_from(list(Boundary)), st.floats(1e-2, 50.0))
    def test_spectral_vs_uniformization(self, seed, boundary, tr):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng, 5, boundary.value)
        x0 = int(rng.integers(0, 5))
        t = tr / spec.max_rate
        assert l1_distance(transient_distribution(spec, x0, t), uniformized_transient(spec, x0, t)) < 1e-10

    @pytest.mark.parametrize("boundary", list(Boundary))
    def test_dense_expm(self, boundary):
        spec = random_spec(np.random.default_rng(11), 12, boundary.value, lo=-4)
        for t in (0.01, 0.7, 5.0):
            np.testing.assert_allclose(transient_distribution(spec, 0, t).mass, dense_oracle(spec, 0, t),
                                       atol=1e-11)

    def test_semigroup(self):
        spec = random_spec(np.random.default_rng(5), 15, "absorbing-both")
        p_s = transient_distribution(spec, 7, 1.3)
        p_st = transient_distribution(spec, p_s, 2.1)
        np.testing.assert_allclose(p_st.mass, transient_distribution(spec, 7, 3.4).mass, atol=1e-12)

    def test_mass_and_monotone_absorption(self):
        spec = example_walk_spec(400)
        prop = TransientPropagator(spec, 0)
        prev = 0.0
        for t in np.geomspace(1.0, 1e8, 15):
            p = prop.at(t)
            assert math.fsum(p.mass) == pytest.approx(1.0, abs=1e-12)
            ab = sum(p.absorbed_mass().values())
            assert ab >= prev - 1e-14
            prev = ab

    def test_converges_to_stationary(self):
        spec = linear_speed_walk_spec(30, 0.2)
        gap = -factorize(spec, cache=False).eigenvalues[1]
        p = transient_distribution(spec, -30, 50 / gap)
        assert l1_distance(p, stationary_distribution(spec)) < 1e-9

    def test_pure_death_closed_form(self):
        # each individual dies at rate 1, so the count is Binomial(n, e^-t)
        n, t = 6, 0.8
        p = transient_distribution(pure_death_spec(n), n, t)
        q = math.exp(-t)
        ref = [math.comb(n, k) * q**k * (1 - q) ** (n - k) for k in range(n + 1)]
        np.testing.assert_allclose(p.mass, ref, rtol=1e-12, atol=1e-15)

    def test_vector_times(self):
        spec = symmetric_walk_spec(0, 5)
        ps = transient_distribution(spec, 0, [0.5, 1.0])
        assert len(ps) == 2
        np.testing.assert_allclose(ps[1].mass, transient_distribution(spec, 0, 1.0).mass)


class TestExpectation:
    def test_linear_speed_exponential_mean(self):
        d, E0 = 0.3, 8
        spec = linear_speed_spec(30, d)
        for t in (0.5, 2.0, 6.0):
            # speed is exactly -d k below n; the top state contributes negligibly from 8
            p = transient_distribution(spec, E0, t)
            assert expected_position(p) == pytest.approx(E0 * math.exp(-d * t), rel=1e-6)

    def test_linear_speed_walk_mean(self):
        d = 0.1
        p = transient_distribution(linear_speed_walk_spec(20, d), 20, 7.0)
        assert p.mean() == pytest.approx(20 * math.exp(-d * 7.0), rel=1e-10)

    def test_ode_contact(self):
        rep = expected_position_ode_check(contact_spec(50, 2.0), 25, [0.5, 1.0, 3.0])
        assert rep.passed, rep.value

    def test_conditioned_mean(self):
        p = ProbVector(IntegerInterval(0, 2), [0.5, 0.25, 0.25], absorbing=(0,))
        assert expected_position(p) == 0.75
        assert expected_position(p, conditioned=True) == 1.5

    def test_absorption_probability(self):
        ab = absorption_probability(pure_death_spec(1), 1, 1.0)
        assert ab[0] == pytest.approx(1 - math.exp(-1), rel=1e-14)
        with pytest.raises(ModelError):
            absorption_probability(symmetric_walk_spec(0, 2), 0, 1.0)


class TestGuards:
    def test_uniformization_guard(self):
        with pytest.raises(GuardError):
            uniformized_transient(symmetric_walk_spec(0, 3), 0, 1e8)

    def test_non_symmetrizable_long_time(self):
        with pytest.raises(GuardError):
            transient_distribution(pure_death_spec(5), 5, 1e9)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            transient_distribution(symmetric_walk_spec(0, 3), 0, -1.0)

    def test_initial_outside_support(self):
        with pytest.raises(ModelError):
            transient_distribution(symmetric_walk_spec(0, 3), ProbVector.point_mass(IntegerInterval(5, 6), 6), 1.0)


@pytest.fixture(scope="module")
def laws(walk2401, walk2401_fac):
    prop = TransientPropagator(walk2401, 172, factorization=walk2401_fac)
    return dict(zip((1e3, 1e4, 1e10, 1e11, 1e13), prop.many([1e3, 1e4, 1e10, 1e11, 1e13])))


@pytest.fixture(scope="module")
def gauss(walk2401):
    return gaussian_reference(math.sqrt(2401), walk2401.support)


class TestExampleWalk:
    """Transient table of the absorbing example walk, n=2401, started at 172."""

    def test_absorbing_states(self, walk2401):
        assert walk2401.support == IntegerInterval(-344, 344)

    def test_mean_early(self, laws):
        assert laws[1e3].mean() == pytest.approx(113.0, abs=1.5)
        assert laws[1e4].mean() == pytest.approx(2.7, abs=0.3)

    def test_metastable_plateau(self, laws, gauss):
        assert laws[1e4].mean() == pytest.approx(2.67, abs=0.01)
        assert l1_distance(laws[1e4], gauss) == pytest.approx(0.05, abs=0.01)
        # near the quasi-stationary law the mean is within a few tenths of 0
        assert abs(laws[1e10].mean()) < 0.35
        assert l1_distance(laws[1e10], gauss) < 0.008

    def test_late_absorption_split(self, laws, gauss):
        p = laws[1e13]
        ab = p.absorbed_mass()
        assert ab[-344] + ab[344] == pytest.approx(0.505, abs=0.01)
        assert l1_distance(p, gauss) == pytest.approx(1.01, abs=0.03)
        # the left exit is favoured, pulling the unconditional mean to about -140
        assert p.mean() == pytest.approx(-140.0, abs=8.0)
        # the surviving law is nearly symmetric about 0
        assert abs(expected_position(p, conditioned=True)) < 1e-3

    def test_absorbed_mass_matches_uniformized_early(self, walk2401):
        p = transient_distribution(walk2401, 172, 2e4)
        q = uniformized_transient(walk2401, 172, 2e4)
        assert l1_distance(p, q) < 1e-9


class TestSeries:
    def test_rows_and_csv(self):
        spec = example_walk_spec(100)
        ref = gaussian_reference(10.0, spec.support)
        rows = series_rows(spec, 0, [1.0, 10.0], reference=ref, workers=2)
        assert [r["t"] for r in rows] == [1.0, 10.0]
        text = write_series_csv(rows, header="h")
        lines = text.splitlines()
        assert lines[0] == "# h"
        assert lines[1] == "t,expected,absorbed_left,absorbed_right,l1_to_gaussian"
        assert len(lines) == 4

    def test_workers_agree(self):
        spec = example_walk_spec(400)
        prop = TransientPropagator(spec, 50)
        a = prop.many([1.0, 1e3, 1e6], workers=3)
        b = [TransientPropagator(spec, 50).at(t) for t in (1.0, 1e3, 1e6)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.mass, y.mass)
