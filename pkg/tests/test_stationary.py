import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metawalk.errors import ModelError, StationaryError
from metawalk.model import (
    ChainSpec,
    IntegerInterval,
    build_generator,
    contact_spec,
    example_walk_spec,
    figure1_spec,
    gaussian_ratio_spec,
    linear_speed_walk_spec,
    restrict,
    symmetric_walk_spec,
)
from metawalk.stationary import (
    ProbVector,
    gaussian_reference,
    gaussian_sum_check,
    jump_chain_stationary,
    kolmogorov_distance,
    l1_distance,
    statdist_certificate,
    stationary_distribution,
    tv_distance,
)


def two_state():
    return ChainSpec.from_rates(IntegerInterval(0, 1), [1.0, 0.0], [0.0, 1.0])


class TestProbVector:
    def test_rejects_unnormalized(self):
        with pytest.raises(ModelError):
            ProbVector(IntegerInterval(0, 1), [0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(ModelError):
            ProbVector(IntegerInterval(0, 1), [1.5, -0.5])

    def test_subprobability_flag(self):
        p = ProbVector(IntegerInterval(0, 1), [0.25, 0.25], normalized=False)
        assert p.total == 0.5
        assert p.mean(conditioned=True) == 0.5

    def test_point_mass_mean_and_csv(self):
        p = ProbVector.point_mass(IntegerInterval(0, 9), 5)
        assert p.mean() == 5
        text = p.to_csv(header="hello")
        assert text.splitlines()[0] == "# hello"
        assert text.splitlines()[1] == "k,mass"
        assert len(text.splitlines()) == 12


class TestStationary:
    def test_two_state(self):
        np.testing.assert_allclose(stationary_distribution(two_state()).mass, [0.5, 0.5], rtol=1e-15)

    def test_absorbing_rejected(self):
        with pytest.raises(StationaryError):
            stationary_distribution(example_walk_spec(16))

    def test_reducible_rejected(self):
        spec = ChainSpec.from_rates(IntegerInterval(0, 2), [1.0, 0.0, 0.0], [0.0, 1.0, 1.0])
        with pytest.raises(StationaryError):
            stationary_distribution(spec)

    @pytest.mark.parametrize("spec", [
        figure1_spec(100, 0.001),
        gaussian_ratio_spec(49.0, 343, 400),
        linear_speed_walk_spec(50, 0.1),
        restrict(contact_spec(400, 2.0), 1, 400),
        restrict(example_walk_spec(2401), -343, 343),
        figure1_spec(300, 0.001),
    ])
    def test_left_null_vector(self, spec):
        pi = stationary_distribution(spec)
        resid = np.max(np.abs(build_generator(spec).left_apply(pi.mass)))
        assert resid < 1e-10 * spec.max_rate

    def test_figure1_overflow_free(self):
        # up rates reach (1.001)**(300**2), far beyond double range
        pi = stationary_distribution(figure1_spec(300, 0.001))
        assert pi.argmax() == 0
        assert np.all(np.isfinite(pi.mass))

    def test_exact_linear_telescoping(self):
        sigma = 49.0
        spec = gaussian_ratio_spec(sigma, 343, 343)
        pi = stationary_distribution(spec)
        k = np.arange(1, 344)
        lhs = np.log(pi.mass[spec.support.index(1):]) - math.log(pi[0])
        rhs = -np.array([sum(range(int(j))) for j in k]) / sigma**2
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_exact_linear_close_to_gaussian(self):
        sigma = 49.0
        spec = gaussian_ratio_spec(sigma, 343, 343)
        ref = gaussian_reference(sigma, spec.support, "lattice-normalized")
        assert tv_distance(stationary_distribution(spec), ref) < 0.01

    def test_figure1_matches_truncated_gaussian(self):
        pi = stationary_distribution(figure1_spec(100, 0.001))
        ref = gaussian_reference(math.sqrt(1000), IntegerInterval(0, 100), "lattice-normalized")
        assert pi.argmax() == 0
        assert l1_distance(pi, ref) < 0.05


class TestJumpChain:
    def test_figure1_attracted_to_n(self):
        assert jump_chain_stationary(figure1_spec(100, 0.001)).argmax() == 100

    def test_symmetric_five_state_oracle(self):
        spec = symmetric_walk_spec(0, 4)
        P = np.zeros((5, 5))
        P[0, 0] = P[0, 1] = 0.5
        P[4, 4] = P[4, 3] = 0.5
        for k in range(1, 4):
            P[k, k - 1] = P[k, k + 1] = 0.5
        w, v = np.linalg.eig(P.T)
        ref = np.real(v[:, np.argmin(np.abs(w - 1))])
        ref /= ref.sum()
        np.testing.assert_allclose(jump_chain_stationary(spec).mass, ref, rtol=1e-12)

    def test_two_state_lazy(self):
        np.testing.assert_allclose(jump_chain_stationary(two_state()).mass, [0.5, 0.5], rtol=1e-15)


class TestGaussianReference:
    def test_pdf_value_at_zero(self):
        ref = gaussian_reference(49.0, IntegerInterval(-343, 343))
        assert ref.mass[343] == pytest.approx(1 / (math.sqrt(2 * math.pi) * 49), rel=1e-15)
        assert ref.mass[343] == pytest.approx(0.008142, abs=5e-7)

    def test_lattice_normalized_sums_to_one(self):
        ref = gaussian_reference(49.0, IntegerInterval(-343, 343), "lattice-normalized")
        assert math.fsum(ref.mass) == pytest.approx(1.0, abs=1e-14)

    def test_bad_mode(self):
        with pytest.raises(ModelError):
            gaussian_reference(1.0, IntegerInterval(0, 1), "histogram")


class TestDistances:
    def test_identity_and_disjoint(self):
        I = IntegerInterval(0, 1)
        d0, d1 = ProbVector.point_mass(I, 0), ProbVector.point_mass(I, 1)
        assert l1_distance(d0, d0) == 0.0
        assert l1_distance(d0, d1) == 2.0

    def test_mass_outside_overlap_counts(self):
        a = ProbVector.point_mass(IntegerInterval(0, 3), 0)
        b = ProbVector.point_mass(IntegerInterval(5, 8), 8)
        assert l1_distance(a, b) == 2.0

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_metric(self, seed):
        rng = np.random.default_rng(seed)
        vs = []
        for _ in range(3):
            lo = int(rng.integers(-5, 5))
            m = rng.random(int(rng.integers(1, 12)))
            vs.append(ProbVector(IntegerInterval(lo, lo + m.size - 1), m / m.sum()))
        a, b, c = vs
        assert l1_distance(a, b) == pytest.approx(l1_distance(b, a), abs=1e-15)
        assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c) + 1e-12

    def test_kolmogorov_point_mass(self):
        # a point mass at the mean sits half a unit above the Gaussian median
        mu, s = 1200.5, math.sqrt(1200.5)
        p = ProbVector.point_mass(IntegerInterval(0, 2401), 1201)
        ref = float(mpmath.ncdf((1201 - mu) / s))
        assert kolmogorov_distance(p, mu, s) == pytest.approx(ref, rel=1e-12)

    def test_kolmogorov_exact_gaussian_lattice(self):
        # a law whose CDF equals Phi at every lattice point has distance sup over jumps only
        from scipy.special import ndtr
        k = np.arange(-200, 201)
        F = ndtr((k + 0.5) / 20.0)
        m = np.diff(np.concatenate(([0.0], F)))
        m[-1] += 1 - m.sum()
        p = ProbVector(IntegerInterval(-200, 200), m)
        d = kolmogorov_distance(p, 0.0, 20.0)
        assert d == pytest.approx(float(mpmath.ncdf(0.5 / 20) - mpmath.ncdf(-0.5 / 20)) / 2, rel=1e-6)


class TestGaussianSum:
    def test_sigma49(self):
        rep = gaussian_sum_check(49.0, 343)
        lo, hi = math.sqrt(2 * math.pi) * 49 - (1 + 2 * math.sqrt(2 * math.pi)), math.sqrt(2 * math.pi) * 49 + 1
        assert lo <= rep.value <= hi
        assert rep.passed

    def test_value_matches_mpmath(self):
        rep = gaussian_sum_check(100.0, 304)
        mpmath.mp.dps = 40
        ref = 1 + 2 * mpmath.fsum(mpmath.exp(-mpmath.mpf(k) ** 2 / (2 * 100**2)) for k in range(1, 305))
        assert rep.value == pytest.approx(float(ref), rel=1e-14)

    def test_sigma1000_multiplicative(self):
        rep = gaussian_sum_check(1000.0, 3718)
        assert rep.clause("multiplicative lower").passed and rep.clause("multiplicative upper").passed

    def test_below_threshold(self):
        with pytest.raises(ValueError):
            gaussian_sum_check(50.0, 100)


class TestCertificate:
    def test_exact_linear_chain_passes(self):
        spec = gaussian_ratio_spec(49.0, 343, 400, eta=1.0)
        rep = statdist_certificate(spec, 343, 49.0)
        assert rep.status == "holds", rep.summary()

    def test_drift_away_fails_hypothesis(self):
        # push away from 0 inside [-a, a]
        k = np.arange(-400, 401)
        log_up = np.where(np.abs(k) <= 343, k / 49.0**2, np.where(k < 0, 1.0, -1.0))
        spec = ChainSpec(IntegerInterval(-400, 400), log_up, np.zeros(k.size))
        rep = statdist_certificate(spec, 343, 49.0)
        assert rep.status == "precondition-failed"
