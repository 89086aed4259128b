import numpy as np
import pytest

from ballbasis import (BetaOutOfRange, NotRestricted, VecFunction,
                       conditional_expectation, discrete_hilbert, dominate_bo,
                       dominate_mean_osc, estimate_bo_constants,
                       fit_exponential_rate, lerner_decompose,
                       martingale_transform, restricted_osc_bound,
                       riesz_potential, verify_sparse_bound, zero_operator)


def span_ball(basis, lo, hi):
    return int(np.flatnonzero((basis.lo == lo) & (basis.hi == hi))[0])


class TestFitRate:
    def test_pure_exponential(self):
        levels = list(range(10))
        fracs = [np.exp(-0.7 * t) for t in levels]
        assert fit_exponential_rate(levels, fracs) == pytest.approx(0.7)

    def test_short_tail_is_inf(self):
        assert fit_exponential_rate([0, 1], [1.0, 0.0]) == np.inf


class TestDominateBO:
    def test_zero_operator(self, dyadic6):
        T = zero_operator(dyadic6)
        c = estimate_bo_constants(T, dyadic6, budget=4)
        f = VecFunction(np.ones(64))
        bound = dominate_bo(T, c, f, dyadic6.full_ball_id(), dyadic6)
        assert bound.constant == 0.0

    def test_martingale_verified(self, dyadic8, rng):
        eps = rng.integers(0, 2, size=dyadic8.n_balls) * 2 - 1
        T = martingale_transform(dyadic8, eps)
        c = estimate_bo_constants(T, dyadic8, budget=8)
        b = dyadic8.full_ball_id()
        f = VecFunction(rng.normal(size=256))
        bound = dominate_bo(T, c, f, b, dyadic8)
        rep = verify_sparse_bound(bound, T.apply(f), b)
        assert rep.passed
        assert rep.enclosing_ratio <= dyadic8.K ** 3 + 1e-9
        assert rep.rate > 0

    def test_riesz_verified(self, grid128, rng):
        R = riesz_potential(grid128, 0.5)
        c = estimate_bo_constants(R, grid128, budget=8)
        b = span_ball(grid128, 0, 127)
        f = VecFunction(np.abs(rng.normal(size=128)))
        bound = dominate_bo(R, c, f, b, grid128)
        rep = verify_sparse_bound(bound, R.apply(f), b)
        assert rep.passed

    def test_scale_invariance(self, dyadic6, rng):
        eps = rng.integers(0, 2, size=dyadic6.n_balls) * 2 - 1
        T = martingale_transform(dyadic6, eps)
        c = estimate_bo_constants(T, dyadic6, budget=8)
        b = dyadic6.full_ball_id()
        f = rng.normal(size=64)
        b1 = dominate_bo(T, c, VecFunction(f), b, dyadic6)
        b2 = dominate_bo(T, c, VecFunction(1000.0 * f), b, dyadic6)
        assert b1.constant == pytest.approx(b2.constant, rel=1e-8)

    def test_support_guard(self, dyadic6):
        T = zero_operator(dyadic6)
        c = estimate_bo_constants(T, dyadic6, budget=4)
        f = VecFunction(np.ones(64))
        with pytest.raises(ValueError):
            dominate_bo(T, c, f, span_ball(dyadic6, 0, 31), dyadic6)

    def test_corrupted_constant_fails(self, dyadic6, rng):
        eps = rng.integers(0, 2, size=dyadic6.n_balls) * 2 - 1
        T = martingale_transform(dyadic6, eps)
        c = estimate_bo_constants(T, dyadic6, budget=8)
        b = dyadic6.full_ball_id()
        f = VecFunction(rng.normal(size=64))
        bound = dominate_bo(T, c, f, b, dyadic6)
        bound.constant *= 1e-6
        rep = verify_sparse_bound(bound, T.apply(f), b)
        assert rep.margin_min < 0
        assert not rep.passed


class TestLerner:
    def test_constant_function(self, dyadic6):
        f = VecFunction(np.full(64, 3.0))
        bound = lerner_decompose(f, dyadic6.full_ball_id(), 0.75, dyadic6)
        lhs = np.abs(f.norms() * 0 + 3.0 - float(bound.center[0]))
        rep = verify_sparse_bound(bound, lhs, dyadic6.full_ball_id())
        assert rep.passed

    def test_random_with_repair(self, dyadic8, rng):
        f = VecFunction(rng.normal(size=256))
        b = dyadic8.full_ball_id()
        bound = lerner_decompose(f, b, 0.75, dyadic8)
        lhs = np.abs(f.values[:, 0] - float(bound.center[0]))
        rep = verify_sparse_bound(bound, lhs, b)
        assert rep.passed
        assert bound.details["repaired"] >= 0

    def test_shift_invariance(self, dyadic6, rng):
        f = rng.normal(size=64)
        b = dyadic6.full_ball_id()
        b1 = lerner_decompose(VecFunction(f), b, 0.75, dyadic6)
        b2 = lerner_decompose(VecFunction(f + 7.0), b, 0.75, dyadic6)
        assert b1.constant == pytest.approx(b2.constant, rel=1e-10)
        assert b1.terms == pytest.approx(b2.terms, rel=1e-10)

    def test_hilbert_output(self, grid128, rng):
        H = discrete_hilbert(grid128)
        hf = H.apply(VecFunction(rng.normal(size=128)))
        b = span_ball(grid128, 0, 127)
        bound = lerner_decompose(VecFunction(hf.norms()), b, 0.75, grid128)
        lhs = np.abs(hf.norms() - float(bound.center[0]))
        rep = verify_sparse_bound(bound, lhs, b)
        assert rep.passed

    def test_beta_guard(self, dyadic6):
        f = VecFunction(np.ones(64))
        with pytest.raises(BetaOutOfRange):
            lerner_decompose(f, dyadic6.full_ball_id(), 0.4, dyadic6)
        with pytest.raises(BetaOutOfRange):
            lerner_decompose(f, dyadic6.full_ball_id(), 1.0, dyadic6)


class TestRestrictedOsc:
    def test_zero_family(self, dyadic6):
        fam = [zero_operator(dyadic6)]
        f = VecFunction(np.ones(64))
        rep = restricted_osc_bound(fam, f, dyadic6.full_ball_id(), 0.75,
                                   dyadic6, budget=4)
        assert rep.ratio == 0.0
        assert rep.passed

    def test_expectation_family(self, dyadic8, rng):
        fam = [conditional_expectation(dyadic8, k) for k in range(9)]
        f = VecFunction(rng.normal(size=256))
        rep = restricted_osc_bound(fam, f, dyadic8.full_ball_id(), 0.75,
                                   dyadic8, budget=8, admissible=1.0)
        assert rep.passed
        assert rep.lhs <= rep.rhs

    def test_hilbert(self, grid128, rng):
        fam = [discrete_hilbert(grid128)]
        f = VecFunction(rng.normal(size=128))
        rep = restricted_osc_bound(fam, f, span_ball(grid128, 0, 127), 0.75,
                                   grid128, budget=8, admissible=1.0)
        assert rep.passed

    def test_empty_family_rejected(self, dyadic6):
        with pytest.raises(NotRestricted):
            restricted_osc_bound([], VecFunction(np.ones(64)),
                                 dyadic6.full_ball_id(), 0.75, dyadic6)

    def test_nonclassical_rejected(self, grid16):
        fam = [riesz_potential(grid16, 0.5)]
        with pytest.raises(NotRestricted):
            restricted_osc_bound(fam, VecFunction(np.ones(16)),
                                 span_ball(grid16, 0, 15), 0.75, grid16,
                                 budget=4)


class TestDominateMeanOsc:
    def test_constant_input(self, dyadic6):
        fam = [conditional_expectation(dyadic6, k) for k in range(7)]
        f = VecFunction(np.full(64, 2.0))
        bound = dominate_mean_osc(fam, f, dyadic6.full_ball_id(), dyadic6,
                                  budget=4)
        tf = np.full(64, 2.0)
        lhs = np.abs(tf - float(bound.center[0]))
        rep = verify_sparse_bound(bound, lhs, dyadic6.full_ball_id())
        assert rep.passed

    def test_expectation_family_random(self, dyadic8, rng):
        fam = [conditional_expectation(dyadic8, k) for k in range(9)]
        f = VecFunction(rng.normal(size=256))
        b = dyadic8.full_ball_id()
        bound = dominate_mean_osc(fam, f, b, dyadic8, budget=8)
        tf = np.zeros(256)
        for t in fam:
            np.maximum(tf, t.apply(f).norms(), out=tf)
        lhs = np.abs(tf - float(bound.center[0]))
        rep = verify_sparse_bound(bound, lhs, b)
        assert rep.passed
        assert bound.details["overlap_rate"] > 0
