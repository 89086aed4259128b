import numpy as np
import pytest

from ballbasis import (NotComparable, Params, VecFunction, build_dyadic,
                       build_grid, conditional_expectation, delta,
                       discrete_hilbert, estimate_bo_constants,
                       identity_operator, martingale_transform, maximal,
                       maximal_modulation, riesz_potential, sparse_operator,
                       square_function, truncate, zero_operator)


def span_ball(basis, lo, hi):
    return int(np.flatnonzero((basis.lo == lo) & (basis.hi == hi))[0])


class TestMartingaleTransform:
    def test_haar_step(self):
        b = build_dyadic(1)
        T = martingale_transform(b, np.ones(3))
        out = T.apply(VecFunction(np.array([1.0, 0.0])))
        assert np.allclose(out.values[:, 0], [0.5, -0.5])

    def test_telescoping(self, dyadic6, rng):
        T = martingale_transform(dyadic6, np.ones(dyadic6.n_balls))
        f = rng.normal(size=64)
        out = T.apply(VecFunction(f)).values[:, 0]
        assert np.allclose(out, f - f.mean())

    def test_constant_killed(self, dyadic6):
        T = martingale_transform(dyadic6, np.ones(dyadic6.n_balls))
        out = T.apply(VecFunction(np.full(64, 5.0)))
        assert np.allclose(out.values, 0.0)

    def test_kernel_consistency(self, dyadic6, rng):
        eps = rng.integers(0, 2, size=dyadic6.n_balls) * 2 - 1
        T = martingale_transform(dyadic6, eps)
        f = VecFunction(rng.normal(size=64))
        assert np.allclose(T.apply(f).values, T.apply_kernel(f).values)

    def test_linearity(self, dyadic6, rng):
        eps = rng.integers(0, 2, size=dyadic6.n_balls) * 2 - 1
        T = martingale_transform(dyadic6, eps)
        for _ in range(5):
            f = rng.normal(size=64)
            g = rng.normal(size=64)
            lhs = T.apply(VecFunction(2 * f - 3 * g)).values
            rhs = 2 * T.apply(VecFunction(f)).values - 3 * T.apply(VecFunction(g)).values
            assert np.allclose(lhs, rhs, rtol=1e-10)


class TestSquareFunction:
    def test_constant(self, dyadic6):
        S = square_function(dyadic6)
        assert np.allclose(S.apply(VecFunction(np.full(64, 2.0))).values, 0.0)

    def test_haar_step(self):
        b = build_dyadic(1)
        S = square_function(b)
        out = S.apply(VecFunction(np.array([1.0, 0.0])))
        assert np.allclose(out.values[:, 0], [0.5, 0.5])

    def test_parseval(self, dyadic6, rng):
        S = square_function(dyadic6)
        f = rng.normal(size=64)
        sf = S.apply(VecFunction(f)).values[:, 0]
        w = dyadic6.space.weights
        lhs = float((sf ** 2 * w).sum())
        rhs = float(((f - (f * w).sum() / w.sum()) ** 2 * w).sum())
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_sublinear(self, dyadic6, rng):
        S = square_function(dyadic6)
        f, g = rng.normal(size=64), rng.normal(size=64)
        both = S.apply(VecFunction(f + g)).norms()
        split = S.apply(VecFunction(f)).norms() + S.apply(VecFunction(g)).norms()
        assert np.all(both <= split + 1e-10)


class TestSparseOperator:
    def test_single_full_ball(self, dyadic3):
        A = sparse_operator(dyadic3, [dyadic3.full_ball_id()])
        out = A.apply(VecFunction(np.ones(8)))
        assert np.allclose(out.values, 1.0)

    def test_two_nested_balls(self, dyadic3):
        full = dyadic3.full_ball_id()
        half = span_ball(dyadic3, 0, 3)
        A = sparse_operator(dyadic3, [full, half])
        out = A.apply(VecFunction(np.ones(8))).values[:, 0]
        assert np.allclose(out[:4], 2.0)
        assert np.allclose(out[4:], 1.0)

    def test_fractional_rho(self):
        b = build_dyadic(0)
        A = sparse_operator(b, [0], rho=0.5)
        out = A.apply(VecFunction(np.ones(1)))
        assert out.values[0, 0] == pytest.approx(1.0)


class TestRieszPotential:
    def test_delta_at_distance(self, grid16):
        R = riesz_potential(grid16, 0.5)
        f = np.zeros(16)
        f[0] = 1.0
        out = R.apply(VecFunction(f)).values[:, 0]
        assert out[4] == pytest.approx(0.5)

    def test_diagonal_convention(self, grid16):
        R = riesz_potential(grid16, 0.5)
        f = np.zeros(16)
        f[0] = 1.0
        assert R.apply(VecFunction(f)).values[0, 0] == pytest.approx(1.0)

    def test_params(self, grid16):
        R = riesz_potential(grid16, 0.5)
        assert R.params.r == 1.0
        assert R.params.rho == pytest.approx(0.5)
        assert R.params.varrho == 1.0


class TestDiscreteHilbert:
    def test_delta_column(self, grid16):
        H = discrete_hilbert(grid16)
        f = np.zeros(16)
        f[0] = 1.0
        out = H.apply(VecFunction(f)).values[:, 0]
        for k in range(1, 16):
            assert out[k] == pytest.approx(1.0 / k)
        assert out[0] == 0.0

    def test_antisymmetry_at_center(self):
        b = build_grid(9)
        H = discrete_hilbert(b)
        out = H.apply(VecFunction(np.ones(9))).values[:, 0]
        assert out[4] == pytest.approx(0.0, abs=1e-12)

    def test_kernel_consistency(self, grid16, rng):
        H = discrete_hilbert(grid16)
        f = VecFunction(rng.normal(size=16))
        assert np.allclose(H.apply(f).values, H.apply_kernel(f).values)


class TestTruncate:
    def test_identity_truncation_vanishes(self, dyadic3, rng):
        T = truncate(identity_operator(dyadic3))
        out = T.apply(VecFunction(rng.normal(size=8))).norms()
        assert np.allclose(out, 0.0)

    def test_hilbert_delta_exact(self, grid64):
        H = discrete_hilbert(grid64)
        f = np.zeros(64)
        f[0] = 1.0
        out = truncate(H).apply(VecFunction(f)).norms()
        # at atom 8 the best ball keeps the source outside its star
        best = 0.0
        for i in np.flatnonzero((grid64.lo <= 8) & (grid64.hi >= 8)):
            star = grid64.star_members(int(i))
            if 0 not in star:
                best = max(best, 1.0 / 8.0)
        assert out[8] == pytest.approx(best)

    def test_sublinear(self, grid16, rng):
        T = truncate(discrete_hilbert(grid16))
        f, g = rng.normal(size=16), rng.normal(size=16)
        both = T.apply(VecFunction(f + g)).norms()
        split = T.apply(VecFunction(f)).norms() + T.apply(VecFunction(g)).norms()
        assert np.all(both <= split + 1e-10)


class TestMaximalModulation:
    def test_singleton(self, dyadic6, rng):
        eps = rng.integers(0, 2, size=dyadic6.n_balls) * 2 - 1
        T = martingale_transform(dyadic6, eps)
        M = maximal_modulation([T])
        f = VecFunction(rng.normal(size=64))
        assert np.allclose(M.apply(f).norms(), T.apply(f).norms())

    def test_expectation_family_is_maximal_function(self, dyadic6, rng):
        fam = [conditional_expectation(dyadic6, k) for k in range(7)]
        M = maximal_modulation(fam)
        f = VecFunction(np.abs(rng.normal(size=64)))
        lhs = M.apply(f).norms()
        rhs = maximal(f, dyadic6, Params.classical_profile(1.0))
        assert np.allclose(lhs, rhs)

    def test_empty_family(self):
        with pytest.raises(ValueError):
            maximal_modulation([])


class TestDelta:
    def test_empty_support(self, dyadic3):
        # A = B means B* \ A* is empty
        full = dyadic3.full_ball_id()
        assert delta(identity_operator(dyadic3), full, full) == 0.0

    def test_hilbert_exact(self):
        g = build_grid(32)
        H = discrete_hilbert(g)
        a = span_ball(g, 8, 8)
        b = span_ball(g, 0, 16)
        got = delta(H, a, b)
        bstar = set(int(x) for x in g.star_members(b))
        astar = set(int(x) for x in g.star_members(a))
        mu_bstar = float(len(bstar))
        best = max(abs(1.0 / (8 - y)) for y in bstar - astar if y != 8)
        assert got == pytest.approx(mu_bstar * best)

    def test_monotone_in_outer_ball(self, grid16, rng):
        H = discrete_hilbert(grid16)
        tried = 0
        for _ in range(200):
            if tried >= 50:
                break
            lo = int(rng.integers(0, 14))
            hi = int(rng.integers(lo, 16))
            mid_hi = int(rng.integers(lo, hi + 1))
            a = span_ball(grid16, lo, lo)
            b = span_ball(grid16, lo, mid_hi)
            c = span_ball(grid16, lo, hi)
            tried += 1
            assert delta(H, a, b) <= delta(H, a, c) + 1e-12

    def test_not_comparable(self, grid16):
        a = span_ball(grid16, 0, 3)
        b = span_ball(grid16, 5, 8)
        with pytest.raises(NotComparable):
            delta(discrete_hilbert(grid16), a, b)


class TestEstimateConstants:
    def test_zero_operator(self, dyadic6):
        c = estimate_bo_constants(zero_operator(dyadic6), dyadic6, budget=4)
        assert c.L0 == c.L1 == c.L2 == 0.0

    def test_identity_localization(self, dyadic6):
        c = estimate_bo_constants(identity_operator(dyadic6), dyadic6, budget=4)
        assert c.L1 == 0.0

    def test_martingale_l1_zero(self, dyadic8, rng):
        eps = rng.integers(0, 2, size=dyadic8.n_balls) * 2 - 1
        T = martingale_transform(dyadic8, eps)
        c = estimate_bo_constants(T, dyadic8, budget=8)
        assert c.L1 == 0.0
        assert 0 < c.L0 < 10
        assert np.isfinite(c.L2)

    def test_determinism(self, dyadic6, rng):
        eps = rng.integers(0, 2, size=dyadic6.n_balls) * 2 - 1
        T = martingale_transform(dyadic6, eps)
        a = estimate_bo_constants(T, dyadic6, budget=8, seed=3)
        b = estimate_bo_constants(T, dyadic6, budget=8, seed=3)
        assert (a.L0, a.L1, a.L2) == (b.L0, b.L1, b.L2)
