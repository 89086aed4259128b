import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballbasis import (EmptySet, IncompleteFamily, Params, RegularityViolation,
                       VecFunction, alpha_core, alpha_oscillation, average,
                       bmo_norm, build_dyadic, build_grid,
                       build_regular_family, general_maximal, maximal,
                       mean_oscillation, median, sharp_all, sup_sharp_all)
from ballbasis.functional import oscillation_stats

CLASSICAL = Params.classical_profile(1.0)


def indicator(n, atoms):
    v = np.zeros(n)
    v[list(atoms)] = 1.0
    return VecFunction(v)


class TestAverage:
    def test_mass_counting(self, dyadic3):
        f = indicator(8, [0])
        full = dyadic3.full_ball_id()
        got = average(f, dyadic3.balls[full].members, CLASSICAL, basis=dyadic3)
        assert got == pytest.approx(0.125)

    def test_constant_invariance(self, dyadic3):
        f = VecFunction(np.full(8, 3.5))
        for b in dyadic3.balls:
            got = average(f, b.members, CLASSICAL, basis=dyadic3)
            assert got == pytest.approx(3.5)

    def test_sup_mode(self, dyadic3):
        f = indicator(8, [0])
        second = np.flatnonzero((dyadic3.lo == 1) & (dyadic3.hi == 1))[0]
        got = average(f, dyadic3.balls[second].members, CLASSICAL,
                      mode="sup", basis=dyadic3)
        assert got == pytest.approx(0.5)

    def test_empty(self, dyadic3):
        with pytest.raises(EmptySet):
            average(VecFunction(np.ones(8)), [], CLASSICAL, basis=dyadic3)

    def test_scaling(self, dyadic3, rng):
        f = VecFunction(rng.normal(size=8))
        g = VecFunction(3.0 * f.values)
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        a = average(f, full, CLASSICAL, basis=dyadic3)
        b = average(g, full, CLASSICAL, basis=dyadic3)
        assert b == pytest.approx(3.0 * a)


class TestOscillationStats:
    def test_constant(self):
        osc, sup, inf = oscillation_stats(VecFunction(np.ones(4)), [0, 1, 2, 3])
        assert osc == 0.0

    def test_scalar_values(self):
        f = VecFunction(np.array([1.0, 1.0, 5.0]))
        osc, sup, inf = oscillation_stats(f, [0, 1, 2])
        assert (osc, sup, inf) == (4.0, 5.0, 1.0)

    def test_euclidean_pair(self):
        f = VecFunction(np.array([[0.0, 0.0], [3.0, 4.0]]))
        osc, sup, inf = oscillation_stats(f, [0, 1])
        assert osc == 5.0

    def test_osc_le_two_sup(self, rng):
        f = VecFunction(rng.normal(size=(16, 2)))
        osc, sup, _ = oscillation_stats(f, list(range(16)))
        assert osc <= 2 * sup + 1e-12


class TestMeanOscillation:
    def test_constant(self, dyadic3):
        f = VecFunction(np.full(8, 2.0))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        assert mean_oscillation(f, full, 1.0, basis=dyadic3) == 0.0

    def test_two_atoms(self):
        b = build_dyadic(1)
        f = VecFunction(np.array([0.0, 1.0]))
        got = mean_oscillation(f, [0, 1], 1.0, basis=b)
        assert got == pytest.approx(0.5)

    def test_half_ball_average_gap(self, dyadic4, rng):
        # |f_A - f_B| <= (mu(B)/mu(A))^(1/r) * sharp(B) for A half of B
        f = VecFunction(rng.normal(size=16))
        for r in (1.0, 2.0):
            for b in dyadic4.balls:
                if len(b.members) < 2:
                    continue
                half = b.members[: len(b.members) // 2]
                fa = np.ravel(mean_oscillation(f, half, r, mode="mean", basis=dyadic4))[0]
                fb = np.ravel(mean_oscillation(f, b.members, r, mode="mean", basis=dyadic4))[0]
                sharp = mean_oscillation(f, b.members, r, basis=dyadic4)
                ratio = (dyadic4.measure(b.members) / dyadic4.measure(half))
                assert abs(fa - fb) <= ratio ** (1.0 / r) * sharp + 1e-12


class TestAlphaOscillation:
    def test_constant(self, dyadic3):
        f = VecFunction(np.ones(8))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        for a in (0.1, 0.5, 0.9):
            assert alpha_oscillation(f, full, a, dyadic3) == 0.0

    def test_outlier_dropped(self):
        b = build_dyadic(2)
        f = VecFunction(np.array([1.0, 1.0, 1.0, 5.0]))
        assert alpha_oscillation(f, [0, 1, 2, 3], 0.5, b) == 0.0

    def test_outlier_forced(self):
        b = build_dyadic(2)
        f = VecFunction(np.array([1.0, 1.0, 1.0, 5.0]))
        assert alpha_oscillation(f, [0, 1, 2, 3], 0.8, b) == 4.0

    def test_monotone_in_alpha(self, dyadic3, rng):
        f = VecFunction(rng.normal(size=8))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        vals = [alpha_oscillation(f, full, a, dyadic3)
                for a in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(x <= y + 1e-12 for x, y in zip(vals, vals[1:]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=8),
           st.floats(0.05, 0.95))
    def test_fast_path_matches_oracle(self, vals, alpha):
        b = build_dyadic(3)
        padded = vals + [0.0] * (8 - len(vals))
        f = VecFunction(np.array(padded))
        members = list(range(len(vals)))
        fast = alpha_oscillation(f, members, alpha, b)
        slow = alpha_oscillation(f, members, alpha, b, method="exhaustive")
        assert fast == pytest.approx(slow, abs=1e-12)

    def test_scaling(self, dyadic3, rng):
        f = VecFunction(rng.normal(size=8))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        a = alpha_oscillation(f, full, 0.6, dyadic3)
        g = VecFunction(-2.0 * f.values)
        assert alpha_oscillation(g, full, 0.6, dyadic3) == pytest.approx(2 * a)


class TestAlphaCore:
    def test_core_achieves_oscillation(self, dyadic3, rng):
        f = VecFunction(rng.normal(size=8))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        atoms, osc = alpha_core(f, full, 0.6, dyadic3)
        assert dyadic3.measure(atoms) > 0.6
        got, _, _ = oscillation_stats(f, atoms)
        assert got <= osc + 1e-12

    def test_slack_grows_mass(self, dyadic3, rng):
        f = VecFunction(rng.normal(size=8))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        tight, osc = alpha_core(f, full, 0.6, dyadic3, slack=1.0)
        fat, _ = alpha_core(f, full, 0.6, dyadic3, slack=2.0)
        assert dyadic3.measure(fat) >= dyadic3.measure(tight)
        got, _, _ = oscillation_stats(f, fat)
        assert got <= 2.0 * osc + 1e-12

    def test_bad_slack(self, dyadic3):
        with pytest.raises(ValueError):
            alpha_core(VecFunction(np.ones(8)), [0, 1], 0.5, dyadic3, slack=0.5)


class TestMedian:
    def test_constant(self, dyadic3):
        f = VecFunction(np.full(8, 7.0))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        med, rep = median(f, full, dyadic3)
        assert list(med) == list(full)
        assert rep[0] == 7.0

    def test_outlier_excluded(self):
        b = build_dyadic(2)
        f = VecFunction(np.array([1.0, 1.0, 1.0, 5.0]))
        med, rep = median(f, [0, 1, 2, 3], b)
        assert list(med) == [0, 1, 2]
        assert rep[0] == 1.0

    def test_two_point_split(self):
        b = build_dyadic(1)
        f = VecFunction(np.array([0.0, 10.0]))
        med, _ = median(f, [0, 1], b)
        assert list(med) == [0, 1]

    def test_median_oscillation_bound(self, dyadic3, rng):
        # OSC over the median core stays within 4x the half-oscillation
        f = VecFunction(rng.normal(size=8))
        full = dyadic3.balls[dyadic3.full_ball_id()].members
        med, _ = median(f, full, dyadic3)
        osc, _, _ = oscillation_stats(f, med)
        assert osc <= 4.0 * alpha_oscillation(f, full, 0.5, dyadic3) + 1e-12


class TestBmoNorm:
    def test_constant(self, dyadic3):
        assert bmo_norm(VecFunction(np.full(8, 9.0)), dyadic3) == 0.0

    def test_two_atoms(self):
        b = build_dyadic(1)
        f = VecFunction(np.array([0.0, 1.0]))
        assert bmo_norm(f, b) == pytest.approx(0.5)

    def test_scaling(self, dyadic4, rng):
        f = VecFunction(rng.normal(size=16))
        a = bmo_norm(f, dyadic4)
        assert bmo_norm(VecFunction(4.0 * f.values), dyadic4) == pytest.approx(4 * a)


class TestMaximal:
    def test_indicator_profile(self, dyadic3):
        f = indicator(8, [0])
        mf = maximal(f, dyadic3, CLASSICAL)
        assert mf[0] == pytest.approx(1.0)
        assert mf[1] == pytest.approx(0.5)
        assert mf[2] == mf[3] == pytest.approx(0.25)
        assert np.allclose(mf[4:], 0.125)

    def test_constant_invariance(self, dyadic3):
        mf = maximal(VecFunction(np.full(8, 2.0)), dyadic3, CLASSICAL)
        assert np.allclose(mf, 2.0)

    def test_sharp_of_constant(self, dyadic3):
        mf = maximal(VecFunction(np.full(8, 2.0)), dyadic3, CLASSICAL, mode="sharp")
        assert np.allclose(mf, 0.0)

    def test_dominates_ball_averages(self, dyadic4, rng):
        f = VecFunction(rng.normal(size=16))
        mf = maximal(f, dyadic4, CLASSICAL)
        for b in dyadic4.balls:
            avg = average(f, b.members, CLASSICAL, basis=dyadic4)
            assert np.all(mf[b.members] >= avg - 1e-12)

    def test_sharp_sup_inequality(self, dyadic4, rng):
        # sup-sharp mean of a ball never exceeds the sharp maximal anywhere on it
        f = VecFunction(rng.normal(size=16))
        msharp = maximal(f, dyadic4, CLASSICAL, mode="sharp")
        sups = sup_sharp_all(f, dyadic4, 1.0)
        for b in dyadic4.balls:
            assert sups[b.id] <= msharp[b.members].min() + 1e-12


class TestRegularFamily:
    def test_single_ball_uniform(self):
        b = build_dyadic(0)
        fam = build_regular_family(b)
        assert np.allclose(fam.kernels[0] @ b.space.weights, 1.0)

    def test_dyadic4_passes(self, dyadic4):
        fam = build_regular_family(dyadic4)
        assert fam.kernels.shape == (31, 16)
        assert fam.c1 >= (1 + dyadic4.K) ** -2 - 1e-12

    def test_divergent_modulus_rejected(self, dyadic4):
        with pytest.raises((ValueError, RegularityViolation)):
            build_regular_family(dyadic4, omega=lambda t: 1.0)


class TestGeneralMaximal:
    def test_constant_preserved(self, dyadic3):
        fam = build_regular_family(dyadic3)
        out = general_maximal(VecFunction(np.full(8, 3.0)), fam)
        assert np.allclose(out, 3.0)

    def test_delta_matches_brute_force(self, grid8):
        fam = build_regular_family(grid8)
        f = indicator(8, [0])
        out = general_maximal(f, fam)
        vals = fam.kernels @ (f.norms() * grid8.space.weights)
        for x in range(8):
            ids = grid8.balls_containing_atom(x)
            assert out[x] == pytest.approx(vals[ids].max())

    def test_incomplete_family(self, grid8):
        fam = build_regular_family(grid8)
        smallest = {x: [int(np.flatnonzero((grid8.lo == x) & (grid8.hi == x))[0])]
                    for x in range(8)}
        with pytest.raises(IncompleteFamily):
            general_maximal(VecFunction(np.ones(8)), fam, complete=smallest)


class TestSharpBounds:
    def test_sup_sharp_below_pointwise_sharp_max(self, dyadic4, rng):
        f = VecFunction(rng.normal(size=16))
        sharp = sharp_all(f, dyadic4, 1.0)
        sups = sup_sharp_all(f, dyadic4, 1.0)
        assert np.all(sups >= sharp - 1e-12)


class TestSerialization:
    def test_round_trip(self, rng):
        f = VecFunction(rng.normal(size=(8, 2)), norm_kind="max")
        g = VecFunction.from_json(f.to_json())
        assert np.array_equal(g.values, f.values)
        assert g.norm_kind == "max"
