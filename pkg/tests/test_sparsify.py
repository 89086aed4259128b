import numpy as np
import pytest

from ballbasis import (NestingViolated, NotACover, build_dyadic, child_cover,
                       disjointify, sparsify_tree, vitali_cover)
from ballbasis.cli import make_f_family


def span_ball(basis, lo, hi):
    return int(np.flatnonzero((basis.lo == lo) & (basis.hi == hi))[0])


class TestVitali:
    def test_single_ball(self, dyadic3):
        full = dyadic3.full_ball_id()
        assert vitali_cover(dyadic3, range(8), [full]) == [full]

    def test_atom_balls_all_kept(self, dyadic3):
        atoms = [span_ball(dyadic3, i, i) for i in range(8)]
        got = vitali_cover(dyadic3, range(8), atoms)
        assert sorted(got) == sorted(atoms)

    def test_grid_overlapping_family(self, grid16):
        fam = [span_ball(grid16, lo, min(lo + 2, 15)) for lo in range(0, 16, 2)]
        got = vitali_cover(grid16, range(16), fam)
        used = np.zeros(16, dtype=bool)
        for g in got:
            m = grid16.balls[g].members
            assert not used[m].any()
            used[m] = True
        stars = np.zeros(16, dtype=bool)
        for g in got:
            stars[grid16.star_members(g)] = True
        assert stars.all()

    def test_not_a_cover(self, dyadic3):
        with pytest.raises(NotACover):
            vitali_cover(dyadic3, range(8), [span_ball(dyadic3, 0, 3)])


class TestChildCover:
    def test_empty_target(self, dyadic3):
        assert child_cover(dyadic3, [0, 1], []) == []

    def test_single_atom(self, dyadic6):
        got = child_cover(dyadic6, [5], [5])
        w = dyadic6.space.weights
        total = sum(float(w[dyadic6.balls[g].members].sum()) for g in got)
        assert total <= 2 * dyadic6.K * float(w[5]) + 1e-12
        covered = set()
        for g in got:
            covered.update(int(a) for a in dyadic6.balls[g].members)
        assert 5 in covered

    def test_random_sets_mass_bound(self, dyadic8, rng):
        w = dyadic8.space.weights
        for _ in range(20):
            F = np.flatnonzero(rng.random(256) < 0.15)
            if F.size == 0:
                continue
            E = F[rng.random(F.size) < 0.5]
            got = child_cover(dyadic8, F, E)
            covered = np.zeros(256, dtype=bool)
            total = 0.0
            for g in got:
                m = dyadic8.balls[g].members
                covered[m] = True
                total += float(w[m].sum())
            assert covered[E].all()
            mu_f = float(w[F].sum())
            eta = 2.0
            assert total <= 2 * eta * dyadic8.K * mu_f + 1e-12


class TestSparsifyTree:
    def test_no_exceptions_single_node(self, dyadic8):
        tree = sparsify_tree(dyadic8, lambda b: np.array([], dtype=np.int64),
                             dyadic8.full_ball_id(), 1e-4)
        assert tree.n_nodes == 1
        assert tree.parent == [None]
        # the sole node is the double hull of the seed
        root = dyadic8.full_ball_id()
        assert tree.nodes[0] == int(dyadic8.hull[int(dyadic8.hull[root])])
        assert tree.sparseness_certified

    def test_strict_mode_invariants(self):
        basis = build_dyadic(12)
        a0 = basis.full_ball_id()
        alpha = 1.0 / 2000.0
        for seed in range(3):
            f_map = make_f_family(basis, alpha, seed)
            tree = sparsify_tree(basis, f_map, a0, alpha)
            assert tree.sparseness_certified
            assert tree.admissible
            w = basis.space.weights
            # every witness keeps at least half its node's underlying mass
            for j in range(tree.n_nodes):
                mu_b = basis.mu[tree.underlying[j]]
                assert float(w[tree.witness[j]].sum()) >= mu_b / 2.0 - 1e-12
            # children nest inside parent hull-nodes
            for j, p in enumerate(tree.parent):
                if p is None:
                    continue
                inner = set(int(a) for a in basis.balls[tree.nodes[j]].members)
                outer = set(int(a) for a in basis.balls[tree.nodes[p]].members)
                assert inner <= outer

    def test_large_alpha_warns(self, dyadic6):
        with pytest.warns(UserWarning, match="guaranteed threshold"):
            sparsify_tree(dyadic6, lambda b: np.array([], dtype=np.int64),
                          dyadic6.full_ball_id(), 0.2, tolerant=True)

    def test_tolerant_reports_coverage(self, dyadic6):
        with pytest.warns(UserWarning):
            tree = sparsify_tree(dyadic6, make_f_family(dyadic6, 0.3, 1),
                                 dyadic6.full_ball_id(), 0.3, tolerant=True)
        assert not tree.sparseness_certified
        assert "uncovered" in tree.constants
        assert tree.constants["coverage_certified"] == (
            len(tree.constants["uncovered"]) == 0)

    def test_json_round_trippable(self, dyadic6):
        tree = sparsify_tree(dyadic6, lambda b: np.array([], dtype=np.int64),
                             dyadic6.full_ball_id(), 1e-4)
        import json
        doc = json.loads(tree.to_json())
        assert doc["root"] == tree.root
        assert len(doc["nodes"]) == tree.n_nodes


class TestDisjointify:
    def test_chain(self):
        sets = [np.arange(8), np.arange(4)]
        parent = [None, 0]
        E = [np.array([0, 1]), np.array([], dtype=np.int64)]
        fam = disjointify(sets, parent, E)
        assert list(fam.shrink[0]) == [0, 1]
        assert list(fam.shrink[1]) == []

    def test_all_empty_exceptional(self):
        sets = [np.arange(8), np.arange(4), np.arange(4, 8)]
        parent = [None, 0, 0]
        E = [np.array([], dtype=np.int64)] * 3
        fam = disjointify(sets, parent, E)
        assert all(s.size == 0 for s in fam.shrink)

    def test_disjoint_siblings_untouched(self):
        sets = [np.arange(8), np.arange(4), np.arange(4, 8)]
        parent = [None, 0, 0]
        E = [np.array([], dtype=np.int64), np.arange(4), np.arange(4, 8)]
        fam = disjointify(sets, parent, E)
        assert list(fam.shrink[1]) == [0, 1, 2, 3]
        assert list(fam.shrink[2]) == [4, 5, 6, 7]

    def test_random_trees_invariants(self, rng):
        for _ in range(40):
            n_atoms = int(rng.integers(6, 30))
            depth = int(rng.integers(1, 5))
            sets = [np.arange(n_atoms)]
            parent = [None]
            for _ in range(depth * 2):
                p = int(rng.integers(0, len(sets)))
                base = sets[p]
                if base.size == 0:
                    continue
                sub = base[rng.random(base.size) < 0.6]
                sets.append(sub)
                parent.append(p)
            E = []
            for s in sets:
                E.append(s[rng.random(s.size) < 0.4] if s.size else s)
            fam = disjointify(sets, parent, E)
            # postconditions are asserted inside; spot check disjointness of
            # the claimed pieces once more from the outside
            claimed = np.zeros(n_atoms, dtype=bool)
            for i, s in enumerate(fam.shrink):
                piece = np.intersect1d(s, E[i])
                assert not claimed[piece].any()
                claimed[piece] = True
            want = np.zeros(n_atoms, dtype=bool)
            for e in E:
                want[e] = True
            assert np.array_equal(claimed, want)

    def test_nesting_violated(self):
        with pytest.raises(NestingViolated):
            disjointify([np.arange(4), np.array([5])], [None, 0],
                        [np.array([], dtype=np.int64)] * 2)
