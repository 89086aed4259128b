"""Finite atomic measure spaces with explicit ball-bases.

A space is a list of positively weighted atoms 0..N-1.  A basis is a list of
balls (atom subsets) together with a stored hull map B -> [B] and the constants
K (hull constant) and eta (doubling constant, optional).  The star of a ball,

    star(B) = union of all balls A with mu(A) <= 2 mu(B) and A
              intersecting B,

is computed exactly.  Bases whose balls are all contiguous atom ranges
("interval bases", which covers both shipped builders) get vectorized star /
superset machinery; anything else falls back to a membership-matrix path meant
for small, hand-built bases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySet, NoContainingBall, NotDoubling, PostconditionFailure


def as_atom_array(members) -> np.ndarray:
    """Normalize an atom collection to a sorted unique int array."""
    arr = np.asarray(sorted(set(int(a) for a in members)), dtype=np.int64)
    return arr


@dataclass(frozen=True)
class MeasureSpace:
    weights: np.ndarray  # positive weight per atom, index = atom id

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("need a nonempty 1-d weight vector")
        if not np.all(w > 0):
            raise ValueError("atom weights must be strictly positive")

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def measure(self, members) -> float:
        arr = np.asarray(members, dtype=np.int64)
        if arr.size == 0:
            return 0.0
        return float(self.weights[arr].sum())


@dataclass(frozen=True)
class Ball:
    id: int
    members: np.ndarray  # sorted atom ids
    measure: float

    @property
    def member_set(self) -> frozenset:
        return frozenset(int(a) for a in self.members)

    def __contains__(self, atom: int) -> bool:
        i = np.searchsorted(self.members, atom)
        return i < len(self.members) and self.members[i] == atom


class BallBasis:
    """Immutable ball-basis over a finite atomic measure space."""

    def __init__(self, space: MeasureSpace, balls: list[Ball], hull: list[int],
                 K: float, eta: float | None = None):
        self.space = space
        self.balls = list(balls)
        self.hull = np.asarray(hull, dtype=np.int64)
        self.K = float(K)
        self.eta = None if eta is None else float(eta)
        if len(self.hull) != len(self.balls):
            raise ValueError("hull map must cover every ball")
        for b in self.balls:
            if len(b.members) == 0:
                raise ValueError(f"ball {b.id} is empty (axiom B1)")

        n = space.n_atoms
        self.n_balls = len(self.balls)
        self.mu = np.array([b.measure for b in self.balls])
        lo = np.array([b.members[0] for b in self.balls], dtype=np.int64)
        hi = np.array([b.members[-1] for b in self.balls], dtype=np.int64)
        sizes = np.array([len(b.members) for b in self.balls], dtype=np.int64)
        self.interval = bool(np.all(hi - lo + 1 == sizes))
        self.lo = lo
        self.hi = hi
        # complete unit grid: every span present exactly once, unit weights
        self.complete_grid = bool(
            self.interval
            and np.all(space.weights == 1.0)
            and self.n_balls == n * (n + 1) // 2
            and len({(int(a), int(b)) for a, b in zip(lo, hi)}) == self.n_balls
        )
        self._member_matrix = None
        self._star_lo = None
        self._star_hi = None
        self._star_sets = {}
        self._span_index = {}
        for b in self.balls:
            key = (int(lo[b.id]), int(hi[b.id]))
            old = self._span_index.get(key)
            if old is None or self.mu[b.id] < self.mu[old]:
                self._span_index[key] = b.id

    # -- basic accessors -------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return self.space.n_atoms

    def ball(self, ball_id: int) -> Ball:
        if not (0 <= ball_id < self.n_balls):
            raise KeyError(f"unknown ball id {ball_id}")
        return self.balls[ball_id]

    def measure(self, members) -> float:
        return self.space.measure(members)

    def member_matrix(self) -> np.ndarray:
        if self._member_matrix is None:
            m = np.zeros((self.n_balls, self.n_atoms), dtype=bool)
            for b in self.balls:
                m[b.id, b.members] = True
            self._member_matrix = m
        return self._member_matrix

    # -- star / hull -----------------------------------------------------

    def _compute_star_intervals(self):
        if self._star_lo is not None:
            return
        n = self.n_atoms
        if self.complete_grid:
            length = np.minimum(np.floor(2 * self.mu).astype(np.int64), n)
            self._star_lo = np.maximum(0, self.lo - length + 1)
            self._star_hi = np.minimum(n - 1, self.hi + length - 1)
            return
        star_lo = np.empty(self.n_balls, dtype=np.int64)
        star_hi = np.empty(self.n_balls, dtype=np.int64)
        lo, hi, mu = self.lo, self.hi, self.mu
        for i in range(self.n_balls):
            mask = (mu <= 2 * mu[i]) & (lo <= hi[i]) & (hi >= lo[i])
            star_lo[i] = lo[mask].min()
            star_hi[i] = hi[mask].max()
        self._star_lo = star_lo
        self._star_hi = star_hi

    def star_members(self, ball_id: int) -> np.ndarray:
        """Exact star B* as a sorted atom array."""
        if self.interval:
            self._compute_star_intervals()
            return np.arange(self._star_lo[ball_id], self._star_hi[ball_id] + 1)
        cached = self._star_sets.get(ball_id)
        if cached is not None:
            return cached
        m = self.member_matrix()
        b = self.ball(ball_id)
        touches = m[:, b.members].any(axis=1)
        qualifies = touches & (self.mu <= 2 * self.mu[ball_id])
        members = np.flatnonzero(m[qualifies].any(axis=0))
        self._star_sets[ball_id] = members
        return members

    def star_measure(self, ball_id: int) -> float:
        return self.measure(self.star_members(ball_id))

    def star_of_set(self, members) -> np.ndarray:
        """The star rule applied to an arbitrary set S:
        S together with every ball A such that mu(A) <= 2 mu(S), A meets S."""
        arr = np.asarray(members, dtype=np.int64)
        if arr.size == 0:
            return arr
        m_s = self.measure(arr)
        if self.interval:
            covered = np.zeros(self.n_atoms, dtype=bool)
            covered[arr] = True
            contiguous = arr.size == int(arr.max()) - int(arr.min()) + 1
            if contiguous:
                mask = ((self.mu <= 2 * m_s) & (self.lo <= int(arr.max()))
                        & (self.hi >= int(arr.min())))
            else:
                mask = (self.mu <= 2 * m_s) & np.array(
                    [covered[self.lo[i]:self.hi[i] + 1].any() for i in range(self.n_balls)])
            if mask.any():
                diff = np.zeros(self.n_atoms + 1, dtype=np.int64)
                np.add.at(diff, self.lo[mask], 1)
                np.add.at(diff, self.hi[mask] + 1, -1)
                covered |= np.cumsum(diff[:-1]) > 0
            return np.flatnonzero(covered)
        m = self.member_matrix()
        touches = m[:, arr].any(axis=1) & (self.mu <= 2 * m_s)
        union = np.zeros(self.n_atoms, dtype=bool)
        union[arr] = True
        if touches.any():
            union |= m[touches].any(axis=0)
        return np.flatnonzero(union)

    def star2_members(self, ball_id: int) -> np.ndarray:
        """(B*)* -- the star rule iterated once on the set B*."""
        return self.star_of_set(self.star_members(ball_id))

    def hull_ball(self, ball_id: int) -> Ball:
        return self.balls[self.hull[ball_id]]

    def hull2_ball(self, ball_id: int) -> Ball:
        return self.balls[self.hull[self.hull[ball_id]]]

    def hull3_ball(self, ball_id: int) -> Ball:
        return self.balls[self.hull[self.hull[self.hull[ball_id]]]]

    # -- containment queries ----------------------------------------------

    def balls_containing_atom(self, atom: int) -> np.ndarray:
        if self.interval:
            return np.flatnonzero((self.lo <= atom) & (self.hi >= atom))
        return np.flatnonzero(self.member_matrix()[:, atom])

    def balls_containing_set(self, members) -> np.ndarray:
        arr = np.asarray(members, dtype=np.int64)
        if arr.size == 0:
            raise EmptySet("containment query over an empty set")
        if self.interval:
            a, b = int(arr.min()), int(arr.max())
            return np.flatnonzero((self.lo <= a) & (self.hi >= b))
        return np.flatnonzero(self.member_matrix()[:, arr].all(axis=1))

    def supersets(self, ball_id: int, strict: bool = False) -> np.ndarray:
        ids = self.balls_containing_set(self.balls[ball_id].members)
        if strict:
            if self.interval:
                keep = (self.lo[ids] < self.lo[ball_id]) | (self.hi[ids] > self.hi[ball_id])
            else:
                sz = np.array([len(self.balls[i].members) for i in ids])
                keep = sz > len(self.balls[ball_id].members)
            ids = ids[keep]
        return ids

    def contains(self, inner_id: int, outer_id: int) -> bool:
        """True iff ball inner is a subset of ball outer."""
        if self.interval:
            return bool(self.lo[outer_id] <= self.lo[inner_id]
                        and self.hi[outer_id] >= self.hi[inner_id])
        a = self.balls[inner_id].member_set
        return a <= self.balls[outer_id].member_set

    def is_strict_superset(self, outer_id: int, inner_id: int) -> bool:
        return self.contains(inner_id, outer_id) and not self.contains(outer_id, inner_id)

    def full_ball_id(self) -> int | None:
        """A ball containing every atom, if one exists."""
        sizes = self.hi - self.lo + 1 if self.interval else None
        for i in range(self.n_balls):
            if self.interval:
                if self.lo[i] == 0 and self.hi[i] == self.n_atoms - 1:
                    return i
            elif len(self.balls[i].members) == self.n_atoms:
                return i
        return None

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "atoms": [float(w) for w in self.space.weights],
            "balls": [[int(a) for a in b.members] for b in self.balls],
            "hull": [int(h) for h in self.hull],
            "K": self.K,
            "eta": self.eta,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "BallBasis":
        doc = json.loads(text)
        space = MeasureSpace(np.asarray(doc["atoms"], dtype=float))
        balls = []
        for i, members in enumerate(doc["balls"]):
            arr = as_atom_array(members)
            balls.append(Ball(i, arr, space.measure(arr)))
        return cls(space, balls, doc["hull"], doc["K"], doc.get("eta"))


# -- builders ---------------------------------------------------------------


def build_dyadic(levels: int) -> BallBasis:
    """Dyadic martingale basis on [0,1): 2^levels atoms, all dyadic intervals."""
    if levels < 0:
        raise ValueError("levels must be nonnegative")
    if levels > 20:
        raise ValueError("levels > 20 rejected (ball count guard)")
    n = 1 << levels
    space = MeasureSpace(np.full(n, 1.0 / n))
    balls = []
    hull = []
    for g in range(levels + 1):
        width = n >> g
        for j in range(1 << g):
            bid = (1 << g) - 1 + j
            members = np.arange(j * width, (j + 1) * width, dtype=np.int64)
            balls.append(Ball(bid, members, width / n))
            hull.append(bid if g == 0 else ((1 << (g - 1)) - 1 + j // 2))
    basis = BallBasis(space, balls, hull, K=2.0, eta=2.0)
    basis.kind = "dyadic"
    return basis


def build_grid(n: int) -> BallBasis:
    """All discrete intervals [i,j] on n unit-weight atoms."""
    if not (2 <= n <= 512):
        raise ValueError("grid size must be in [2, 512]")
    space = MeasureSpace(np.ones(n))
    balls = []
    spans = {}
    bid = 0
    for i in range(n):
        for j in range(i, n):
            balls.append(Ball(bid, np.arange(i, j + 1, dtype=np.int64), float(j - i + 1)))
            spans[(i, j)] = bid
            bid += 1
    basis = BallBasis(space, balls, list(range(bid)), K=5.0, eta=2.0)
    # hull = the interval equal to star(B) (always present in a complete grid)
    basis._compute_star_intervals()
    hull = [spans[(int(a), int(b))] for a, b in zip(basis._star_lo, basis._star_hi)]
    out = BallBasis(space, balls, hull, K=5.0, eta=2.0)
    out.kind = "grid"
    return out


# -- operations ---------------------------------------------------------------


def enlarge(basis: BallBasis, ball_id: int, mode: str):
    """star/star2 return atom arrays; hull/hull2 return Ball objects."""
    if mode == "star":
        return basis.star_members(ball_id)
    if mode == "star2":
        return basis.star2_members(ball_id)
    if mode == "hull":
        return basis.hull_ball(ball_id)
    if mode == "hull2":
        return basis.hull2_ball(ball_id)
    raise ValueError(f"unknown enlarge mode {mode!r}")


@dataclass
class AxiomReport:
    b1_pass: bool
    b1_failures: list
    b2_pass: bool
    k_min: float
    hull_valid: bool
    hull_failures: list
    eta_min: float | None
    eta_counterexample: int | None

    @property
    def passed(self) -> bool:
        return self.b1_pass and self.b2_pass and self.hull_valid


def check_axioms(basis: BallBasis) -> AxiomReport:
    """Recompute B1/B2/B4 and the doubling constant from scratch."""
    b1_failures = []
    for b in basis.balls:
        recomputed = basis.space.measure(b.members)
        if len(b.members) == 0 or b.measure <= 0 or not math.isclose(
                b.measure, recomputed, rel_tol=1e-12, abs_tol=0.0):
            b1_failures.append(b.id)
    b1_pass = not b1_failures and bool(np.all(basis.space.weights > 0))

    # B2: a full ball settles it; otherwise do the pairwise scan (desk scale)
    if basis.full_ball_id() is not None:
        b2_pass = True
    else:
        m = basis.member_matrix().astype(np.float64)
        common = m.T @ m  # atoms x atoms: number of shared balls
        b2_pass = bool(np.all(common > 0))

    # B4: stored hull must contain the star with mu(hull) <= K mu(B);
    # k_min is what the best possible hull assignment would achieve.
    hull_failures = []
    k_min = 0.0
    n = basis.n_atoms
    if basis.interval:
        basis._compute_star_intervals()
        slo, shi = basis._star_lo, basis._star_hi
        hlo, hhi = basis.lo[basis.hull], basis.hi[basis.hull]
        hmu = basis.mu[basis.hull]
        bad = ~((hlo <= slo) & (hhi >= shi) & (hmu <= basis.K * basis.mu + 1e-12))
        hull_failures = [int(i) for i in np.flatnonzero(bad)]
        for i in range(basis.n_balls):
            key = (int(slo[i]), int(shi[i]))
            j = basis._span_index.get(key)
            if j is not None:
                best = basis.mu[j]
            else:
                mask = (basis.lo <= slo[i]) & (basis.hi >= shi[i])
                if not mask.any():
                    hull_failures.append(i)
                    continue
                best = basis.mu[mask].min()
            k_min = max(k_min, best / basis.mu[i])
    else:
        m = basis.member_matrix()
        for i in range(basis.n_balls):
            star = basis.star_members(i)
            hull_set = basis.hull_ball(i).members
            if not (set(star) <= set(int(a) for a in hull_set)
                    and basis.hull_ball(i).measure <= basis.K * basis.mu[i] + 1e-12):
                hull_failures.append(i)
            covering = np.flatnonzero(m[:, star].all(axis=1))
            if covering.size == 0:
                hull_failures.append(i)
                continue
            k_min = max(k_min, basis.mu[covering].min() / basis.mu[i])

    # doubling: minimal eta over balls with star != X
    eta_min = 0.0
    eta_counterexample = None
    for i in range(basis.n_balls):
        if basis.interval:
            basis._compute_star_intervals()
            star_is_x = (basis._star_lo[i] == 0) and (basis._star_hi[i] == n - 1)
        else:
            star_is_x = len(basis.star_members(i)) == n
        if star_is_x:
            continue
        if basis.interval:
            mask = ((basis.lo <= basis.lo[i]) & (basis.hi >= basis.hi[i])
                    & ((basis.lo < basis.lo[i]) | (basis.hi > basis.hi[i])))
            if basis.complete_grid:
                ratio = (basis.mu[i] + 1.0) / basis.mu[i]
            elif mask.any():
                ratio = basis.mu[mask].min() / basis.mu[i]
            else:
                eta_counterexample = i
                continue
        else:
            ids = basis.supersets(i, strict=True)
            if ids.size == 0:
                eta_counterexample = i
                continue
            ratio = basis.mu[ids].min() / basis.mu[i]
        eta_min = max(eta_min, ratio)
    if eta_counterexample is not None:
        eta_min = None

    return AxiomReport(
        b1_pass=b1_pass, b1_failures=b1_failures, b2_pass=b2_pass,
        k_min=float(k_min), hull_valid=not hull_failures,
        hull_failures=sorted(set(hull_failures)),
        eta_min=None if eta_min is None else float(eta_min),
        eta_counterexample=eta_counterexample,
    )


def volume_distance(basis: BallBasis, x: int, ball_id: int) -> float:
    """d(x, B) = smallest measure of a ball containing B and x."""
    if not (0 <= x < basis.n_atoms):
        raise NoContainingBall(f"atom {x} outside the space")
    if basis.interval:
        a = min(int(basis.lo[ball_id]), x)
        b = max(int(basis.hi[ball_id]), x)
        mask = (basis.lo <= a) & (basis.hi >= b)
        if not mask.any():
            raise NoContainingBall(f"no ball contains ball {ball_id} and atom {x}")
        return float(basis.mu[mask].min())
    m = basis.member_matrix()
    members = basis.balls[ball_id].members
    mask = m[:, members].all(axis=1) & m[:, x]
    if not mask.any():
        raise NoContainingBall(f"no ball contains ball {ball_id} and atom {x}")
    return float(basis.mu[mask].min())


def volume_distance_all(basis: BallBasis, ball_id: int) -> np.ndarray:
    """Vector of d(x, B) over every atom x (vectorized for interval bases)."""
    if basis.interval:
        out = np.empty(basis.n_atoms)
        for x in range(basis.n_atoms):
            out[x] = volume_distance(basis, x, ball_id)
        return out
    return np.array([volume_distance(basis, x, ball_id) for x in range(basis.n_atoms)])


def exhausting_sequence(basis: BallBasis) -> list[Ball]:
    """Increasing ball chain whose last element has star = X.

    Grown by minimal-measure strict supersets from the smallest ball
    containing atom 0; verified to end at a ball containing every other ball.
    """
    start_ids = basis.balls_containing_atom(0)
    order = sorted(start_ids, key=lambda i: (basis.mu[i], i))
    cur = order[0]
    chain = [cur]
    while True:
        ids = basis.supersets(cur, strict=True)
        if ids.size == 0:
            break
        nxt = min(ids, key=lambda i: (basis.mu[i], i))
        chain.append(int(nxt))
        cur = int(nxt)
    last = chain[-1]
    star = basis.star_members(last)
    if len(star) != basis.n_atoms:
        raise PostconditionFailure("exhausting sequence does not reach a star covering X",
                                   witness=last)
    for i in range(basis.n_balls):
        if not basis.contains(i, last):
            raise PostconditionFailure("a ball escapes every chain element", witness=i)
    return [basis.balls[i] for i in chain]


def doubling_chain(basis: BallBasis, a_id: int, b_id: int) -> dict:
    """Chain A = A_0 < A_1 < ... < A_n = hull(B) with bounded measure ratios."""
    if basis.eta is None:
        raise NotDoubling("basis has no doubling constant")
    if not basis.contains(a_id, b_id):
        raise ValueError("need A contained in B")
    target = int(basis.hull[b_id])
    chain = [a_id]
    cur = a_id
    max_ratio = 1.0
    while cur != target and not (basis.contains(target, cur) and basis.contains(cur, target)):
        ids = basis.supersets(cur, strict=True)
        ids = [int(i) for i in ids if basis.contains(i, target)]
        if not ids:
            if basis.contains(target, cur):
                break
            raise PostconditionFailure("chain stuck before reaching hull(B)", witness=cur)
        nxt = min(ids, key=lambda i: (basis.mu[i], i))
        max_ratio = max(max_ratio, basis.mu[nxt] / basis.mu[cur])
        chain.append(nxt)
        cur = nxt
    bound = basis.eta * basis.K
    return {
        "chain": [basis.balls[i] for i in chain],
        "max_ratio": float(max_ratio),
        "ratio_bound": float(bound),
        "length": len(chain) - 1,
    }
