"""Concrete operator instances, truncation, maximal modulation, and empirical
estimation of the bounded-oscillation constants L0 (weak type), L1
(localization) and L2 (connectivity).

All estimated constants are certified lower bounds: every reported value comes
with a witness input that reproduces the ratio.  The delta-function scan is
exact over the delta class for linear kernel operators with the classical
r = 1 profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotComparable
from .functional import (Params, VecFunction, ball_averages_all,
                         cover_measure_table, volume_distance_matrix)
from .space import BallBasis


class OperatorDescriptor:
    def __init__(self, name: str, basis: BallBasis, apply_fn, params: Params,
                 linear: bool, kernel: np.ndarray | None = None,
                 strong_sublinear: bool = True, scalar_output: bool = False,
                 members=None):
        self.name = name
        self.basis = basis
        self._apply_fn = apply_fn
        self.params = params
        self.linear = linear
        self.kernel = kernel
        self.strong_sublinear = strong_sublinear
        self.scalar_output = scalar_output
        self.members = members  # sub-descriptors for modulation families

    def apply(self, f: VecFunction) -> VecFunction:
        out = self._apply_fn(f)
        if not isinstance(out, VecFunction):
            out = VecFunction(out, f.norm_kind)
        return out

    def apply_kernel(self, f: VecFunction) -> VecFunction:
        """Direct kernel evaluation (consistency oracle for kernel ops)."""
        if self.kernel is None:
            raise ValueError("descriptor has no kernel")
        w = self.basis.space.weights
        return VecFunction(self.kernel @ (f.values * w[:, None]), f.norm_kind)

    def __repr__(self):
        return f"<operator {self.name}>"


# -- shipped operator constructors ------------------------------------------------


def _require_dyadic(basis: BallBasis):
    if getattr(basis, "kind", None) != "dyadic":
        raise ValueError("operator needs a martingale (dyadic) basis")


def _require_grid(basis: BallBasis):
    if getattr(basis, "kind", None) != "grid":
        raise ValueError("operator needs a 1-d grid basis")


def dyadic_levels(basis: BallBasis) -> int:
    _require_dyadic(basis)
    return int(round(math.log2(basis.n_atoms)))


def _level_slices(basis: BallBasis, g: int):
    """Ball ids of dyadic generation g."""
    return range((1 << g) - 1, (1 << (g + 1)) - 1)


def conditional_expectation(basis: BallBasis, level: int) -> OperatorDescriptor:
    """E_level f = sum over generation-level balls of f_B 1_B."""
    _require_dyadic(basis)
    levels = dyadic_levels(basis)
    if not (0 <= level <= levels):
        raise ValueError("level out of range")
    n = basis.n_atoms
    w = basis.space.weights
    kernel = np.zeros((n, n))
    for bid in _level_slices(basis, level):
        lo, hi = int(basis.lo[bid]), int(basis.hi[bid])
        kernel[lo:hi + 1, lo:hi + 1] = 1.0 / basis.mu[bid]

    def apply_fn(f):
        return VecFunction(kernel @ (f.values * w[:, None]), f.norm_kind)

    return OperatorDescriptor(f"cond_exp[{level}]", basis, apply_fn,
                              Params.classical_profile(1.0), linear=True,
                              kernel=kernel)


def martingale_transform(basis: BallBasis, eps) -> OperatorDescriptor:
    """M_eps f = sum over non-leaf balls A of eps_A Delta_A f."""
    _require_dyadic(basis)
    levels = dyadic_levels(basis)
    non_leaf = [bid for g in range(levels) for bid in _level_slices(basis, g)]
    if hasattr(eps, "__getitem__") and not isinstance(eps, dict):
        eps = {bid: eps[k] for k, bid in enumerate(non_leaf)}
    missing = [bid for bid in non_leaf if bid not in eps]
    if missing:
        raise ValueError(f"eps missing for non-leaf balls {missing[:5]}")
    n = basis.n_atoms
    w = basis.space.weights
    kernel = np.zeros((n, n))
    for a in non_leaf:
        alo, ahi = int(basis.lo[a]), int(basis.hi[a])
        sign = float(eps[a])
        if sign not in (-1.0, 1.0):
            raise ValueError("eps values must be +-1")
        for b in (2 * a + 1, 2 * a + 2):  # heap-order children
            blo, bhi = int(basis.lo[b]), int(basis.hi[b])
            kernel[blo:bhi + 1, blo:bhi + 1] += sign / basis.mu[b]
            kernel[blo:bhi + 1, alo:ahi + 1] -= sign / basis.mu[a]

    def apply_fn(f):
        return VecFunction(kernel @ (f.values * w[:, None]), f.norm_kind)

    return OperatorDescriptor("martingale_transform", basis, apply_fn,
                              Params(r=1.0, rho=1.0, varrho=1.0), linear=True,
                              kernel=kernel)


def square_function(basis: BallBasis) -> OperatorDescriptor:
    """Sf = (sum over A of ||Delta_A f||^2)^(1/2)."""
    _require_dyadic(basis)
    levels = dyadic_levels(basis)
    w = basis.space.weights

    def apply_fn(f):
        # E_{g+1} f - E_g f at x involves only the ball containing x, so the
        # generation sums recover the individual Delta_A terms pointwise
        prev = None
        acc = np.zeros(basis.n_atoms)
        for g in range(levels + 1):
            cur = np.empty_like(f.values)
            for bid in _level_slices(basis, g):
                lo, hi = int(basis.lo[bid]), int(basis.hi[bid])
                seg = f.values[lo:hi + 1]
                cur[lo:hi + 1] = (seg * w[lo:hi + 1, None]).sum(axis=0) / basis.mu[bid]
            if prev is not None:
                diff = cur - prev
                if f.norm_kind == "euclidean":
                    d = np.linalg.norm(diff, axis=1)
                else:
                    d = np.abs(diff).max(axis=1)
                acc += d ** 2
            prev = cur
        return VecFunction(np.sqrt(acc), f.norm_kind)

    return OperatorDescriptor("square_function", basis, apply_fn,
                              Params(r=1.0, rho=1.0, varrho=1.0), linear=False,
                              scalar_output=True)


def sparse_operator(basis: BallBasis, ball_ids, rho: float = 1.0) -> OperatorDescriptor:
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0,1]")
    n = basis.n_atoms
    w = basis.space.weights
    kernel = np.zeros((n, n))
    for bid in ball_ids:
        members = basis.balls[int(bid)].members
        kernel[np.ix_(members, members)] += basis.mu[int(bid)] ** (-rho)

    def apply_fn(f):
        return VecFunction(kernel @ (f.values * w[:, None]), f.norm_kind)

    return OperatorDescriptor("sparse_operator", basis, apply_fn,
                              Params(r=1.0, rho=rho, varrho=1.0), linear=True,
                              kernel=kernel)


def riesz_potential(basis: BallBasis, alpha: float) -> OperatorDescriptor:
    """I_alpha f(x) = sum_y f(y) / max(|x-y|, 1)^(1-alpha) on a unit grid."""
    _require_grid(basis)
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0,1)")
    n = basis.n_atoms
    idx = np.arange(n)
    dist = np.maximum(np.abs(idx[:, None] - idx[None, :]), 1.0)
    kernel = dist ** (alpha - 1.0)

    def apply_fn(f):
        return VecFunction(kernel @ f.values, f.norm_kind)  # unit weights

    return OperatorDescriptor(f"riesz[{alpha}]", basis, apply_fn,
                              Params(r=1.0, rho=1.0 - alpha, varrho=1.0),
                              linear=True, kernel=kernel)


def discrete_hilbert(basis: BallBasis) -> OperatorDescriptor:
    """Hf(x) = sum_{y != x} f(y)/(x - y)."""
    _require_grid(basis)
    n = basis.n_atoms
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore"):
        kernel = np.where(diff == 0, 0.0, 1.0 / np.where(diff == 0, 1, diff))

    def apply_fn(f):
        return VecFunction(kernel @ f.values, f.norm_kind)

    return OperatorDescriptor("discrete_hilbert", basis, apply_fn,
                              Params.classical_profile(1.0), linear=True,
                              kernel=kernel)


def identity_operator(basis: BallBasis) -> OperatorDescriptor:
    w = basis.space.weights
    kernel = np.diag(1.0 / w)
    return OperatorDescriptor("identity", basis, lambda f: f,
                              Params.classical_profile(1.0), linear=True,
                              kernel=kernel)


def zero_operator(basis: BallBasis) -> OperatorDescriptor:
    n = basis.n_atoms
    return OperatorDescriptor(
        "zero", basis, lambda f: VecFunction(np.zeros((n, f.dim)), f.norm_kind),
        Params.classical_profile(1.0), linear=True, kernel=np.zeros((n, n)))


# -- truncation and modulation ---------------------------------------------------


def _star_spans(basis: BallBasis) -> tuple[np.ndarray, np.ndarray]:
    basis._compute_star_intervals()
    return basis._star_lo, basis._star_hi


def truncate(T: OperatorDescriptor) -> OperatorDescriptor:
    """T*f(x) = sup over balls B containing x of ||T(f 1_{X minus B*})(x)||."""
    basis = T.basis
    n = basis.n_atoms
    w = basis.space.weights

    def apply_fn(f):
        out = np.zeros(n)
        if T.kernel is not None and basis.interval:
            slo, shi = _star_spans(basis)
            tf = T.apply(f).values
            g = f.values * w[:, None]
            for x in range(n):
                ids = basis.balls_containing_atom(x)
                pre = np.concatenate([np.zeros((1, g.shape[1])),
                                      np.cumsum(T.kernel[x][:, None] * g, axis=0)])
                contrib = tf[x][None, :] - (pre[shi[ids] + 1] - pre[slo[ids]])
                if f.norm_kind == "euclidean":
                    vals = np.linalg.norm(contrib, axis=1)
                else:
                    vals = np.abs(contrib).max(axis=1)
                out[x] = vals.max() if len(vals) else 0.0
            return VecFunction(out, f.norm_kind)
        for bid in range(basis.n_balls):
            star = basis.star_members(bid)
            mask = np.ones(n)
            mask[star] = 0.0
            tfb = T.apply(VecFunction(f.values * mask[:, None], f.norm_kind))
            members = basis.balls[bid].members
            np.maximum(out[members], tfb.norms()[members], out=out[members])
        return VecFunction(out, f.norm_kind)

    return OperatorDescriptor(f"trunc({T.name})", basis, apply_fn, T.params,
                              linear=False, strong_sublinear=T.linear,
                              scalar_output=True, members=[T])


def maximal_modulation(family: list[OperatorDescriptor]) -> OperatorDescriptor:
    if not family:
        raise ValueError("empty modulation family")
    basis = family[0].basis
    if any(t.basis is not basis for t in family):
        raise ValueError("family members must share the basis")

    def apply_fn(f):
        out = np.zeros(basis.n_atoms)
        for t in family:
            np.maximum(out, t.apply(f).norms(), out=out)
        return VecFunction(out, f.norm_kind)

    return OperatorDescriptor(f"modulation[{len(family)}]", basis, apply_fn,
                              family[0].params, linear=False,
                              strong_sublinear=all(t.linear for t in family),
                              scalar_output=True, members=list(family))


# -- the Delta(A, B) connectivity functional ----------------------------------------


def _exactly_estimable(T: OperatorDescriptor) -> bool:
    return bool(T.linear and T.kernel is not None and T.params.classical
                and T.params.r == 1.0)


def delta(T: OperatorDescriptor, a_id: int, b_id: int, seed: int = 0,
          trials: int = 20) -> float:
    """Delta_T(A,B) = sup over x in A, f of ||T(f 1_{B* minus A*})(x)|| / <f>_{B*}."""
    basis = T.basis
    if not basis.contains(a_id, b_id):
        raise NotComparable("need A contained in B")
    a_star = basis.star_members(a_id)
    b_star = basis.star_members(b_id)
    support = np.setdiff1d(b_star, a_star)
    if support.size == 0:
        return 0.0
    mu_bstar = basis.measure(b_star)
    members_a = basis.balls[a_id].members
    if _exactly_estimable(T):
        sub = np.abs(T.kernel[np.ix_(members_a, support)])
        return float(mu_bstar * sub.max())
    # monte-carlo lower bound over deltas and random test functions
    rng = np.random.default_rng([seed, a_id, b_id])
    w = basis.space.weights
    best = 0.0
    n = basis.n_atoms
    cands = []
    for y in support:
        v = np.zeros(n)
        v[y] = 1.0
        cands.append(v)
    for _ in range(trials):
        v = np.zeros(n)
        v[support] = rng.normal(size=support.size)
        cands.append(v)
    p = T.params
    for v in cands:
        f = VecFunction(v)
        denom = mu_bstar ** (-p.rho) * float(
            (np.abs(v[b_star]) ** p.r * w[b_star]).sum()) ** p.varrho
        if denom == 0:
            continue
        val = T.apply(f).norms()[members_a].max()
        best = max(best, float(val) / denom)
    return best


# -- BO constants -----------------------------------------------------------------


@dataclass
class BOConstants:
    L0: float
    L1: float
    L2: float
    method: str
    witnesses: dict = field(default_factory=dict)
    restricted: dict = field(default_factory=dict)
    r4_constant: float | None = None
    r5_value: float | None = None

    @property
    def total(self) -> float:
        return self.L0 + self.L1 + self.L2


def structured_suite(basis: BallBasis, budget: int, seed: int) -> list[np.ndarray]:
    """Seeded test functions shared by every estimator (criterion: a modulation
    family is probed with exactly the suite its members were probed with)."""
    rng = np.random.default_rng([int(seed), 20260823])
    n = basis.n_atoms
    funcs = []
    k = max(1, min(8, budget))
    for _ in range(k):
        funcs.append(rng.choice([-1.0, 1.0], size=n))
    for _ in range(k):
        funcs.append(rng.normal(size=n))
    for _ in range(k):
        i = int(rng.integers(0, n))
        j = int(rng.integers(i, n))
        v = np.zeros(n)
        v[i:j + 1] = 1.0
        funcs.append(v)
    for _ in range(k):  # haar-like: split a random block into +/- halves
        i = int(rng.integers(0, n - 1))
        width = int(rng.integers(1, max(2, n // 4)))
        j = min(n, i + 2 * width)
        v = np.zeros(n)
        mid = (i + j) // 2
        v[i:mid] = 1.0
        v[mid:j] = -1.0
        funcs.append(v)
    return funcs


def _sample_ball_ids(basis: BallBasis, budget: int, seed: int) -> np.ndarray:
    if basis.n_balls <= budget:
        return np.arange(basis.n_balls)
    rng = np.random.default_rng([int(seed), 555])
    return np.sort(rng.choice(basis.n_balls, size=budget, replace=False))


def _osc_on(vals: np.ndarray, members) -> float:
    seg = vals[members]
    return float(seg.max() - seg.min())


def estimate_bo_constants(T: OperatorDescriptor, basis: BallBasis,
                          budget: int = 32, seed: int = 0) -> BOConstants:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    exact = _exactly_estimable(T)
    p = T.params
    w = basis.space.weights
    n = basis.n_atoms
    witnesses: dict = {}

    suite = structured_suite(basis, budget, seed)
    ball_ids = _sample_ball_ids(basis, max(budget, 16), seed)

    # ---- L0: weak-type constant over restricted functions ----
    l0 = 0.0
    for bid in ball_ids:
        members = basis.balls[int(bid)].members
        mu_b = basis.mu[int(bid)]
        for fi, v in enumerate(suite):
            rv = np.zeros(n)
            rv[members] = v[members]
            f = VecFunction(rv)
            denom = mu_b ** (-p.rho) * float(
                (np.abs(rv[members]) ** p.r * w[members]).sum()) ** p.varrho
            if denom == 0:
                continue
            tn = T.apply(f).norms()[members]
            order = np.argsort(tn)[::-1]
            sorted_vals = tn[order]
            tail_mass = np.cumsum(w[members][order])
            pos = sorted_vals > 0
            if not pos.any():
                continue
            ratios = (sorted_vals[pos] / denom) * (tail_mass[pos] / mu_b) ** p.rho
            cand = float(ratios.max())
            if cand > l0:
                l0 = cand
                witnesses["L0"] = {"ball": int(bid), "suite_index": fi}

    # ---- L1: localization constant off the star ----
    l1 = 0.0
    r4 = 0.0
    slo = shi = None
    if basis.interval:
        slo, shi = _star_spans(basis)
    if exact and basis.interval:
        dmat = volume_distance_matrix(basis)
        for bid in range(basis.n_balls):
            lo, hi = int(basis.lo[bid]), int(basis.hi[bid])
            if slo[bid] == 0 and shi[bid] == n - 1:
                continue  # star is X: nothing lives outside it
            cols = T.kernel[lo:hi + 1]
            osc = cols.max(axis=0) - cols.min(axis=0)
            outside = np.ones(n, dtype=bool)
            outside[slo[bid]:shi[bid] + 1] = False
            d = dmat[bid]
            ratios = osc * d
            ratios[~outside] = 0.0
            y = int(np.argmax(ratios))
            if ratios[y] > l1:
                l1 = float(ratios[y])
                witnesses["L1"] = {"ball": bid, "atom": y}
            logw = np.log1p(d / basis.mu[bid])
            r4_ratios = osc * d * logw
            r4_ratios[~outside] = 0.0
            y4 = int(np.argmax(r4_ratios))
            if r4_ratios[y4] > r4:
                r4 = float(r4_ratios[y4])
                witnesses["R4"] = {"ball": bid, "atom": y4}
    # monte-carlo localization pass (also for exact operators: the suite is
    # shared with modulation families so their estimates stay comparable)
    for bid in ball_ids:
        bid = int(bid)
        members = basis.balls[bid].members
        star = basis.star_members(bid)
        outside = np.setdiff1d(np.arange(n), star)
        if outside.size == 0:
            continue
        mask = np.zeros(n)
        mask[outside] = 1.0
        sup_ids = basis.supersets(bid)
        for fi, v in enumerate(suite):
            rv = v * mask
            if not np.any(rv):
                continue
            f = VecFunction(rv)
            denom = 0.0
            r4_denom = 0.0
            for aid in sup_ids:
                aid = int(aid)
                am = basis.balls[aid].members
                avg = basis.mu[aid] ** (-p.rho) * float(
                    (np.abs(rv[am]) ** p.r * w[am]).sum()) ** p.varrho
                denom = max(denom, avg)
                r4_denom = max(r4_denom, avg / math.log1p(basis.mu[aid] / basis.mu[bid]))
            if denom == 0:
                continue
            tv = T.apply(f).norms()
            osc = _osc_on(tv, members)
            if osc / denom > l1:
                l1 = osc / denom
                witnesses["L1"] = {"ball": bid, "suite_index": fi}
            if r4_denom > 0 and osc / r4_denom > r4:
                r4 = osc / r4_denom
                witnesses["R4"] = {"ball": bid, "suite_index": fi}

    # ---- L2: connectivity via a grown ball per base ball ----
    l2 = 0.0
    for bid in ball_ids:
        bid = int(bid)
        if basis.interval:
            star_is_x = slo is not None and slo[bid] == 0 and shi[bid] == n - 1
        else:
            star_is_x = len(basis.star_members(bid)) == n
        if star_is_x:
            continue
        grown = basis.supersets(bid, strict=True)
        if grown.size == 0:
            continue
        b2 = int(min(grown, key=lambda i: (basis.mu[i], i)))
        val = delta(T, bid, b2, seed=seed)
        if val > l2:
            l2 = val
            witnesses["L2"] = {"ball": bid, "grown": b2}

    # ---- R5 probe along the exhausting sequence ----
    from .space import exhausting_sequence
    chain = exhausting_sequence(basis)
    last = chain[-1]
    ones = np.zeros(n)
    ones[last.members] = 1.0
    t_last = T.apply(VecFunction(ones)).norms()
    r5 = 0.0
    for bid in ball_ids:
        r5 = max(r5, _osc_on(t_last, basis.balls[int(bid)].members))

    restricted = {
        "R2_linear": bool(T.linear),
        "R3_classical": bool(p.classical),
        "R4_log_constant_finite": bool(math.isfinite(r4)),
        "R5_far_field_osc": float(r5),
    }
    return BOConstants(L0=float(l0), L1=float(l1), L2=float(l2),
                       method="exact_linear_r1" if exact else "monte_carlo",
                       witnesses=witnesses, restricted=restricted,
                       r4_constant=float(r4), r5_value=float(r5))
