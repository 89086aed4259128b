"""Scalar functionals over vector-valued functions on a ball-basis space.

Fractional averages, oscillations, alpha-oscillations, medians, BMO norms,
maximal functions, and omega-regular kernel families.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (EmptySet, IncompleteFamily, NotDoubling, OracleTooLarge,
                     RegularityViolation)
from .space import BallBasis, as_atom_array


@dataclass(frozen=True)
class Params:
    r: float
    rho: float
    varrho: float

    def __post_init__(self):
        if not (self.r > 0):
            raise ValueError("need r > 0")
        if not (0 < self.rho <= self.varrho):
            raise ValueError("need 0 < rho <= varrho")

    @property
    def classical(self) -> bool:
        return self.rho == self.varrho == 1.0 / self.r

    @classmethod
    def classical_profile(cls, r: float = 1.0) -> "Params":
        return cls(r=r, rho=1.0 / r, varrho=1.0 / r)


class VecFunction:
    """Vector-valued function on atoms with a norm choice."""

    def __init__(self, values, norm_kind: str = "euclidean"):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("values must be (atoms,) or (atoms, dim)")
        if not np.all(np.isfinite(v)):
            raise ValueError("function values must be finite")
        if norm_kind not in ("euclidean", "max"):
            raise ValueError(f"unknown norm kind {norm_kind!r}")
        self.values = v
        self.norm_kind = norm_kind

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.values.shape[0]

    @property
    def scalar(self) -> bool:
        return self.dim == 1

    def norms(self) -> np.ndarray:
        if self.norm_kind == "euclidean":
            return np.linalg.norm(self.values, axis=1)
        return np.abs(self.values).max(axis=1)

    def norm_of(self, vec) -> float:
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        if self.norm_kind == "euclidean":
            return float(np.linalg.norm(vec))
        return float(np.abs(vec).max())

    def to_json(self) -> str:
        return json.dumps({
            "dim": self.dim,
            "norm": self.norm_kind,
            "values": [[float(x) for x in row] for row in self.values],
        })

    @classmethod
    def from_json(cls, text: str) -> "VecFunction":
        doc = json.loads(text)
        f = cls(np.asarray(doc["values"], dtype=float), doc["norm"])
        if f.dim != doc["dim"]:
            raise ValueError("dim field does not match values")
        return f


# -- averages and oscillations -------------------------------------------------


def average(f: VecFunction, members, p: Params, mode: str = "plain",
            basis: BallBasis | None = None) -> float:
    """Fractional mean <f>_B = mu(B)^(-rho) (int_B ||f||^r)^varrho.

    mode="sup" maximizes over all basis balls containing the set.
    """
    arr = as_atom_array(members)
    if arr.size == 0:
        raise EmptySet("average over an empty set")
    if mode == "plain":
        w = basis.space.weights if basis is not None else None
        if w is None:
            raise ValueError("plain average needs the basis for weights")
        mass = float((f.norms()[arr] ** p.r * w[arr]).sum())
        mu = float(w[arr].sum())
        return mu ** (-p.rho) * mass ** p.varrho
    if mode == "sup":
        if basis is None:
            raise ValueError("sup mode needs the basis")
        ids = basis.balls_containing_set(arr)
        if ids.size == 0:
            raise EmptySet("no basis ball contains the set")
        return max(average(f, basis.balls[i].members, p, "plain", basis) for i in ids)
    raise ValueError(f"unknown mode {mode!r}")


def ball_averages_all(f: VecFunction, basis: BallBasis, p: Params) -> np.ndarray:
    """<f>_B for every basis ball at once."""
    mass = f.norms() ** p.r * basis.space.weights
    if basis.interval:
        pre = np.concatenate([[0.0], np.cumsum(mass)])
        ints = pre[basis.hi + 1] - pre[basis.lo]
    else:
        ints = basis.member_matrix() @ mass
    ints = np.maximum(ints, 0.0)
    return basis.mu ** (-p.rho) * ints ** p.varrho


def oscillation_stats(f: VecFunction, members) -> tuple[float, float, float]:
    """(OSC_B, SUP_B, INF_B) of f over the set."""
    arr = as_atom_array(members)
    if arr.size == 0:
        raise EmptySet("oscillation over an empty set")
    norms = f.norms()[arr]
    sup, inf = float(norms.max()), float(norms.min())
    vals = f.values[arr]
    if f.scalar:
        osc = float(vals.max() - vals.min())
    else:
        osc = 0.0
        for i in range(len(arr)):
            diffs = vals[i + 1:] - vals[i]
            if len(diffs):
                if f.norm_kind == "euclidean":
                    osc = max(osc, float(np.linalg.norm(diffs, axis=1).max()))
                else:
                    osc = max(osc, float(np.abs(diffs).max()))
    return osc, sup, inf


def mean_oscillation(f: VecFunction, members, r: float, mode: str = "sharp",
                     basis: BallBasis | None = None):
    """f_B (mode=mean), <f>_{#,B} (sharp) or its sup over containing balls."""
    if r < 1:
        raise ValueError("mean oscillation needs r >= 1")
    arr = as_atom_array(members)
    if arr.size == 0:
        raise EmptySet("mean oscillation over an empty set")
    if basis is None:
        raise ValueError("needs the basis for weights")
    w = basis.space.weights[arr]
    mu = float(w.sum())
    mean = (f.values[arr] * w[:, None]).sum(axis=0) / mu
    if mode == "mean":
        return mean
    if mode == "sharp":
        dev = f.values[arr] - mean
        if f.norm_kind == "euclidean":
            d = np.linalg.norm(dev, axis=1)
        else:
            d = np.abs(dev).max(axis=1)
        return float(((d ** r * w).sum() / mu) ** (1.0 / r))
    if mode == "sup_sharp":
        ids = basis.balls_containing_set(arr)
        return max(mean_oscillation(f, basis.balls[i].members, r, "sharp", basis)
                   for i in ids)
    raise ValueError(f"unknown mode {mode!r}")


# -- alpha-oscillation and medians ---------------------------------------------


def _subset_table(m: int) -> np.ndarray:
    idx = np.arange(1 << m, dtype=np.int64)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(bool)


def _exhaustive_alpha_osc(f: VecFunction, arr, w, alpha: float) -> float:
    m = len(arr)
    if m > 20:
        raise OracleTooLarge(f"exhaustive oracle limited to 20 atoms, got {m}")
    S = _subset_table(m)
    masses = S @ w
    need = alpha * w.sum()
    ok = masses > need
    vals = f.values[arr]
    if f.scalar:
        v = vals[:, 0]
        mx = np.where(S, v, -np.inf).max(axis=1)
        mn = np.where(S, v, np.inf).min(axis=1)
        osc = mx - mn
    else:
        osc = np.zeros(len(S))
        for i in range(m):
            for j in range(i + 1, m):
                d = f.norm_of(vals[i] - vals[j])
                both = S[:, i] & S[:, j]
                osc[both] = np.maximum(osc[both], d)
    if not ok.any():
        raise EmptySet("no subset exceeds the alpha mass threshold")
    return float(osc[ok].min())


def alpha_oscillation(f: VecFunction, members, alpha: float,
                      basis: BallBasis | None = None, method: str = "auto") -> float:
    """OSC_{B,alpha}: smallest oscillation on a subset of mass > alpha*mu(B)."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0,1)")
    arr = as_atom_array(members)
    if arr.size == 0:
        raise EmptySet("alpha-oscillation over an empty set")
    if basis is None:
        raise ValueError("needs the basis for weights")
    w = basis.space.weights[arr]
    if method == "exhaustive" or (method == "auto" and not f.scalar):
        return _exhaustive_alpha_osc(f, arr, w, alpha)
    best = alpha_oscillation_raw(f, arr, w, alpha)
    if math.isinf(best):
        raise EmptySet("no subset exceeds the alpha mass threshold")
    return best


def alpha_core(f: VecFunction, members, alpha: float, basis: BallBasis,
               slack: float = 1.0) -> tuple[np.ndarray, float]:
    """An achieving set for the alpha-oscillation: atoms of mass exceeding
    alpha*mu(B) whose oscillation is at most slack*OSC_{B,alpha}(f).

    With slack = 1 the minimal window is returned (oscillation exactly the
    alpha-oscillation); larger slack returns the maximal-mass qualifying set,
    so constants pick up their full support.  Returns (atoms, OSC_{B,alpha}).
    """
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0,1)")
    if slack < 1.0:
        raise ValueError("slack must be at least 1")
    arr = as_atom_array(members)
    if arr.size == 0:
        raise EmptySet("alpha-core over an empty set")
    w = basis.space.weights[arr]
    if not f.scalar:
        m = len(arr)
        if m > 20:
            raise OracleTooLarge(f"exhaustive core limited to 20 atoms, got {m}")
        target = _exhaustive_alpha_osc(f, arr, w, alpha)
        S = _subset_table(m)
        masses = S @ w
        ok = masses > alpha * w.sum()
        vals = f.values[arr]
        osc = np.zeros(len(S))
        for i in range(m):
            for j in range(i + 1, m):
                d = f.norm_of(vals[i] - vals[j])
                both = S[:, i] & S[:, j]
                osc[both] = np.maximum(osc[both], d)
        hits = np.flatnonzero(ok & (osc <= slack * target + 1e-15))
        pick = int(hits[np.argmax(masses[hits])])
        return arr[S[pick]], float(target)
    v = f.values[arr, 0]
    order = np.argsort(v, kind="stable")
    sv, sw = v[order], w[order]
    pre = np.concatenate([[0.0], np.cumsum(sw)])
    need = alpha * pre[-1]
    best = math.inf
    j = 0
    for i in range(len(sv)):
        j = max(j, i)
        while j < len(sv) and pre[j + 1] - pre[i] <= need:
            j += 1
        if j == len(sv):
            break
        best = min(best, float(sv[j] - sv[i]))
    if math.isinf(best):
        raise EmptySet("no subset exceeds the alpha mass threshold")
    # widest-mass window of width slack*best (first such window on ties)
    width = slack * best
    best_mass = -1.0
    best_ij = None
    j = 0
    for i in range(len(sv)):
        j = max(j, i)
        while j + 1 < len(sv) and sv[j + 1] - sv[i] <= width + 1e-15:
            j += 1
        mass = pre[j + 1] - pre[i]
        if mass > need and mass > best_mass + 1e-15:
            best_mass = mass
            best_ij = (i, j)
    i, j = best_ij
    return np.sort(arr[order[i:j + 1]]), best


def _scalar_median_set(f: VecFunction, arr, w) -> np.ndarray:
    osc0 = 2.0 * alpha_oscillation_raw(f, arr, w, 0.5)
    v = f.values[arr, 0]
    order = np.argsort(v, kind="stable")
    sv, sw = v[order], w[order]
    pre = np.concatenate([[0.0], np.cumsum(sw)])
    half = 0.5 * pre[-1]
    marked = np.zeros(len(arr), dtype=bool)
    j = 0
    for i in range(len(sv)):
        j = max(j, i)
        while j + 1 < len(sv) and sv[j + 1] - sv[i] <= osc0:
            j += 1
        if pre[j + 1] - pre[i] > half:
            marked[order[i:j + 1]] = True
    return arr[marked]


def alpha_oscillation_raw(f: VecFunction, arr, w, alpha: float) -> float:
    """Fast-path alpha-oscillation on pre-resolved atoms/weights (scalar f)."""
    v = f.values[arr, 0]
    order = np.argsort(v, kind="stable")
    sv, sw = v[order], w[order]
    pre = np.concatenate([[0.0], np.cumsum(sw)])
    need = alpha * pre[-1]
    best = math.inf
    j = 0
    for i in range(len(sv)):
        j = max(j, i)
        while j < len(sv) and pre[j + 1] - pre[i] <= need:
            j += 1
        if j == len(sv):
            break
        best = min(best, float(sv[j] - sv[i]))
    return best


def median(f: VecFunction, members, basis: BallBasis,
           method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Median core M_f(B) plus a deterministic representative value.

    M_f(B) is the union of all E inside B with mu(E) > mu(B)/2 and
    OSC_E(f) <= 2 OSC_{B,1/2}(f); the representative is f at the lowest
    member id.
    """
    arr = as_atom_array(members)
    if arr.size == 0:
        raise EmptySet("median over an empty set")
    w = basis.space.weights[arr]
    if method == "exhaustive" or (method == "auto" and not f.scalar):
        m = len(arr)
        if m > 20:
            raise OracleTooLarge(f"exhaustive median limited to 20 atoms, got {m}")
        osc0 = 2.0 * _exhaustive_alpha_osc(f, arr, w, 0.5)
        S = _subset_table(m)
        masses = S @ w
        ok = masses > 0.5 * w.sum()
        vals = f.values[arr]
        if f.scalar:
            v = vals[:, 0]
            osc = np.where(S, v, -np.inf).max(axis=1) - np.where(S, v, np.inf).min(axis=1)
            osc = np.where(np.isfinite(osc), osc, 0.0)
        else:
            osc = np.zeros(len(S))
            for i in range(m):
                for j in range(i + 1, m):
                    d = f.norm_of(vals[i] - vals[j])
                    both = S[:, i] & S[:, j]
                    osc[both] = np.maximum(osc[both], d)
        qual = ok & (osc <= osc0)
        marked = S[qual].any(axis=0) if qual.any() else np.zeros(m, dtype=bool)
        med = arr[marked]
    else:
        med = _scalar_median_set(f, arr, w)
    if len(med) == 0:
        raise EmptySet("median core came out empty")
    rep = f.values[int(med.min())].copy()
    return med, rep


# -- BMO and maximal functions --------------------------------------------------


def bmo_norm(f: VecFunction, basis: BallBasis) -> float:
    """sup over balls of (1/mu(B)) int_B ||f - f_B||."""
    w = basis.space.weights
    best = 0.0
    for b in basis.balls:
        if basis.interval:
            sl = slice(int(basis.lo[b.id]), int(basis.hi[b.id]) + 1)
            vals, ww = f.values[sl], w[sl]
        else:
            vals, ww = f.values[b.members], w[b.members]
        mu = ww.sum()
        mean = (vals * ww[:, None]).sum(axis=0) / mu
        dev = vals - mean
        if f.norm_kind == "euclidean":
            d = np.linalg.norm(dev, axis=1)
        else:
            d = np.abs(dev).max(axis=1)
        best = max(best, float((d * ww).sum() / mu))
    return best


def sharp_all(f: VecFunction, basis: BallBasis, r: float = 1.0) -> np.ndarray:
    """<f>_{#,B} for every basis ball."""
    w = basis.space.weights
    out = np.empty(basis.n_balls)
    for i in range(basis.n_balls):
        if basis.interval:
            sl = slice(int(basis.lo[i]), int(basis.hi[i]) + 1)
            vals, ww = f.values[sl], w[sl]
        else:
            members = basis.balls[i].members
            vals, ww = f.values[members], w[members]
        mu = ww.sum()
        mean = (vals * ww[:, None]).sum(axis=0) / mu
        dev = vals - mean
        if f.norm_kind == "euclidean":
            d = np.linalg.norm(dev, axis=1)
        else:
            d = np.abs(dev).max(axis=1)
        out[i] = ((d ** r * ww).sum() / mu) ** (1.0 / r)
    return out


def sup_sharp_all(f: VecFunction, basis: BallBasis, r: float = 1.0) -> np.ndarray:
    """<f>*_{#,B} = max over balls A containing B of <f>_{#,A}, per ball."""
    sharp = sharp_all(f, basis, r)
    out = np.empty(basis.n_balls)
    for i in range(basis.n_balls):
        ids = basis.supersets(i)
        out[i] = sharp[ids].max()
    return out


def maximal(f: VecFunction, basis: BallBasis, p: Params | None = None,
            mode: str = "fractional_basis", alpha: float | None = None) -> np.ndarray:
    """Per-atom sup over containing balls of a ball functional.

    fractional_basis: sup <f>_B; sharp: sup <f>_{#,B} (exponent p.r);
    alpha: sup mu(B)^(alpha-1) int_B ||f|| (grid dimension 1).
    """
    w = basis.space.weights
    out = np.zeros(basis.n_atoms)
    if mode == "fractional_basis":
        if p is None:
            raise ValueError("fractional_basis mode needs Params")
        vals = ball_averages_all(f, basis, p)
    elif mode == "alpha":
        if alpha is None or not (0 <= alpha < 1):
            raise ValueError("alpha mode needs 0 <= alpha < dimension (=1)")
        mass = f.norms() * w
        if basis.interval:
            pre = np.concatenate([[0.0], np.cumsum(mass)])
            ints = pre[basis.hi + 1] - pre[basis.lo]
        else:
            ints = basis.member_matrix() @ mass
        vals = basis.mu ** (alpha - 1.0) * ints
    elif mode == "sharp":
        r = p.r if p is not None else 1.0
        vals = sharp_all(f, basis, r)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if basis.interval:
        for i in range(basis.n_balls):
            sl = slice(int(basis.lo[i]), int(basis.hi[i]) + 1)
            np.maximum(out[sl], vals[i], out=out[sl])
    else:
        for b in basis.balls:
            np.maximum(out[b.members], vals[b.id], out=out[b.members])
    return out


# -- omega-regular families ------------------------------------------------------


@dataclass
class RegularFamily:
    basis: BallBasis
    kernels: np.ndarray      # n_balls x n_atoms, each row has weighted mass 1
    omega: object            # callable modulus
    omega_name: str
    omega_norm: float        # 1 + int_0^1 omega(t) log(1/t)/t dt
    c1: float
    c2: float
    growth_measured: float   # minimal multiplier in condition (2) against gamma(u)=u

    def gamma_growth(self, u: float) -> float:
        return (1.0 + self.basis.K) ** 2 * u


def cover_measure_table(basis: BallBasis) -> np.ndarray:
    """table[a, b] = min measure of a ball covering the span [a, b] (interval bases)."""
    cached = getattr(basis, "_cover_table", None)
    if cached is not None:
        return cached
    if not basis.interval:
        raise ValueError("cover table only defined for interval bases")
    n = basis.n_atoms
    table = np.full((n, n), np.inf)
    by_lo = [[] for _ in range(n)]
    for i in range(basis.n_balls):
        by_lo[int(basis.lo[i])].append(i)
    m_hi = np.full(n, np.inf)
    for a in range(n):
        for i in by_lo[a]:
            h = int(basis.hi[i])
            if basis.mu[i] < m_hi[h]:
                m_hi[h] = basis.mu[i]
        # suffix-min over hi >= b of min measure among balls with lo <= a
        table[a] = np.minimum.accumulate(m_hi[::-1])[::-1]
    basis._cover_table = table
    return table


def volume_distance_matrix(basis: BallBasis) -> np.ndarray:
    """d(x, B) for every atom x (columns) and ball B (rows)."""
    cached = getattr(basis, "_vdist_matrix", None)
    if cached is not None:
        return cached
    n = basis.n_atoms
    out = np.empty((basis.n_balls, n))
    if basis.interval:
        table = cover_measure_table(basis)
        xs = np.arange(n)
        for i in range(basis.n_balls):
            a = np.minimum(xs, basis.lo[i])
            b = np.maximum(xs, basis.hi[i])
            out[i] = table[a, b]
    else:
        from .space import volume_distance
        for i in range(basis.n_balls):
            out[i] = [volume_distance(basis, x, i) for x in range(n)]
    basis._vdist_matrix = out
    return out


def omega_norm(omega, samples=(1e-6, 1e-9, 1e-12)) -> float:
    """1 + int_0^1 omega(t) log(1/t)/t dt, with a numeric divergence guard."""
    def integrand(t):
        return omega(t) * math.log(1.0 / t) / t
    vals = []
    for eps in samples:
        v, _ = quad(integrand, eps, 1.0, limit=200)
        vals.append(v)
    if vals[-1] - vals[0] > 1e-2 * max(1.0, abs(vals[0])):
        raise ValueError("omega norm diverges: ||omega|| = inf")
    return 1.0 + vals[-1]


def build_regular_family(basis: BallBasis, omega=None, omega_name: str = "t") -> RegularFamily:
    """Poisson-type kernels psi_B(x) = mu(B)/(mu(B)+d(x,B))^2, normalized.

    All three regularity conditions are re-verified numerically; violations
    raise RegularityViolation with a witness.
    """
    if basis.eta is None:
        raise NotDoubling("regular families need a doubling basis")
    if omega is None:
        omega = lambda t: t
    norm_w = omega_norm(omega)

    dmat = volume_distance_matrix(basis)
    w = basis.space.weights
    raw = basis.mu[:, None] / (basis.mu[:, None] + dmat) ** 2
    masses = raw @ w
    kernels = raw / masses[:, None]

    # condition (1): unit mass (by construction; assert anyway)
    if not np.allclose(kernels @ w, 1.0, rtol=1e-10, atol=1e-12):
        raise RegularityViolation("kernel mass differs from 1", witness=None)

    # condition (y4): c1 1_B/mu(B) <= phi_B <= c2 omega(mu(B)/d)/d
    c1 = math.inf
    c2 = 0.0
    for i in range(basis.n_balls):
        members = basis.balls[i].members
        c1 = min(c1, float((kernels[i, members] * basis.mu[i]).min()))
        envelope = np.array([omega(basis.mu[i] / d) / d for d in dmat[i]])
        if np.any(envelope <= 0):
            raise RegularityViolation("zero envelope", witness=(i,))
        c2 = max(c2, float((kernels[i] / envelope).max()))
    if c1 <= 0:
        raise RegularityViolation("lower kernel bound failed", witness=None)

    # condition (2): phi_B <= (1+K)^2 (mu(A)/mu(B)) phi_A for B inside A
    growth = 0.0
    bound = (1.0 + basis.K) ** 2
    for i in range(basis.n_balls):
        for j in basis.supersets(i):
            j = int(j)
            if j == i:
                continue
            u = basis.mu[j] / basis.mu[i]
            ratio = float(np.max(kernels[i] / (u * kernels[j])))
            growth = max(growth, ratio)
            if ratio > bound * (1 + 1e-9):
                raise RegularityViolation("growth condition failed",
                                          witness=(i, j, ratio))
    return RegularFamily(basis=basis, kernels=kernels, omega=omega,
                         omega_name=omega_name, omega_norm=float(norm_w),
                         c1=float(c1), c2=float(c2), growth_measured=float(growth))


def general_maximal(f: VecFunction, fam: RegularFamily, complete=None,
                    eta_complete: float = 1.0) -> np.ndarray:
    """M^{phi,G} f(x) = sup over B in complete(x) of int ||f|| phi_B."""
    basis = fam.basis
    w = basis.space.weights
    vals = fam.kernels @ (f.norms() * w)
    out = np.full(basis.n_atoms, -np.inf)
    if complete is None:
        if basis.interval:
            for i in range(basis.n_balls):
                sl = slice(int(basis.lo[i]), int(basis.hi[i]) + 1)
                np.maximum(out[sl], vals[i], out=out[sl])
        else:
            for b in basis.balls:
                np.maximum(out[b.members], vals[b.id], out=out[b.members])
        return out
    for x in range(basis.n_atoms):
        ids = [int(i) for i in complete[x]]
        for i in ids:
            if x not in basis.balls[i]:
                raise IncompleteFamily(f"ball {i} in complete({x}) misses the atom")
        for a in basis.balls_containing_atom(x):
            if not any(basis.contains(int(a), i)
                       and basis.mu[i] <= eta_complete * basis.mu[int(a)] * (1 + 1e-12)
                       for i in ids):
                raise IncompleteFamily(
                    f"no eta-dominating member of complete({x}) covers ball {int(a)}")
        out[x] = max(vals[i] for i in ids)
    return out
